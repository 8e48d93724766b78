use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no point address: the empty word names the whole space")]
    EmptyWord,

    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("state {state} outside state space {space}")]
    StateOutOfSpace { state: String, space: String },

    #[error("unknown geometry `{0}`")]
    UnknownGeometry(String),

    /// A de Rham matrix family violates one of the validity conditions.
    #[error("condition {condition} fails for matrix {index}: {detail}")]
    Condition {
        condition: &'static str,
        index: usize,
        detail: String,
    },

    #[error("pole of linear fractional transform at z = {0}")]
    Pole(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("no convergence after {iterations} sweeps (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("energy measure undefined (zero energy)")]
    ZeroEnergy,

    #[error("divergent input: {0}")]
    Divergent(String),

    #[error("method `{method}` not applicable: {reason}")]
    Inapplicable { method: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable short tag for machine-readable error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyWord => "empty_word",
            Error::SymbolOutOfRange { .. } => "symbol_out_of_range",
            Error::NotProbability(_) => "not_probability",
            Error::Config(_) => "config",
            Error::StateOutOfSpace { .. } => "state_out_of_space",
            Error::UnknownGeometry(_) => "unknown_geometry",
            Error::Condition { .. } => "condition",
            Error::Pole(_) => "pole",
            Error::Budget(_) => "budget",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Consistency(_) => "consistency",
            Error::NotConverged { .. } => "not_converged",
            Error::ZeroEnergy => "zero_energy",
            Error::Divergent(_) => "divergent",
            Error::Inapplicable { .. } => "inapplicable",
        }
    }
}
