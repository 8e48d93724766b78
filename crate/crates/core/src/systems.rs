//! Driven systems `(N, Y, G_i, H_i)` and the built-in families.

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::derham::DeRhamSystem;
use crate::error::{Error, Result};
use crate::rational::{int, rat, to_f64};
use crate::symbolic::{geometry_for, GeometryKind, IfsGeometry};

/// Sum-to-one and state-membership tolerance for floating evaluation.
pub const STEP_TOLERANCE: f64 = 1e-10;

/// A point of the state space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum State {
    Scalar(f64),
    Circle([f64; 2]),
    PosInf,
}

impl State {
    /// Scalar view; `+∞` maps to `f64::INFINITY`, circle states have none.
    pub fn scalar(&self) -> Option<f64> {
        match self {
            State::Scalar(x) => Some(*x),
            State::PosInf => Some(f64::INFINITY),
            State::Circle(_) => None,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Scalar(x) => write!(f, "{x}"),
            State::Circle([a, b]) => write!(f, "{a};{b}"),
            State::PosInf => write!(f, "+inf"),
        }
    }
}

impl Serialize for State {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            State::Scalar(x) if x.is_finite() => s.serialize_f64(*x),
            State::Circle(v) => v.serialize(s),
            _ => s.serialize_str(&self.to_string()),
        }
    }
}

/// Exact counterpart of [`State`] for rational systems.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExactState {
    Finite(BigRational),
    PosInf,
}

impl ExactState {
    pub fn to_state(&self) -> State {
        match self {
            ExactState::Finite(q) => State::Scalar(to_f64(q)),
            ExactState::PosInf => State::PosInf,
        }
    }
}

impl fmt::Display for ExactState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExactState::Finite(q) => write!(f, "{q}"),
            ExactState::PosInf => write!(f, "+inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpace {
    /// `[lo, hi]`; `hi = +∞` means the endpoint `+∞` itself is a state.
    Interval { lo: f64, hi: f64 },
    Circle,
    Finite { points: Vec<f64> },
    /// The real line; states may run off to `±∞` numerically.
    RealLine,
}

impl StateSpace {
    pub fn contains(&self, y: &State) -> bool {
        let tol = STEP_TOLERANCE;
        match (self, y) {
            (StateSpace::Interval { lo, hi }, State::Scalar(x)) => {
                x.is_finite() && *x >= lo - tol && *x <= hi + tol
            }
            (StateSpace::Interval { hi, .. }, State::PosInf) => hi.is_infinite(),
            (StateSpace::Circle, State::Circle([a, b])) => ((a * a + b * b).sqrt() - 1.0).abs() <= tol,
            (StateSpace::Finite { points }, State::Scalar(x)) => {
                points.iter().any(|p| (p - x).abs() <= 1e-12)
            }
            (StateSpace::RealLine, State::Scalar(x)) => !x.is_nan(),
            _ => false,
        }
    }
}

impl fmt::Display for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpace::Interval { lo, hi } if hi.is_infinite() => write!(f, "[{lo}, +inf]"),
            StateSpace::Interval { lo, hi } => write!(f, "[{lo}, {hi}]"),
            StateSpace::Circle => write!(f, "S^1"),
            StateSpace::Finite { points } => write!(f, "{points:?}"),
            StateSpace::RealLine => write!(f, "R"),
        }
    }
}

/// Floating evaluation of the driving data.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn alphabet_size(&self) -> usize;
    fn space(&self) -> StateSpace;
    /// `(G_0(y), …, G_{N−1}(y))`.
    fn probabilities(&self, y: &State) -> Vec<f64>;
    /// `H_i(y)`.
    fn transition(&self, i: usize, y: &State) -> State;
    fn exact(&self) -> Option<&dyn ExactDynamics> {
        None
    }
}

/// Rational evaluation for systems whose maps preserve `Q ∪ {+∞}`.
pub trait ExactDynamics: Send + Sync {
    fn probabilities_exact(&self, y: &ExactState) -> Result<Vec<BigRational>>;
    fn transition_exact(&self, i: usize, y: &ExactState) -> Result<ExactState>;
}

/// What a system was built from; used to decide which closed forms apply.
#[derive(Clone, Debug)]
pub enum SystemMeta {
    Adf,
    Kusuoka,
    DeRham(Arc<DeRhamSystem>),
    Linear(Vec<f64>),
    Hata { h_modulus_sq: f64, alpha_modulus_sq: f64 },
    Toy(String),
}

#[derive(Clone, Debug)]
pub struct DrivenSystem {
    pub label: String,
    pub dynamics: Arc<dyn Dynamics>,
    pub initial: State,
    pub initial_exact: Option<ExactState>,
    pub geometry: IfsGeometry,
    pub meta: SystemMeta,
}

impl DrivenSystem {
    pub fn alphabet_size(&self) -> usize {
        self.dynamics.alphabet_size()
    }

    pub fn space(&self) -> StateSpace {
        self.dynamics.space()
    }

    pub fn exact(&self) -> Option<&dyn ExactDynamics> {
        self.dynamics.exact()
    }

    /// The same system started from another state.
    pub fn with_initial(&self, y: State) -> Result<Self> {
        self.check_state(&y)?;
        let mut out = self.clone();
        out.initial = y;
        out.initial_exact = None;
        Ok(out)
    }

    pub fn with_initial_exact(&self, y: ExactState) -> Result<Self> {
        self.check_state(&y.to_state())?;
        let mut out = self.clone();
        out.initial = y.to_state();
        out.initial_exact = Some(y);
        Ok(out)
    }

    pub fn check_state(&self, y: &State) -> Result<()> {
        let space = self.space();
        if space.contains(y) {
            Ok(())
        } else {
            Err(Error::StateOutOfSpace { state: y.to_string(), space: space.to_string() })
        }
    }

    /// Validated `G` vector at `y`.
    pub fn probabilities(&self, y: &State) -> Result<Vec<f64>> {
        self.check_state(y)?;
        let p = self.dynamics.probabilities(y);
        check_probability_vector(&p, self.alphabet_size())?;
        Ok(p)
    }

    /// Validated `H_i(y)`.
    pub fn transition(&self, i: usize, y: &State) -> Result<State> {
        let n = self.alphabet_size();
        if i >= n {
            return Err(Error::SymbolOutOfRange { symbol: i, alphabet: n });
        }
        self.check_state(y)?;
        let next = self.dynamics.transition(i, y);
        self.check_state(&next)?;
        Ok(next)
    }
}

pub(crate) fn check_probability_vector(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::NotProbability(format!("expected {n} entries, got {}", p.len())));
    }
    let total: f64 = p.iter().sum();
    if !total.is_finite()
        || (total - 1.0).abs() > STEP_TOLERANCE
        || p.iter().any(|&x| !(-1e-12..=1.0 + 1e-12).contains(&x))
    {
        return Err(Error::NotProbability(format!("{p:?} sums to {total}")));
    }
    Ok(())
}

/// One step of the driving data at `y`: the `G` vector and `H_i(y)`.
pub fn evaluate_step(system: &DrivenSystem, y: &State, i: usize) -> Result<(Vec<f64>, State)> {
    let p = system.probabilities(y)?;
    let next = system.transition(i, y)?;
    Ok((p, next))
}

fn two(p0: f64) -> Vec<f64> {
    vec![p0, 1.0 - p0]
}

fn two_exact(p0: BigRational) -> Vec<BigRational> {
    let p1 = BigRational::one() - &p0;
    vec![p0, p1]
}

fn finite(y: &ExactState) -> Result<&BigRational> {
    match y {
        ExactState::Finite(q) => Ok(q),
        ExactState::PosInf => Err(Error::StateOutOfSpace {
            state: "+inf".into(),
            space: "finite states".into(),
        }),
    }
}

fn scalar(y: &State) -> f64 {
    y.scalar().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------- ADF

#[derive(Debug)]
struct Adf;

impl Dynamics for Adf {
    fn alphabet_size(&self) -> usize {
        2
    }
    fn space(&self) -> StateSpace {
        StateSpace::Interval { lo: 0.0, hi: 1.0 }
    }
    fn probabilities(&self, y: &State) -> Vec<f64> {
        two((2.0 + scalar(y)) / 5.0)
    }
    fn transition(&self, i: usize, y: &State) -> State {
        let y = scalar(y);
        State::Scalar(if i == 0 { (1.0 + 2.0 * y) / (2.0 + y) } else { y / (3.0 - y) })
    }
    fn exact(&self) -> Option<&dyn ExactDynamics> {
        Some(self)
    }
}

impl ExactDynamics for Adf {
    fn probabilities_exact(&self, y: &ExactState) -> Result<Vec<BigRational>> {
        Ok(two_exact((int(2) + finite(y)?) / int(5)))
    }
    fn transition_exact(&self, i: usize, y: &ExactState) -> Result<ExactState> {
        let y = finite(y)?;
        let next = if i == 0 {
            (int(1) + int(2) * y) / (int(2) + y)
        } else {
            y / (int(3) - y)
        };
        Ok(ExactState::Finite(next))
    }
}

pub fn make_adf(y0: f64) -> Result<DrivenSystem> {
    if !(0.0..=1.0).contains(&y0) {
        return Err(Error::Config(format!("adf initial state {y0} outside [0, 1]")));
    }
    Ok(adf_system(State::Scalar(y0), None))
}

pub fn make_adf_exact(y0: BigRational) -> Result<DrivenSystem> {
    if y0.is_negative() || y0 > BigRational::one() {
        return Err(Error::Config(format!("adf initial state {y0} outside [0, 1]")));
    }
    Ok(adf_system(State::Scalar(to_f64(&y0)), Some(ExactState::Finite(y0))))
}

fn adf_system(initial: State, initial_exact: Option<ExactState>) -> DrivenSystem {
    DrivenSystem {
        label: "adf".into(),
        dynamics: Arc::new(Adf),
        initial,
        initial_exact,
        geometry: geometry_for(GeometryKind::Interval(2)),
        meta: SystemMeta::Adf,
    }
}

// ---------------------------------------------------------------- Kusuoka

/// The three Kusuoka matrices, row-major.
pub fn kusuoka_matrices() -> [[[f64; 2]; 2]; 3] {
    let s = 3f64.sqrt() / 10.0;
    [
        [[0.6, 0.0], [0.0, 0.2]],
        [[0.3, s], [s, 0.5]],
        [[0.3, -s], [-s, 0.5]],
    ]
}

#[derive(Debug)]
struct Kusuoka {
    a: [[[f64; 2]; 2]; 3],
}

impl Kusuoka {
    fn apply(&self, i: usize, y: &State) -> [f64; 2] {
        let v = match y {
            State::Circle(v) => *v,
            _ => [f64::NAN, f64::NAN],
        };
        let m = &self.a[i];
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }
}

impl Dynamics for Kusuoka {
    fn alphabet_size(&self) -> usize {
        3
    }
    fn space(&self) -> StateSpace {
        StateSpace::Circle
    }
    fn probabilities(&self, y: &State) -> Vec<f64> {
        (0..3)
            .map(|i| {
                let w = self.apply(i, y);
                5.0 / 3.0 * (w[0] * w[0] + w[1] * w[1])
            })
            .collect()
    }
    fn transition(&self, i: usize, y: &State) -> State {
        let w = self.apply(i, y);
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        State::Circle([w[0] / norm, w[1] / norm])
    }
}

pub fn make_kusuoka(y0: [f64; 2]) -> Result<DrivenSystem> {
    let norm = (y0[0] * y0[0] + y0[1] * y0[1]).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("kusuoka initial state {y0:?} is not a unit vector")));
    }
    Ok(DrivenSystem {
        label: "kusuoka".into(),
        dynamics: Arc::new(Kusuoka { a: kusuoka_matrices() }),
        initial: State::Circle(y0),
        initial_exact: None,
        geometry: geometry_for(GeometryKind::Gasket),
        meta: SystemMeta::Kusuoka,
    })
}

/// Coordinates of a harmonic function on the gasket in the basis
/// `h_1 = (0, √2, √2)`, `h_2 = (0, √(2/3), −√(2/3))` after removing the
/// constant part, as a unit vector with first nonzero coordinate positive.
pub fn harmonic_direction(boundary: [f64; 3]) -> Result<[f64; 2]> {
    let [f0, f1, f2] = boundary;
    let v1 = (f1 + f2 - 2.0 * f0) / (2.0 * 2f64.sqrt());
    let v2 = (f1 - f2) / (2.0 * (2.0f64 / 3.0).sqrt());
    let norm = (v1 * v1 + v2 * v2).sqrt();
    let scale = f0.abs().max(f1.abs()).max(f2.abs());
    if !norm.is_finite() || norm <= 1e-14 * scale.max(f64::MIN_POSITIVE) || norm == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let (mut a, mut b) = (v1 / norm, v2 / norm);
    let lead = if a.abs() > 1e-15 { a } else { b };
    if lead < 0.0 {
        a = -a;
        b = -b;
    }
    Ok([a + 0.0, b + 0.0])
}

pub fn make_kusuoka_from_harmonic(boundary: [f64; 3]) -> Result<DrivenSystem> {
    make_kusuoka(harmonic_direction(boundary)?)
}

// ---------------------------------------------------------------- linear

#[derive(Debug)]
struct Linear {
    weights: Vec<f64>,
    exact: Option<Vec<BigRational>>,
}

impl Dynamics for Linear {
    fn alphabet_size(&self) -> usize {
        self.weights.len()
    }
    fn space(&self) -> StateSpace {
        StateSpace::Finite { points: vec![0.0] }
    }
    fn probabilities(&self, _y: &State) -> Vec<f64> {
        self.weights.clone()
    }
    fn transition(&self, _i: usize, y: &State) -> State {
        *y
    }
    fn exact(&self) -> Option<&dyn ExactDynamics> {
        self.exact.as_ref().map(|_| self as &dyn ExactDynamics)
    }
}

impl ExactDynamics for Linear {
    fn probabilities_exact(&self, _y: &ExactState) -> Result<Vec<BigRational>> {
        Ok(self.exact.clone().unwrap_or_default())
    }
    fn transition_exact(&self, _i: usize, y: &ExactState) -> Result<ExactState> {
        Ok(y.clone())
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.len() < 2 {
        return Err(Error::Config("need at least two weights".into()));
    }
    if let Some(w) = weights.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::Config(format!("weight {w} is not strictly positive")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

pub fn make_linear(weights: &[f64]) -> Result<DrivenSystem> {
    check_weights(weights)?;
    Ok(linear_system("linear", weights.to_vec(), None, SystemMeta::Linear(weights.to_vec())))
}

pub fn make_linear_exact(weights: &[BigRational]) -> Result<DrivenSystem> {
    if weights.len() < 2 {
        return Err(Error::Config("need at least two weights".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_positive()) {
        return Err(Error::Config(format!("weight {w} is not strictly positive")));
    }
    let total: BigRational = weights.iter().sum();
    if !total.is_one() {
        return Err(Error::Config(format!("weights sum to {total}, not 1")));
    }
    let floats: Vec<f64> = weights.iter().map(to_f64).collect();
    Ok(linear_system("linear", floats.clone(), Some(weights.to_vec()), SystemMeta::Linear(floats)))
}

fn linear_system(
    label: &str,
    weights: Vec<f64>,
    exact: Option<Vec<BigRational>>,
    meta: SystemMeta,
) -> DrivenSystem {
    let n = weights.len();
    let has_exact = exact.is_some();
    DrivenSystem {
        label: label.into(),
        dynamics: Arc::new(Linear { weights, exact }),
        initial: State::Scalar(0.0),
        initial_exact: has_exact.then(|| ExactState::Finite(BigRational::zero())),
        geometry: geometry_for(GeometryKind::Interval(n)),
        meta,
    }
}

/// The Hata-tree harmonic restriction, which drives a Bernoulli measure with
/// weights `(|h|⁻², 1 − |h|⁻²)` on branches contracted by `|α|²` and
/// `1 − |α|²`. Only the symbolic measure is modelled.
pub fn make_hata(h_modulus_sq: f64, alpha_modulus_sq: f64) -> Result<DrivenSystem> {
    check_hata(h_modulus_sq, alpha_modulus_sq)?;
    let w = 1.0 / h_modulus_sq;
    Ok(linear_system(
        "hata",
        vec![w, 1.0 - w],
        None,
        SystemMeta::Hata { h_modulus_sq, alpha_modulus_sq },
    ))
}

pub(crate) fn check_hata(h_modulus_sq: f64, alpha_modulus_sq: f64) -> Result<()> {
    if !(h_modulus_sq > 1.0 && h_modulus_sq.is_finite()) {
        return Err(Error::Config(format!("|h|^2 = {h_modulus_sq} must exceed 1")));
    }
    if !(alpha_modulus_sq > 0.0 && alpha_modulus_sq < 1.0) {
        return Err(Error::Config(format!("|alpha|^2 = {alpha_modulus_sq} must lie in (0, 1)")));
    }
    Ok(())
}

// ---------------------------------------------------------------- toys

pub const TOY_NAMES: [&str; 5] =
    ["l3_counterexample", "fixedpoint_half", "sqrt_perturbed", "epsilon_escape", "three_state"];

/// Parameters for [`make_toy`]; unused fields are ignored.
#[derive(Clone, Debug, Default)]
pub struct ToyParams {
    pub p: Option<BigRational>,
    pub epsilon: Option<BigRational>,
    pub y0: Option<BigRational>,
}

#[derive(Debug)]
struct L3Counterexample;

fn l3_g0(x: &BigRational) -> BigRational {
    let half = rat(1, 2);
    if x.is_negative() || x > &int(1) {
        rat(1, 6)
    } else if x <= &half {
        x + rat(1, 6)
    } else {
        rat(7, 6) - x
    }
}

impl Dynamics for L3Counterexample {
    fn alphabet_size(&self) -> usize {
        2
    }
    fn space(&self) -> StateSpace {
        StateSpace::RealLine
    }
    fn probabilities(&self, y: &State) -> Vec<f64> {
        let x = scalar(y);
        let g0 = if !(0.0..=1.0).contains(&x) {
            1.0 / 6.0
        } else if x <= 0.5 {
            x + 1.0 / 6.0
        } else {
            7.0 / 6.0 - x
        };
        two(g0)
    }
    fn transition(&self, _i: usize, y: &State) -> State {
        State::Scalar((5.0 - 3.0 * scalar(y)) / 6.0)
    }
    fn exact(&self) -> Option<&dyn ExactDynamics> {
        Some(self)
    }
}

impl ExactDynamics for L3Counterexample {
    fn probabilities_exact(&self, y: &ExactState) -> Result<Vec<BigRational>> {
        Ok(two_exact(l3_g0(finite(y)?)))
    }
    fn transition_exact(&self, _i: usize, y: &ExactState) -> Result<ExactState> {
        Ok(ExactState::Finite((int(5) - int(3) * finite(y)?) / int(6)))
    }
}

#[derive(Debug)]
struct FixedpointHalf;

fn clamp_quarter(x: &BigRational) -> BigRational {
    x.clone().max(rat(1, 4)).min(rat(3, 4))
}

impl Dynamics for FixedpointHalf {
    fn alphabet_size(&self) -> usize {
        2
    }
    fn space(&self) -> StateSpace {
        StateSpace::Interval { lo: 0.0, hi: 1.0 }
    }
    fn probabilities(&self, y: &State) -> Vec<f64> {
        two(scalar(y).clamp(0.25, 0.75))
    }
    fn transition(&self, i: usize, y: &State) -> State {
        let g = scalar(y).clamp(0.25, 0.75);
        State::Scalar(if i == 0 { g } else { 1.0 - g })
    }
    fn exact(&self) -> Option<&dyn ExactDynamics> {
        Some(self)
    }
}

impl ExactDynamics for FixedpointHalf {
    fn probabilities_exact(&self, y: &ExactState) -> Result<Vec<BigRational>> {
        Ok(two_exact(clamp_quarter(finite(y)?)))
    }
    fn transition_exact(&self, i: usize, y: &ExactState) -> Result<ExactState> {
        let g = clamp_quarter(finite(y)?);
        Ok(ExactState::Finite(if i == 0 { g } else { int(1) - g }))
    }
}

#[derive(Debug)]
struct SqrtPerturbed {
    p: f64,
    bound: f64,
}

impl Dynamics for SqrtPerturbed {
    fn alphabet_size(&self) -> usize {
        2
    }
    fn space(&self) -> StateSpace {
        StateSpace::Interval { lo: -self.bound, hi: self.bound }
    }
    fn probabilities(&self, y: &State) -> Vec<f64> {
        two(self.p + scalar(y).abs().sqrt())
    }
    fn transition(&self, _i: usize, y: &State) -> State {
        let a = scalar(y).abs();
        State::Scalar(a / (a + 1.0))
    }
}

#[derive(Debug)]
struct EpsilonEscape {
    epsilon: f64,
}

impl Dynamics for EpsilonEscape {
    fn alphabet_size(&self) -> usize {
        2
    }
    fn space(&self) -> StateSpace {
        StateSpace::RealLine
    }
    fn probabilities(&self, y: &State) -> Vec<f64> {
        two((0.5 - scalar(y).abs()).max(0.0))
    }
    fn transition(&self, i: usize, y: &State) -> State {
        let y = scalar(y);
        State::Scalar(if i == 0 { (1.0 - self.epsilon) * y } else { y / self.epsilon })
    }
}

#[derive(Debug)]
struct ThreeState {
    p: BigRational,
}

impl ThreeState {
    fn g0(&self, j: &BigRational) -> BigRational {
        if j == &int(1) {
            self.p.clone()
        } else {
            rat(1, 2)
        }
    }
}

impl Dynamics for ThreeState {
    fn alphabet_size(&self) -> usize {
        2
    }
    fn space(&self) -> StateSpace {
        StateSpace::Finite { points: vec![0.0, 1.0, 2.0] }
    }
    fn probabilities(&self, y: &State) -> Vec<f64> {
        let j = scalar(y).round();
        two(if j == 1.0 { to_f64(&self.p) } else { 0.5 })
    }
    fn transition(&self, i: usize, y: &State) -> State {
        let j = scalar(y).round();
        State::Scalar(if j == 0.0 { (i + 1) as f64 } else { j })
    }
    fn exact(&self) -> Option<&dyn ExactDynamics> {
        Some(self)
    }
}

impl ExactDynamics for ThreeState {
    fn probabilities_exact(&self, y: &ExactState) -> Result<Vec<BigRational>> {
        Ok(two_exact(self.g0(finite(y)?)))
    }
    fn transition_exact(&self, i: usize, y: &ExactState) -> Result<ExactState> {
        let j = finite(y)?;
        Ok(ExactState::Finite(if j.is_zero() { int(i as i64 + 1) } else { j.clone() }))
    }
}

fn unit_open(name: &str, v: &Option<BigRational>, default: BigRational) -> Result<BigRational> {
    let v = v.clone().unwrap_or(default);
    if !v.is_positive() || v >= int(1) {
        return Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")));
    }
    Ok(v)
}

/// The small examples used to exercise the condition checkers.
pub fn make_toy(name: &str, params: &ToyParams) -> Result<DrivenSystem> {
    let (dynamics, y0): (Arc<dyn Dynamics>, BigRational) = match name {
        "l3_counterexample" => (Arc::new(L3Counterexample), rat(1, 3)),
        "fixedpoint_half" => (Arc::new(FixedpointHalf), rat(1, 2)),
        "sqrt_perturbed" => {
            let p = to_f64(&unit_open("p", &params.p, rat(3, 10))?);
            let m = p.min(1.0 - p);
            (Arc::new(SqrtPerturbed { p, bound: m * m }), int(0))
        }
        "epsilon_escape" => {
            let epsilon = to_f64(&unit_open("epsilon", &params.epsilon, rat(1, 10))?);
            (Arc::new(EpsilonEscape { epsilon }), rat(1, 4))
        }
        "three_state" => {
            let p = unit_open("p", &params.p, rat(1, 3))?;
            if p == rat(1, 2) {
                return Err(Error::Config("three_state needs p != 1/2".into()));
            }
            (Arc::new(ThreeState { p }), int(0))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown toy `{other}` (expected one of {})",
                TOY_NAMES.join(", ")
            )))
        }
    };
    let y0 = params.y0.clone().unwrap_or(y0);
    let exact = dynamics.exact().is_some();
    let system = DrivenSystem {
        label: format!("toy:{name}"),
        initial: State::Scalar(to_f64(&y0)),
        initial_exact: exact.then(|| ExactState::Finite(y0.clone())),
        dynamics,
        geometry: geometry_for(GeometryKind::Interval(2)),
        meta: SystemMeta::Toy(name.into()),
    };
    system.check_state(&system.initial)?;
    Ok(system)
}
