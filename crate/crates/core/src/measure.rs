//! Cylinder masses of `ν_y`, interval masses of `μ_y = ν_y ∘ π⁻¹`, and
//! sampling of `ν_y`-typical paths.
//!
//! Every function reads the starting state from the system
//! (`DrivenSystem::with_initial` changes it).

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::to_f64;
use crate::symbolic::{entropy_unchecked, Word};
use crate::systems::{DrivenSystem, ExactState, State};

/// Longest word accepted by the exact engine.
pub const EXACT_WORD_LIMIT: usize = 64;

fn check_word(system: &DrivenSystem, word: &Word) -> Result<()> {
    if word.alphabet() != system.alphabet_size() {
        return Err(Error::InvalidArgument(format!(
            "word over {} symbols for a system with {}",
            word.alphabet(),
            system.alphabet_size()
        )));
    }
    Ok(())
}

/// `log ν_y(I(w))`, `−∞` for null cylinders.
pub fn log_cylinder_mass(system: &DrivenSystem, word: &Word) -> Result<f64> {
    check_word(system, word)?;
    let mut y = system.initial;
    let mut log_mass = 0.0;
    for &i in word.symbols() {
        let p = system.probabilities(&y)?;
        if p[i] <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_mass += p[i].ln();
        y = system.transition(i, &y)?;
    }
    Ok(log_mass)
}

pub fn cylinder_mass(system: &DrivenSystem, word: &Word) -> Result<f64> {
    Ok(log_cylinder_mass(system, word)?.exp())
}

/// Exact `ν_y(I(w))` for rational systems started at an exact state.
pub fn cylinder_mass_exact(system: &DrivenSystem, word: &Word) -> Result<BigRational> {
    check_word(system, word)?;
    if word.len() > EXACT_WORD_LIMIT {
        return Err(Error::Budget(format!(
            "exact masses are limited to words of length {EXACT_WORD_LIMIT}"
        )));
    }
    let (exact, y0) = exact_parts(system)?;
    let mut y = y0.clone();
    let mut mass = BigRational::one();
    for &i in word.symbols() {
        let p = exact.probabilities_exact(&y)?;
        if p[i].is_zero() {
            return Ok(BigRational::zero());
        }
        mass *= &p[i];
        y = exact.transition_exact(i, &y)?;
    }
    Ok(mass)
}

fn exact_parts(system: &DrivenSystem) -> Result<(&dyn crate::systems::ExactDynamics, &ExactState)> {
    match (system.exact(), system.initial_exact.as_ref()) {
        (Some(e), Some(y)) => Ok((e, y)),
        _ => Err(Error::Inapplicable {
            method: "exact".into(),
            reason: format!("system `{}` has no exact rational evaluation", system.label),
        }),
    }
}

/// `μ_y([0, t])`, assembled from the N-adic cylinders inside `[0, t]`.
#[derive(Clone, Debug, Serialize)]
pub struct IntervalMass {
    pub mass: f64,
    /// Mass of the cylinder straddling `t` at the depth limit; zero when
    /// `t` is N-adic within the limit.
    pub truncation_bound: f64,
    #[serde(serialize_with = "crate::rational::serde_rational::option::serialize")]
    pub exact: Option<BigRational>,
}

fn nadic_digits(t: &BigRational, n: usize, depth_limit: usize) -> (Vec<usize>, bool) {
    let nb = BigInt::from(n);
    let mut num = t.numer().clone();
    let den = t.denom().clone();
    let mut digits = Vec::new();
    while !num.is_zero() && digits.len() < depth_limit {
        num *= &nb;
        let (d, r) = num.div_rem(&den);
        digits.push(d.to_usize().unwrap_or(0));
        num = r;
    }
    (digits, num.is_zero())
}

pub fn interval_mass(system: &DrivenSystem, t: &BigRational, depth_limit: usize) -> Result<IntervalMass> {
    if t.is_negative() || t > &BigRational::one() {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    if depth_limit == 0 {
        return Err(Error::InvalidArgument("depth limit must be at least 1".into()));
    }
    if t.is_one() {
        return Ok(IntervalMass { mass: 1.0, truncation_bound: 0.0, exact: Some(BigRational::one()) });
    }
    let n = system.alphabet_size();
    let (digits, terminates) = nadic_digits(t, n, depth_limit);

    let mut y = system.initial;
    let mut prefix = 1.0f64;
    let mut mass = 0.0f64;
    for &d in &digits {
        let p = system.probabilities(&y)?;
        mass += prefix * p[..d].iter().sum::<f64>();
        prefix *= p[d];
        if prefix == 0.0 {
            break;
        }
        y = system.transition(d, &y)?;
    }
    let truncation_bound = if terminates { 0.0 } else { prefix };

    let exact = match (terminates, exact_parts(system)) {
        (true, Ok((e, y0))) if digits.len() <= EXACT_WORD_LIMIT => {
            let mut y = y0.clone();
            let mut prefix = BigRational::one();
            let mut mass = BigRational::zero();
            for &d in &digits {
                let p = e.probabilities_exact(&y)?;
                for q in &p[..d] {
                    mass += &prefix * q;
                }
                prefix *= &p[d];
                if prefix.is_zero() {
                    break;
                }
                y = e.transition_exact(d, &y)?;
            }
            Some(mass)
        }
        _ => None,
    };
    let mass = exact.as_ref().map(to_f64).unwrap_or(mass);
    Ok(IntervalMass { mass, truncation_bound, exact })
}

#[derive(Clone, Debug, Serialize)]
pub struct DistributionRow {
    #[serde(serialize_with = "crate::rational::serde_rational::serialize")]
    pub t: BigRational,
    pub phi: f64,
    #[serde(serialize_with = "crate::rational::serde_rational::option::serialize")]
    pub phi_exact: Option<BigRational>,
    pub truncation_bound: f64,
}

/// `φ_y(t) = μ_y([0, t])` on a sorted grid.
pub fn distribution_function(
    system: &DrivenSystem,
    grid: &[BigRational],
    depth_limit: usize,
) -> Result<Vec<DistributionRow>> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("grid must be sorted".into()));
    }
    grid.iter()
        .map(|t| {
            let m = if t.is_zero() {
                IntervalMass { mass: 0.0, truncation_bound: 0.0, exact: Some(BigRational::zero()) }
            } else {
                interval_mass(system, t, depth_limit)?
            };
            Ok(DistributionRow {
                t: t.clone(),
                phi: m.mass,
                phi_exact: m.exact,
                truncation_bound: m.truncation_bound,
            })
        })
        .collect()
}

/// `{k / N^depth : 0 ≤ k ≤ N^depth}`.
pub fn nadic_grid(n: usize, depth: usize) -> Vec<BigRational> {
    let total = num_traits::pow(BigInt::from(n), depth);
    let mut out = Vec::new();
    let mut k = BigInt::zero();
    while k <= total {
        out.push(BigRational::new(k.clone(), total.clone()));
        k += 1;
    }
    out
}

/// A `ν_y`-sampled path with its running mass and martingale.
#[derive(Clone, Debug, Serialize)]
pub struct MassTrace {
    pub word: Word,
    /// `y_0, …, y_n`.
    pub states: Vec<State>,
    /// `p_k = G(y_k)` for `k < n`.
    pub prob_vectors: Vec<Vec<f64>>,
    /// `log R_{y,k}` for `k ≤ n`.
    pub log_mass: Vec<f64>,
    /// `M_{y,k}` for `k ≤ n`.
    pub martingale: Vec<f64>,
}

impl MassTrace {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// `(1/n) Σ_{k<n} s_N(p_k)`.
    pub fn entropy_average(&self) -> f64 {
        if self.prob_vectors.is_empty() {
            return 0.0;
        }
        self.prob_vectors.iter().map(|p| entropy_unchecked(p)).sum::<f64>() / self.prob_vectors.len() as f64
    }
}

/// The generator for path `path` of a run seeded with `seed`. Each path
/// owns its own ChaCha stream, so the word depends only on `(seed, path)`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Index `j` with `Σ_{i<j} p_i ≤ u < Σ_{i≤j} p_i`, skipping null symbols.
pub(crate) fn choose(p: &[f64], u: f64) -> usize {
    let total: f64 = p.iter().map(|x| x.max(0.0)).sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &pj) in p.iter().enumerate() {
        if pj <= 0.0 {
            continue;
        }
        last_positive = j;
        acc += pj;
        if target < acc {
            return j;
        }
    }
    last_positive
}

pub fn sample_path(system: &DrivenSystem, n: usize, seed: u64, path: u64) -> Result<MassTrace> {
    if n == 0 {
        return Err(Error::InvalidArgument("path length must be at least 1".into()));
    }
    let mut rng = path_rng(seed, path);
    let mut y = system.initial;
    system.check_state(&y)?;
    let mut symbols = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n + 1);
    let mut prob_vectors = Vec::with_capacity(n);
    let mut log_mass = Vec::with_capacity(n + 1);
    let mut martingale = Vec::with_capacity(n + 1);
    states.push(y);
    log_mass.push(0.0);
    martingale.push(0.0);
    for _ in 0..n {
        let p = system.probabilities(&y)?;
        let i = choose(&p, rng.gen::<f64>());
        let step = -p[i].ln();
        log_mass.push(log_mass.last().unwrap() - step);
        martingale.push(martingale.last().unwrap() + (step - entropy_unchecked(&p)));
        y = system.transition(i, &y)?;
        symbols.push(i);
        states.push(y);
        prob_vectors.push(p);
    }
    Ok(MassTrace {
        word: Word::new(symbols, system.alphabet_size())?,
        states,
        prob_vectors,
        log_mass,
        martingale,
    })
}

/// `M_{y,k} = Σ_{j≤k} [−log p_{j−1}(X_j) − s_N(p_{j−1})]` recomputed from
/// the trace.
pub fn martingale_trace(trace: &MassTrace) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(trace.len() + 1);
    let mut m = 0.0;
    out.push(m);
    for (p, &i) in trace.prob_vectors.iter().zip(trace.word.symbols()) {
        if p[i] <= 0.0 {
            return Err(Error::Consistency(format!("symbol {i} chosen with probability {}", p[i])));
        }
        m += -p[i].ln() - entropy_unchecked(p);
        out.push(m);
    }
    Ok(out)
}

/// CSV with columns `n, symbol, state_repr, p_0..p_{N−1}, log_mass, M_n`.
pub fn trace_csv(trace: &MassTrace) -> Result<Vec<u8>> {
    let n = trace.word.alphabet();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n".to_string(), "symbol".into(), "state_repr".into()];
    header.extend((0..n).map(|j| format!("p_{j}")));
    header.extend(["log_mass".to_string(), "M_n".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..=trace.len() {
        let mut row = vec![
            k.to_string(),
            if k == 0 { String::new() } else { trace.word.symbols()[k - 1].to_string() },
            trace.states[k].to_string(),
        ];
        match trace.prob_vectors.get(k) {
            Some(p) => row.extend(p.iter().map(|x| x.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), n)),
        }
        row.push(trace.log_mass[k].to_string());
        row.push(trace.martingale[k].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Consistency(e.to_string()))
}

/// CSV with columns `t, phi` (exact rationals where available).
pub fn distribution_csv(rows: &[DistributionRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "phi"]).map_err(csv_err)?;
    for r in rows {
        let phi = r.phi_exact.as_ref().map(|q| q.to_string()).unwrap_or_else(|| r.phi.to_string());
        w.write_record([r.t.to_string(), phi]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Consistency(e.to_string()))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Consistency(format!("csv: {e}"))
}
