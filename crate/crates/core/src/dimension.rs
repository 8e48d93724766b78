//! Dimension estimates from Cesàro entropy averages, covering bounds, the
//! entropy-deficit cap for disjoint boxes, and closed forms.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::ConditionVerdict;
use crate::derham::{curve_point_f64, minkowski_system};
use crate::error::{Error, Result};
use crate::measure::{choose, path_rng, MassTrace};
use crate::symbolic::{entropy, entropy2, entropy_unchecked, IfsGeometry, Word};
use crate::systems::{check_hata, check_probability_vector, DrivenSystem, State};

/// Guard for full-tree enumeration.
pub const EXACT_NODE_LIMIT: f64 = 1e7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DimMethod {
    EntropyMc,
    EntropyExact,
    ClosedFormLinear,
    Kinney,
    Hata,
    FanLau,
}

#[derive(Clone, Debug, Serialize)]
pub struct Bound {
    pub value: f64,
    pub provenance: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DimParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DimReport {
    pub method: DimMethod,
    /// Always "estimate": finite-n averages stand in for limsup/liminf.
    pub label: &'static str,
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub upper_bound: Option<Bound>,
    pub lower_bound: Option<Bound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound_note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wa_floor: Option<Bound>,
    pub params: DimParams,
}

impl DimReport {
    pub(crate) fn closed(method: DimMethod, estimate: f64, provenance: &str, params: DimParams) -> Self {
        DimReport {
            method,
            label: "estimate",
            estimate,
            ci_halfwidth: 0.0,
            upper_bound: Some(Bound { value: estimate, provenance: provenance.into() }),
            lower_bound: Some(Bound { value: estimate, provenance: provenance.into() }),
            lower_bound_note: None,
            wa_floor: None,
            params,
        }
    }

    /// Folds a (wA) verdict into the report: the lower bound becomes
    /// "unknown" when (wA) fails, and a verified constant adds the floor
    /// `s_2(c)/log(1/r)`.
    pub fn with_wa(mut self, verdict: &ConditionVerdict, geometry: &IfsGeometry) -> Self {
        if verdict.fails() {
            self.lower_bound = None;
            self.lower_bound_note = Some("unknown: (wA) fails on the orbit".into());
        } else if verdict.holds() {
            let c = verdict
                .bounds
                .iter()
                .map(|b| b.inf.min(1.0 - b.sup))
                .fold(0.0, f64::max);
            if c > 0.0 {
                self.wa_floor = Some(Bound { value: wa_floor(c, geometry), provenance: "(wA) constant".into() });
            }
        }
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyAverage {
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub per_path: Vec<f64>,
}

fn path_entropy_average(system: &DrivenSystem, n: usize, seed: u64, path: u64) -> Result<f64> {
    let mut rng = path_rng(seed, path);
    let mut y: State = system.initial;
    let mut total = 0.0;
    for _ in 0..n {
        let p = system.probabilities(&y)?;
        total += entropy_unchecked(&p);
        let i = choose(&p, rng.gen::<f64>());
        y = system.transition(i, &y)?;
    }
    Ok(total / n as f64)
}

/// Mean over `ν_y`-sampled paths of `(1/n) Σ_{k<n} s_N(p_k)`, with a 95%
/// half-width from the across-path standard error. The per-path values
/// depend only on `(seed, path)`, and the reduction runs in path order.
pub fn entropy_average_mc(system: &DrivenSystem, n: usize, paths: usize, seed: u64) -> Result<EntropyAverage> {
    if n == 0 || paths < 2 {
        return Err(Error::InvalidArgument("need n ≥ 1 and at least 2 paths".into()));
    }
    system.check_state(&system.initial)?;
    let per_path: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|k| path_entropy_average(system, n, seed, k))
        .collect::<Result<_>>()?;
    let (mean, ci_halfwidth) = mean_ci(&per_path);
    Ok(EntropyAverage { mean, ci_halfwidth, per_path })
}

pub(crate) fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, 1.96 * (var / m).sqrt())
}

/// `E[s_N(p_k)]` for `k < n`, by enumerating the tree weighted with
/// cylinder masses.
pub fn entropy_profile_exact(system: &DrivenSystem, n: usize) -> Result<Vec<f64>> {
    let nodes = (system.alphabet_size() as f64).powi(n as i32);
    if n == 0 || nodes > EXACT_NODE_LIMIT {
        return Err(Error::Budget(format!("N^n = {nodes} exceeds the enumeration limit {EXACT_NODE_LIMIT}")));
    }
    system.check_state(&system.initial)?;
    let mut profile = vec![0.0; n];
    walk(system, system.initial, 1.0, 0, &mut profile)?;
    Ok(profile)
}

fn walk(system: &DrivenSystem, y: State, weight: f64, level: usize, profile: &mut [f64]) -> Result<()> {
    let p = system.probabilities(&y)?;
    profile[level] += weight * entropy_unchecked(&p);
    if level + 1 == profile.len() {
        return Ok(());
    }
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            walk(system, system.transition(i, &y)?, weight * pi, level + 1, profile)?;
        }
    }
    Ok(())
}

/// `E^{ν_y}[(1/n) Σ_{k<n} s_N(p_k)]`.
pub fn entropy_average_exact(system: &DrivenSystem, n: usize) -> Result<f64> {
    Ok(entropy_profile_exact(system, n)?.iter().sum::<f64>() / n as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct DimBounds {
    pub upper: f64,
    pub lower: f64,
}

/// `(mean ± ci)/log(1/r)`, the lower end clamped at 0.
pub fn dim_bounds(mean: f64, ci_halfwidth: f64, geometry: &IfsGeometry) -> DimBounds {
    let l = geometry.log_inv_r();
    DimBounds { upper: (mean + ci_halfwidth) / l, lower: ((mean - ci_halfwidth) / l).max(0.0) }
}

/// `(−c log c − (1−c) log(1−c))/log(1/r)`.
pub fn wa_floor(c: f64, geometry: &IfsGeometry) -> f64 {
    entropy2(c) / geometry.log_inv_r()
}

/// Entropy-average report with covering bounds.
pub fn dim_entropy_mc(system: &DrivenSystem, n: usize, paths: usize, seed: u64) -> Result<(DimReport, EntropyAverage)> {
    if n < 100 || paths < 10 {
        return Err(Error::InvalidArgument(format!("need n ≥ 100 and paths ≥ 10, got n = {n}, paths = {paths}")));
    }
    let avg = entropy_average_mc(system, n, paths, seed)?;
    let l = system.geometry.log_inv_r();
    let b = dim_bounds(avg.mean, avg.ci_halfwidth, &system.geometry);
    let report = DimReport {
        method: DimMethod::EntropyMc,
        label: "estimate",
        estimate: avg.mean / l,
        ci_halfwidth: avg.ci_halfwidth / l,
        upper_bound: Some(Bound { value: b.upper, provenance: "covering upper bound, a/log(1/r)".into() }),
        lower_bound: Some(Bound { value: b.lower, provenance: "covering lower bound, a/log(1/r)".into() }),
        lower_bound_note: None,
        wa_floor: None,
        params: DimParams { n: Some(n), paths: Some(paths), seed: Some(seed), r: Some(system.geometry.r), ..Default::default() },
    };
    Ok((report, avg))
}

pub fn dim_entropy_exact(system: &DrivenSystem, n: usize) -> Result<DimReport> {
    let mean = entropy_average_exact(system, n)?;
    let b = dim_bounds(mean, 0.0, &system.geometry);
    Ok(DimReport {
        method: DimMethod::EntropyExact,
        label: "estimate",
        estimate: mean / system.geometry.log_inv_r(),
        ci_halfwidth: 0.0,
        upper_bound: Some(Bound { value: b.upper, provenance: "covering upper bound, a/log(1/r)".into() }),
        lower_bound: Some(Bound { value: b.lower, provenance: "covering lower bound, a/log(1/r)".into() }),
        lower_bound_note: None,
        wa_floor: None,
        params: DimParams { n: Some(n), r: Some(system.geometry.r), ..Default::default() },
    })
}

/// Per-path entropy averages as CSV (`path,entropy_average`).
pub fn per_path_csv(values: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["path", "entropy_average"]).map_err(crate::measure::csv_err)?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([k.to_string(), format!("{v:.17e}")]).map_err(crate::measure::csv_err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyDeficit {
    /// `sup{s_N(p) : Σ_j |p_j − 1/N| > ε0}`.
    pub sup_term: f64,
    /// `(l−1) log N + sup_term`.
    pub cap: f64,
    /// `log N − sup_term`, the entropy lost on each key block.
    pub block_deficit: f64,
    /// Number of coordinates raised in the maximizer.
    pub raised: usize,
    /// `(c̃^l/2)(log N − sup_term)/l` when `c̃` is supplied.
    pub eps1: Option<f64>,
}

/// The per-block entropy cap outside the `ℓ¹` box of radius `ε0`.
///
/// The maximizer raises `k` coordinates by `ε0/(2k)` and lowers the rest by
/// `ε0/(2(N−k))`; the best `k` is found by scanning. Every split stays in
/// the simplex while `ε0 < 2/N`.
pub fn key_deficit(n: usize, eps0: f64, l: usize, c_tilde: Option<f64>) -> Result<KeyDeficit> {
    if n < 2 {
        return Err(Error::InvalidArgument("need N ≥ 2".into()));
    }
    if !(eps0 > 0.0 && eps0 < 2.0 / n as f64) {
        return Err(Error::InvalidArgument(format!("eps0 = {eps0} outside (0, 2/N)")));
    }
    if l == 0 {
        return Err(Error::InvalidArgument("l must be at least 1".into()));
    }
    let nf = n as f64;
    let (mut sup_term, mut raised) = (f64::NEG_INFINITY, 1);
    for k in 1..n {
        let up = 1.0 / nf + eps0 / (2.0 * k as f64);
        let down = 1.0 / nf - eps0 / (2.0 * (n - k) as f64);
        let mut p = vec![up; k];
        p.extend(std::iter::repeat_n(down, n - k));
        let s = entropy_unchecked(&p);
        if s > sup_term {
            sup_term = s;
            raised = k;
        }
    }
    let log_n = nf.ln();
    let block_deficit = log_n - sup_term;
    Ok(KeyDeficit {
        sup_term,
        cap: (l as f64 - 1.0) * log_n + sup_term,
        block_deficit,
        raised,
        eps1: c_tilde.map(|c| c.powi(l as i32) / 2.0 * block_deficit / l as f64),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PatternFrequency {
    pub pattern: Word,
    pub frequency: f64,
    pub positions: usize,
    /// `c̃^l/2` when `c̃` is supplied.
    pub bound: Option<f64>,
}

/// Fraction of start positions at which `pattern` occurs in the trace word.
pub fn pattern_frequency(trace: &MassTrace, pattern: &Word, c_tilde: Option<f64>) -> Result<PatternFrequency> {
    let l = pattern.len();
    if trace.len() < 10 * l {
        return Err(Error::InvalidArgument(format!("trace of length {} is too short for a pattern of length {l}", trace.len())));
    }
    let bound = c_tilde.map(|c| c.powi(l as i32) / 2.0);
    if l == 0 {
        return Ok(PatternFrequency { pattern: pattern.clone(), frequency: 1.0, positions: trace.len(), bound });
    }
    let w = trace.word.symbols();
    let positions = w.len() - l + 1;
    let hits = w.windows(l).filter(|win| *win == pattern.symbols()).count();
    Ok(PatternFrequency { pattern: pattern.clone(), frequency: hits as f64 / positions as f64, positions, bound })
}

/// `s_N(w)/log N`.
pub fn dim_linear(weights: &[f64]) -> Result<DimReport> {
    check_probability_vector(weights, weights.len())?;
    let n = weights.len();
    let value = entropy(weights)? / (n as f64).ln();
    Ok(DimReport::closed(
        DimMethod::ClosedFormLinear,
        value,
        "closed form s_N(w)/log N",
        DimParams { r: Some(1.0 / n as f64), ..Default::default() },
    ))
}

/// `log 2 / (2 ∫ log(1+x) dμ̃)` from samples of `μ̃`.
pub fn kinney_from_samples(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let logs: Vec<f64> = xs.iter().map(|x| x.ln_1p()).collect();
    let (mean, ci) = mean_ci(&logs);
    if mean <= 0.0 {
        return Err(Error::Divergent(format!("mean of log(1+x) is {mean}; log 2/(2 mean) diverges")));
    }
    let estimate = std::f64::consts::LN_2 / (2.0 * mean);
    Ok((estimate, estimate * ci / mean))
}

/// Samples `x = φ(u)` for uniform 64-bit dyadic `u` through the Minkowski
/// curve, so `x` is distributed as the `?`-measure.
pub fn kinney_samples(samples: usize, seed: u64) -> Vec<f64> {
    let system = minkowski_system();
    (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k);
            let bits: u64 = rng.gen();
            let digits: Vec<usize> = (0..64).rev().map(|b| ((bits >> b) & 1) as usize).collect();
            curve_point_f64(&system, &digits)
        })
        .collect()
}

pub fn dim_kinney(samples: usize, seed: u64) -> Result<DimReport> {
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!("need at least 1000 samples, got {samples}")));
    }
    let (estimate, ci) = kinney_from_samples(&kinney_samples(samples, seed))?;
    let mut r = DimReport::closed(
        DimMethod::Kinney,
        estimate,
        "Kinney formula",
        DimParams { samples: Some(samples), seed: Some(seed), r: Some(0.5), ..Default::default() },
    );
    r.ci_halfwidth = ci;
    r.upper_bound = Some(Bound { value: estimate + ci, provenance: "Kinney formula, 95% interval".into() });
    r.lower_bound = Some(Bound { value: estimate - ci, provenance: "Kinney formula, 95% interval".into() });
    Ok(r)
}

/// `s_2(w)/(−w log|α|² − (1−w) log(1−|α|²))` with `w = |h|⁻²`.
pub fn dim_hata(h_modulus_sq: f64, alpha_modulus_sq: f64) -> Result<DimReport> {
    check_hata(h_modulus_sq, alpha_modulus_sq)?;
    let w = 1.0 / h_modulus_sq;
    let a = alpha_modulus_sq;
    let value = entropy2(w) / (-w * a.ln() - (1.0 - w) * (1.0 - a).ln());
    Ok(DimReport::closed(DimMethod::Hata, value, "Hata tree closed form", DimParams::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{check_wa, ConditionSettings};
    use crate::derham::derived_system;
    use crate::measure::sample_path;
    use crate::symbolic::{geometry_for, GeometryKind};
    use crate::systems::{make_adf, make_kusuoka, make_linear, make_toy, ToyParams};
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    #[test]
    fn linear_entropy_is_constant() {
        let s = make_linear(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let a = entropy_average_mc(&s, 200, 10, 1).unwrap();
        assert!((a.mean - 0.636514168294813).abs() < 1e-12);
        assert!(a.ci_halfwidth < 1e-12);
        assert!((entropy_average_exact(&s, 9).unwrap() - a.mean).abs() < 1e-12);
        let sq = make_toy("sqrt_perturbed", &ToyParams::default()).unwrap();
        assert!((entropy_average_mc(&sq, 100, 10, 1).unwrap().mean - entropy2(0.3)).abs() < 1e-12);
    }

    #[test]
    fn single_step_exact_values() {
        let adf = make_adf(0.0).unwrap();
        assert!((entropy_average_exact(&adf, 1).unwrap() - 0.673011667009257).abs() < 1e-12);
        let k = make_kusuoka([1.0, 0.0]).unwrap();
        assert!((entropy_average_exact(&k, 1).unwrap() - entropy(&[0.6, 0.2, 0.2]).unwrap()).abs() < 1e-12);
        assert!((entropy(&[0.6, 0.2, 0.2]).unwrap() - 0.950270539).abs() < 1e-8);
        assert!(entropy_average_exact(&k, 20).is_err());
    }

    #[test]
    fn bounds_examples() {
        let g = geometry_for(GeometryKind::Interval(3));
        assert!((dim_bounds(3f64.ln(), 0.0, &g).upper - 1.0).abs() < 1e-15);
        let gasket = geometry_for(GeometryKind::Gasket);
        let floor = wa_floor(1.0 / 15.0, &gasket);
        let oracle = (-(1.0f64 / 15.0) * (1.0f64 / 15.0).ln() - (14.0f64 / 15.0) * (14.0f64 / 15.0).ln()) / 2f64.ln();
        assert!((floor - oracle).abs() < 1e-15);
        assert!((floor - 0.35336).abs() < 1e-5);
    }

    #[test]
    fn closed_forms() {
        assert!((dim_linear(&[0.5, 0.5]).unwrap().estimate - 1.0).abs() < 1e-15);
        assert!((dim_linear(&[0.25; 4]).unwrap().estimate - 1.0).abs() < 1e-15);
        assert!((dim_linear(&[1.0 / 3.0, 2.0 / 3.0]).unwrap().estimate - 0.918295834).abs() < 1e-8);
        assert!((dim_hata(2.0, 0.5).unwrap().estimate - 1.0).abs() < 1e-15);
        assert!((dim_hata(3.0, 0.5).unwrap().estimate - 0.918295834).abs() < 1e-8);
        let v = 2f64.ln() / (0.5 * 4f64.ln() + 0.5 * (4.0f64 / 3.0).ln());
        assert!((dim_hata(2.0, 0.25).unwrap().estimate - v).abs() < 1e-15);
        assert!((v - 0.829).abs() < 1e-3);
        assert!(dim_hata(0.5, 0.5).is_err());
    }

    #[test]
    fn kinney_guard_and_sample_range() {
        assert!(matches!(kinney_from_samples(&[0.0; 100]), Err(Error::Divergent(_))));
        let xs = kinney_samples(1000, 3);
        assert!(xs.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let r = dim_kinney(20_000, 5).unwrap();
        assert!(r.estimate > 0.5);
    }

    #[test]
    fn key_deficit_examples() {
        let k = key_deficit(2, 0.2, 1, None).unwrap();
        assert!((k.sup_term - entropy2(0.4)).abs() < 1e-15);
        let k = key_deficit(2, 1e-9, 3, None).unwrap();
        assert!((k.cap - 3.0 * 2f64.ln()).abs() < 1e-12);
        // N = 3 prefers one raised coordinate against two lowered.
        let k = key_deficit(3, 0.3, 1, Some(0.2)).unwrap();
        let grid = (0..=300).flat_map(|a| (0..=300 - a).map(move |b| (a, b)));
        let mut best = f64::NEG_INFINITY;
        for (a, b) in grid {
            let p = [a as f64 / 300.0, b as f64 / 300.0, (300 - a - b) as f64 / 300.0];
            if p.iter().map(|x| (x - 1.0 / 3.0).abs()).sum::<f64>() >= 0.3 - 1e-12 {
                best = best.max(entropy_unchecked(&p));
            }
        }
        assert!(best <= k.sup_term + 1e-12 && k.sup_term - best < 1e-3);
        assert!(k.eps1.unwrap() > 0.0);
    }

    #[test]
    fn pattern_frequencies() {
        let s = make_linear(&[0.5, 0.5]).unwrap();
        let t = sample_path(&s, 10_000, 11, 0).unwrap();
        let f = pattern_frequency(&t, &Word::parse("00", 2).unwrap(), Some(0.5)).unwrap();
        assert!((f.frequency - 0.25).abs() < 0.02);
        assert!(f.frequency >= f.bound.unwrap());
        let sq = make_toy("sqrt_perturbed", &ToyParams::default()).unwrap();
        let t = sample_path(&sq, 10_000, 11, 0).unwrap();
        assert!((pattern_frequency(&t, &Word::parse("1", 2).unwrap(), None).unwrap().frequency - 0.7).abs() < 0.02);
        assert_eq!(pattern_frequency(&t, &Word::empty(2), None).unwrap().frequency, 1.0);
    }

    #[test]
    fn mc_matches_exact_on_builtins() {
        let mut systems = vec![
            make_adf(0.0).unwrap(),
            make_kusuoka([1.0, 0.0]).unwrap(),
            make_linear(&[0.2, 0.3, 0.5]).unwrap(),
            derived_system(&Arc::new(crate::derham::minkowski_system())).unwrap(),
            derived_system(&Arc::new(crate::derham::moebius_system(2, &crate::rational::int(1)).unwrap())).unwrap(),
        ];
        for name in crate::systems::TOY_NAMES {
            systems.push(make_toy(name, &ToyParams::default()).unwrap());
        }
        for s in &systems {
            let n = if s.alphabet_size() == 3 { 10 } else { 12 };
            let exact = entropy_average_exact(s, n).unwrap();
            let mc = entropy_average_mc(s, n, 4000, 21).unwrap();
            assert!((mc.mean - exact).abs() <= 3.0 * mc.ci_halfwidth + 1e-12, "{}: {} vs {}", s.label, mc.mean, exact);
            assert!(exact <= (s.alphabet_size() as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn minkowski_pairs_two_apart_lose_entropy() {
        let m = derived_system(&Arc::new(crate::derham::minkowski_system())).unwrap();
        let v = crate::conditions::search_box_condition(&m, true, None, &[2], &ConditionSettings::default()).unwrap();
        assert!(v.holds());
        let eps0 = v.resolution.eps0.unwrap();
        let cap = 2f64.ln() + entropy2(0.5 + eps0);
        let profile = entropy_profile_exact(&m, 12).unwrap();
        for j in 0..10 {
            assert!(profile[j] + profile[j + 2] < cap, "j = {j}");
        }
    }

    #[test]
    fn wa_folding() {
        let m = derived_system(&Arc::new(crate::derham::minkowski_system())).unwrap();
        let wa = check_wa(&m, &ConditionSettings::default()).unwrap();
        let (r, _) = dim_entropy_mc(&m, 100, 10, 1).unwrap();
        let r = r.with_wa(&wa, &m.geometry);
        assert!(r.lower_bound.is_none() && r.lower_bound_note.is_some());
        let k = make_kusuoka([1.0, 0.0]).unwrap();
        let wa = check_wa(&k, &ConditionSettings { depth: 8, ..Default::default() }).unwrap();
        let (r, _) = dim_entropy_mc(&k, 100, 10, 1).unwrap();
        let r = r.with_wa(&wa, &k.geometry);
        assert!(r.wa_floor.unwrap().value >= wa_floor(1.0 / 15.0, &k.geometry) - 1e-12);
    }

    #[test]
    fn mc_is_thread_independent() {
        let s = make_adf(0.0).unwrap();
        let a = entropy_average_mc(&s, 200, 50, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| entropy_average_mc(&s, 200, 50, 9).unwrap());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.per_path, b.per_path);
    }

    proptest! {
        #[test]
        fn linear_closed_form_matches_bounds(w in 0.05f64..0.95) {
            let s = make_linear(&[w, 1.0 - w]).unwrap();
            let a = entropy_average_exact(&s, 6).unwrap();
            let b = dim_bounds(a, 0.0, &s.geometry);
            let mid = (b.upper + b.lower) / 2.0;
            prop_assert!((mid - dim_linear(&[w, 1.0 - w]).unwrap().estimate).abs() < 1e-6);
        }

        #[test]
        fn key_deficit_dominates_random_points(seed in any::<u64>(), n in 2usize..5, e in 0.05f64..0.95) {
            use rand::SeedableRng;
            let eps0 = e / n as f64;
            let k = key_deficit(n, eps0, 1, None).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let mut d: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
                let mean = d.iter().sum::<f64>() / n as f64;
                d.iter_mut().for_each(|x| *x -= mean);
                let l1: f64 = d.iter().map(|x| x.abs()).sum();
                let p: Vec<f64> = d.iter().map(|x| 1.0 / n as f64 + x * eps0 / l1).collect();
                if p.iter().all(|&x| x >= 0.0) {
                    prop_assert!(entropy_unchecked(&p) <= k.sup_term + 1e-12);
                }
            }
        }
    }
}
