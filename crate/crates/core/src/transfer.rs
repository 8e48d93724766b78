//! Invariant density of the transfer operator `(LH)(y) = Σ_i g_i'(y) H(g_i(y))`
//! for de Rham systems with smooth strictly contracting maps, and the
//! resulting dimension formula.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::derham::DeRhamSystem;
use crate::dimension::{Bound, DimMethod, DimParams, DimReport};
use crate::error::{Error, Result};
use crate::rational::{serde_rational, to_f64};

#[derive(Clone, Debug, Serialize)]
pub struct MapDerivative {
    pub symbol: usize,
    #[serde(with = "serde_rational")]
    pub at_zero: BigRational,
    #[serde(with = "serde_rational")]
    pub at_one: BigRational,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessVerdict {
    pub holds: bool,
    pub derivatives: Vec<MapDerivative>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// `g_i'(z) = det A_i/(c_i z + 1)²` is monotone on `[0, 1]` when the
/// denominator has no zero there, so `0 < g_i' < 1` reduces to the
/// endpoints.
pub fn check_smooth_contracting(system: &DeRhamSystem) -> SmoothnessVerdict {
    let one = BigRational::one();
    let mut derivatives = Vec::new();
    let mut reason = None;
    for (i, m) in system.matrices.iter().enumerate() {
        let det = m.det();
        let end = &m.c + &one;
        if !end.is_positive() {
            reason.get_or_insert(format!("g_{i} has a pole in [0, 1]"));
            derivatives.push(MapDerivative { symbol: i, at_zero: det.clone(), at_one: BigRational::zero() });
            continue;
        }
        let at_zero = det.clone();
        let at_one = &det / (&end * &end);
        for (z, v) in [("0", &at_zero), ("1", &at_one)] {
            if !v.is_positive() || v >= &one {
                reason.get_or_insert(format!("g_{i}'({z}) = {v} is not in (0, 1)"));
            }
        }
        derivatives.push(MapDerivative { symbol: i, at_zero, at_one });
    }
    SmoothnessVerdict { holds: reason.is_none(), derivatives, reason }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferSettings {
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self { m: 2049, tol: 1e-10, max_iter: 100_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityGrid {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    /// `sup |LH − H|` at the returned grid.
    pub residual: f64,
    /// `|∫H − 1|` by Simpson's rule.
    pub normalization_error: f64,
    pub iterations: usize,
    /// Sup-norm changes of the last sweeps, oldest first.
    pub recent_changes: Vec<f64>,
    pub tol: f64,
}

struct Maps {
    /// `(g_i(y_j), g_i'(y_j))`.
    points: Vec<Vec<(f64, f64)>>,
}

fn maps(system: &DeRhamSystem, nodes: &[f64]) -> Maps {
    let points = system
        .matrices
        .iter()
        .map(|m| {
            let [[a, b], [c, d]] = m.rows_f64();
            let det = a * d - b * c;
            nodes
                .iter()
                .map(|&y| {
                    let den = c * y + d;
                    (((a * y + b) / den).clamp(0.0, 1.0), det / (den * den))
                })
                .collect()
        })
        .collect();
    Maps { points }
}

/// Fritsch–Carlson slopes for monotone cubic Hermite interpolation on a
/// uniform grid.
fn pchip_slopes(v: &[f64], h: f64) -> Vec<f64> {
    let m = v.len();
    let delta: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut d = vec![0.0; m];
    for k in 1..m - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b > 0.0 {
            d[k] = 2.0 * a * b / (a + b);
        }
    }
    let end = |d0: f64, d1: f64| {
        let s = (3.0 * d0 - d1) / 2.0;
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(delta[0], delta.get(1).copied().unwrap_or(delta[0]));
    d[m - 1] = end(delta[m - 2], if m > 2 { delta[m - 3] } else { delta[m - 2] });
    d
}

fn pchip_eval(v: &[f64], d: &[f64], h: f64, x: f64) -> f64 {
    let m = v.len();
    let k = ((x / h).floor() as usize).min(m - 2);
    let t = (x - k as f64 * h) / h;
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * v[k]
        + (t3 - 2.0 * t2 + t) * h * d[k]
        + (-2.0 * t3 + 3.0 * t2) * v[k + 1]
        + (t3 - t2) * h * d[k + 1]
}

/// Composite Simpson's rule; needs an odd number of nodes.
fn simpson(v: &[f64], h: f64) -> f64 {
    let m = v.len();
    let mut s = v[0] + v[m - 1];
    for (k, x) in v.iter().enumerate().take(m - 1).skip(1) {
        s += if k % 2 == 1 { 4.0 * x } else { 2.0 * x };
    }
    s * h / 3.0
}

fn apply(maps: &Maps, v: &[f64], h: f64) -> Vec<f64> {
    let d = pchip_slopes(v, h);
    let mut out = vec![0.0; v.len()];
    for branch in &maps.points {
        for (o, &(z, w)) in out.iter_mut().zip(branch) {
            *o += w * pchip_eval(v, &d, h, z);
        }
    }
    out
}

fn check_settings(s: &TransferSettings) -> Result<()> {
    if s.m < 5 || s.m.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("grid size {} must be odd and at least 5", s.m)));
    }
    if !s.tol.is_finite() || s.tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    Ok(())
}

pub fn solve_density(system: &DeRhamSystem, settings: &TransferSettings) -> Result<DensityGrid> {
    check_settings(settings)?;
    let verdict = check_smooth_contracting(system);
    if !verdict.holds {
        return Err(Error::Inapplicable {
            method: "fan_lau".into(),
            reason: verdict.reason.unwrap_or_default(),
        });
    }
    let m = settings.m;
    let h = 1.0 / (m - 1) as f64;
    let nodes: Vec<f64> = (0..m).map(|j| j as f64 * h).collect();
    let maps = maps(system, &nodes);
    let mut v = vec![1.0; m];
    let mut changes = Vec::new();
    for iter in 1..=settings.max_iter {
        let mut next = apply(&maps, &v, h);
        let mass = simpson(&next, h);
        next.iter_mut().for_each(|x| *x /= mass);
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        changes.push(change);
        if change < settings.tol {
            let lv = apply(&maps, &v, h);
            let residual = lv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let start = changes.len().saturating_sub(10);
            return Ok(DensityGrid {
                normalization_error: (simpson(&v, h) - 1.0).abs(),
                nodes,
                values: v,
                residual,
                iterations: iter,
                recent_changes: changes[start..].to_vec(),
                tol: settings.tol,
            });
        }
    }
    Err(Error::NotConverged { iterations: settings.max_iter, residual: *changes.last().unwrap_or(&f64::NAN) })
}

/// `Σ_i ∫ H(g_i(y)) g_i'(y) log(1/g_i'(y)) dy / log N` by Simpson's rule.
pub fn dim_fanlau(system: &DeRhamSystem, grid: &DensityGrid) -> Result<DimReport> {
    if grid.residual > 10.0 * grid.tol {
        return Err(Error::Inapplicable {
            method: "fan_lau".into(),
            reason: format!("density residual {:.3e} exceeds 10 × tol = {:.3e}", grid.residual, 10.0 * grid.tol),
        });
    }
    let m = grid.nodes.len();
    let h = 1.0 / (m - 1) as f64;
    let maps = maps(system, &grid.nodes);
    let d = pchip_slopes(&grid.values, h);
    let mut total = 0.0;
    for branch in &maps.points {
        let f: Vec<f64> = branch.iter().map(|&(z, w)| pchip_eval(&grid.values, &d, h, z) * w * (1.0 / w).ln()).collect();
        total += simpson(&f, h);
    }
    let n = system.alphabet_size() as f64;
    let value = total / n.ln();
    let mut report = DimReport::closed(
        DimMethod::FanLau,
        value,
        "transfer-operator formula",
        DimParams { grid: Some(m), r: Some(1.0 / n), ..Default::default() },
    );
    let slack = 10.0 * grid.tol.max(grid.residual);
    report.upper_bound = Some(Bound { value: value + slack, provenance: "transfer-operator formula".into() });
    report.lower_bound = Some(Bound { value: value - slack, provenance: "transfer-operator formula".into() });
    report.ci_halfwidth = slack;
    Ok(report)
}

/// `(y, H(y))` as CSV.
pub fn density_csv(grid: &DensityGrid) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["y", "H"]).map_err(crate::measure::csv_err)?;
    for (y, v) in grid.nodes.iter().zip(&grid.values) {
        w.write_record([format!("{y:.17e}"), format!("{v:.17e}")]).map_err(crate::measure::csv_err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// `f'(x)` for the Möbius closed form `f(x) = x/(1 − C(x−1))`.
pub fn moebius_density(c: &BigRational, x: f64) -> f64 {
    let c = to_f64(c);
    (1.0 + c) / (1.0 - c * (x - 1.0)).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derham::{linear_matrices, minkowski_system, moebius_system, validate};
    use crate::rational::{int, rat};
    use proptest::prelude::*;

    fn linear(w: &[BigRational]) -> DeRhamSystem {
        validate(&linear_matrices(w)).unwrap()
    }

    #[test]
    fn smoothness_examples() {
        let v = check_smooth_contracting(&linear(&[rat(1, 3), rat(2, 3)]));
        assert!(v.holds);
        assert_eq!(v.derivatives[0].at_zero, rat(1, 3));
        assert_eq!(v.derivatives[1].at_one, rat(2, 3));
        assert!(check_smooth_contracting(&moebius_system(2, &int(1)).unwrap()).holds);
        let mk = check_smooth_contracting(&minkowski_system());
        assert!(!mk.holds);
        assert_eq!(mk.derivatives[0].at_zero, int(1));
    }

    #[test]
    fn linear_density_is_flat() {
        let s = linear(&[rat(1, 3), rat(2, 3)]);
        let g = solve_density(&s, &TransferSettings::default()).unwrap();
        assert!(g.residual < 1e-10);
        assert!(g.values.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let d = dim_fanlau(&s, &g).unwrap();
        let oracle = (-(1.0f64 / 3.0) * (1.0f64 / 3.0).ln() - (2.0f64 / 3.0) * (2.0f64 / 3.0).ln()) / 2f64.ln();
        assert!((d.estimate - oracle).abs() < 1e-6);
        let half = linear(&[rat(1, 2), rat(1, 2)]);
        let g = solve_density(&half, &TransferSettings::default()).unwrap();
        assert!((dim_fanlau(&half, &g).unwrap().estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moebius_density_and_dimension() {
        let s = moebius_system(2, &int(1)).unwrap();
        let g = solve_density(&s, &TransferSettings::default()).unwrap();
        assert!(g.values.iter().all(|&v| v >= 0.0));
        assert!(g.normalization_error < 1e-8);
        let d = dim_fanlau(&s, &g).unwrap();
        assert!((d.estimate - 1.0).abs() < 1e-3, "{}", d.estimate);
        let w = g.recent_changes.windows(2).all(|w| w[1] <= w[0]);
        assert!(w, "{:?}", g.recent_changes);
    }

    #[test]
    fn refinement_is_stable() {
        let s = moebius_system(2, &int(1)).unwrap();
        let a = solve_density(&s, &TransferSettings::default()).unwrap();
        let b = solve_density(&s, &TransferSettings { m: 4097, ..Default::default() }).unwrap();
        let da = dim_fanlau(&s, &a).unwrap().estimate;
        let db = dim_fanlau(&s, &b).unwrap().estimate;
        assert!((da - db).abs() < 5e-10, "{da} {db}");
    }

    #[test]
    fn minkowski_is_refused() {
        assert!(matches!(
            solve_density(&minkowski_system(), &TransferSettings::default()),
            Err(Error::Inapplicable { .. })
        ));
    }

    #[test]
    fn pchip_reproduces_cubics_away_from_ends() {
        let h = 0.01;
        let v: Vec<f64> = (0..=100).map(|k| (k as f64 * h).powi(2) + 1.0).collect();
        let d = pchip_slopes(&v, h);
        let x = 0.503;
        assert!((pchip_eval(&v, &d, h, x) - (x * x + 1.0)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn linear_weights_match_closed_form(k in 1i64..20) {
            let w = [rat(k, 21), rat(21 - k, 21)];
            let s = linear(&w);
            let g = solve_density(&s, &TransferSettings { m: 257, ..Default::default() }).unwrap();
            let d = dim_fanlau(&s, &g).unwrap();
            let wf = [k as f64 / 21.0, (21 - k) as f64 / 21.0];
            let lin = crate::dimension::dim_linear(&wf).unwrap().estimate;
            prop_assert!((d.estimate - lin).abs() < 1e-6);
        }
    }
}
