//! Singularity of `μ_y` against Bernoulli measures: the Hellinger partial
//! sums, the box-test certifier and the de Rham equivalence detector.

use std::sync::Arc;

use num_rational::BigRational;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{search_multisep2, ConditionSettings, ConditionVerdict};
use crate::derham::{
    derived_system, detect_moebius_case, is_ac_with_bernoulli, singularity_witness, BernoulliWitness, DeRhamSystem,
};
use crate::error::{Error, Result};
use crate::measure::{choose, path_rng};
use crate::rational::{rat, to_f64};
use crate::symbolic::GeometryKind;
use crate::systems::{check_probability_vector, DrivenSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    AcCertified,
    SingularCertified,
    SingularHeuristic,
    AcHeuristic,
    Inconclusive,
}

impl Verdict {
    pub fn is_certified(self) -> bool {
        matches!(self, Verdict::AcCertified | Verdict::SingularCertified)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HellingerSettings {
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    /// A path grows when its last-half increment is at least this times `T`.
    pub growth_factor: f64,
    /// A path is summable when its last-half increment is below this.
    pub summable_tolerance: f64,
    /// Fraction of paths that must agree for a heuristic verdict.
    pub agreement: f64,
}

impl Default for HellingerSettings {
    fn default() -> Self {
        Self { horizon: 10_000, paths: 50, seed: 0, growth_factor: 1e-4, summable_tolerance: 1e-3, agreement: 0.95 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HellingerPoint {
    pub k: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HellingerSummary {
    pub growth_fraction: f64,
    pub summable_fraction: f64,
    /// Mean over paths of `S_T − S_{T/2}`.
    pub tail_increment: f64,
    pub final_mean: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// The comparison box around `p` is separated along the orbit.
    BoxSeparation { verdict: Box<ConditionVerdict> },
    /// The matrices coincide with the Bernoulli-equivalence parameters.
    BernoulliIdentity { p: Vec<String>, e0: String },
    /// Exact displacement witnesses, one per comparison vector checked.
    ParameterMismatch { detail: String, witnesses: Vec<(Vec<String>, BernoulliWitness)> },
    /// The distribution function is `x/(1 − C(x−1))`.
    MoebiusClosedForm { c: String },
    /// Box certificates over a grid of comparison vectors.
    BoxGrid { verdicts: Vec<(Vec<f64>, Status)> },
    Hellinger { summary: HellingerSummary },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    NotCertified,
}

#[derive(Clone, Debug, Serialize)]
pub struct SingularityReport {
    pub system: String,
    pub comparison: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_label: Option<String>,
    pub verdict: Verdict,
    pub evidence: Option<Evidence>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hellinger_partial_sums: Vec<HellingerPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hellinger: Option<HellingerSettings>,
    /// Countable `π`-fibres are known for interval geometries only.
    pub countability_checked: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn countability(system: &DrivenSystem) -> (bool, Option<String>) {
    match system.geometry.kind {
        GeometryKind::Interval(_) => (true, None),
        _ => (false, Some("countability of π-fibres is assumed, not checked, for this geometry".into())),
    }
}

fn check_comparison(p: &[f64], n: usize) -> Result<()> {
    check_probability_vector(p, n)?;
    if p.iter().any(|&x| x <= 0.0) {
        return Err(Error::NotProbability("comparison weights must be strictly positive".into()));
    }
    Ok(())
}

fn checkpoints(t: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut base = 1;
    while base <= t {
        for m in [1, 2, 5] {
            if m * base <= t {
                out.push(m * base);
            }
        }
        base *= 10;
    }
    if out.last() != Some(&t) {
        out.push(t);
    }
    out
}

/// Partial sums `S_k = Σ_{n≤k} (1 − Σ_i √(p_i G_i(y_n)))` at `marks`, with
/// `y_n` driven by i.i.d. `p` symbols.
fn hellinger_path(system: &DrivenSystem, p: &[f64], marks: &[usize], seed: u64, path: u64) -> Result<Vec<f64>> {
    let mut rng = path_rng(seed, path);
    let mut y = system.initial;
    let mut s = 0.0;
    let mut out = Vec::with_capacity(marks.len());
    let mut next = 0;
    let horizon = *marks.last().unwrap();
    for k in 1..=horizon {
        let i = choose(p, rng.gen::<f64>());
        y = system.transition(i, &y)?;
        let g = system.probabilities(&y)?;
        let affinity: f64 = p.iter().zip(&g).map(|(a, b)| (a * b).sqrt()).sum();
        s += (1.0 - affinity).max(0.0);
        if k == marks[next] {
            out.push(s);
            next += 1;
        }
    }
    Ok(out)
}

pub fn hellinger_test(system: &DrivenSystem, p: &[f64], settings: &HellingerSettings) -> Result<SingularityReport> {
    check_comparison(p, system.alphabet_size())?;
    if settings.horizon < 1000 || settings.paths == 0 {
        return Err(Error::InvalidArgument("need T ≥ 1000 and at least one path".into()));
    }
    let t = settings.horizon;
    let mut marks = checkpoints(t);
    if !marks.contains(&(t / 2)) {
        marks.push(t / 2);
        marks.sort_unstable();
    }
    let half = marks.iter().position(|&k| k == t / 2).unwrap();
    let sums: Vec<Vec<f64>> = (0..settings.paths as u64)
        .into_par_iter()
        .map(|k| hellinger_path(system, p, &marks, settings.seed, k))
        .collect::<Result<_>>()?;
    let trajectory = marks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let col = sums.iter().map(|s| s[j]);
            HellingerPoint {
                k,
                mean: col.clone().sum::<f64>() / sums.len() as f64,
                min: col.clone().fold(f64::INFINITY, f64::min),
                max: col.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect::<Vec<_>>();
    let last = marks.len() - 1;
    let tails: Vec<f64> = sums.iter().map(|s| s[last] - s[half]).collect();
    let m = tails.len() as f64;
    let growth_fraction = tails.iter().filter(|&&d| d >= settings.growth_factor * t as f64).count() as f64 / m;
    let summable_fraction = tails.iter().filter(|&&d| d < settings.summable_tolerance).count() as f64 / m;
    let summary = HellingerSummary {
        growth_fraction,
        summable_fraction,
        tail_increment: tails.iter().sum::<f64>() / m,
        final_mean: trajectory[last].mean,
    };
    let verdict = if growth_fraction >= settings.agreement {
        Verdict::SingularHeuristic
    } else if summable_fraction >= settings.agreement {
        Verdict::AcHeuristic
    } else {
        Verdict::Inconclusive
    };
    let (countability_checked, note) = countability(system);
    Ok(SingularityReport {
        system: system.label.clone(),
        comparison: p.to_vec(),
        comparison_label: None,
        verdict,
        evidence: Some(Evidence::Hellinger { summary }),
        hellinger_partial_sums: trajectory,
        hellinger: Some(settings.clone()),
        countability_checked,
        note,
    })
}

/// Partial-sum trajectory as CSV (`k,mean,min,max`).
pub fn hellinger_csv(report: &SingularityReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "mean", "min", "max"]).map_err(crate::measure::csv_err)?;
    for pt in &report.hellinger_partial_sums {
        w.write_record([pt.k.to_string(), format!("{:.17e}", pt.mean), format!("{:.17e}", pt.min), format!("{:.17e}", pt.max)])
            .map_err(crate::measure::csv_err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Singular certificate from a separated comparison box around `p`.
pub fn certify_singular(
    system: &DrivenSystem,
    p: &[f64],
    max_word_len: usize,
    settings: &ConditionSettings,
) -> Result<SingularityReport> {
    check_comparison(p, system.alphabet_size())?;
    let v = search_multisep2(system, p, max_word_len, settings)?;
    let verdict = if v.holds() { Verdict::SingularCertified } else { Verdict::Inconclusive };
    let (countability_checked, note) = countability(system);
    Ok(SingularityReport {
        system: system.label.clone(),
        comparison: p.to_vec(),
        comparison_label: None,
        verdict,
        evidence: Some(Evidence::BoxSeparation { verdict: Box::new(v) }),
        hellinger_partial_sums: Vec::new(),
        hellinger: None,
        countability_checked,
        note,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeRhamClassification {
    /// Against the Bernoulli measures.
    pub bernoulli: SingularityReport,
    /// Against Lebesgue measure.
    pub lebesgue: SingularityReport,
}

fn comparison_grid(n: usize) -> Vec<Vec<BigRational>> {
    let mut grid = vec![vec![rat(1, n as i64); n]];
    if n == 2 {
        grid.extend((1..10).filter(|&k| k != 5).map(|k| vec![rat(k, 10), rat(10 - k, 10)]));
    } else {
        for i in 0..n {
            let mut q = vec![rat(1, 2 * (n as i64 - 1)); n];
            q[i] = rat(1, 2);
            grid.push(q);
        }
    }
    grid
}

fn strings(q: &[BigRational]) -> Vec<String> {
    q.iter().map(|x| x.to_string()).collect()
}

/// Bernoulli and Lebesgue verdicts for a validated de Rham system.
pub fn classify_derham(system: &Arc<DeRhamSystem>, settings: &ConditionSettings) -> Result<DeRhamClassification> {
    let n = system.alphabet_size();
    let driven = derived_system(system)?;
    let uniform = vec![1.0 / n as f64; n];
    let report = |comparison: Vec<f64>, label: Option<&str>, verdict, evidence| SingularityReport {
        system: driven.label.clone(),
        comparison,
        comparison_label: label.map(String::from),
        verdict,
        evidence: Some(evidence),
        hellinger_partial_sums: Vec::new(),
        hellinger: None,
        countability_checked: true,
        note: None,
    };
    let bernoulli = if let Some(p) = is_ac_with_bernoulli(system) {
        let e0 = system.e0().expect("equivalence parameters define e0");
        report(
            p.iter().map(to_f64).collect(),
            None,
            Verdict::AcCertified,
            Evidence::BernoulliIdentity { p: strings(&p), e0: e0.to_string() },
        )
    } else if system.e0().is_some() {
        let mut witnesses = Vec::new();
        for q in comparison_grid(n) {
            let w = singularity_witness(system, &q)?
                .ok_or_else(|| Error::Consistency(format!("no displacement witness against {:?}", strings(&q))))?;
            witnesses.push((strings(&q), w));
        }
        report(
            Vec::new(),
            Some("every Bernoulli"),
            Verdict::SingularCertified,
            Evidence::ParameterMismatch {
                detail: "the matrices are not of Bernoulli-equivalence form for e0 = c_0/(1 − a_0)".into(),
                witnesses,
            },
        )
    } else {
        let mut verdicts = Vec::new();
        let mut all = true;
        for q in comparison_grid(n) {
            let qf: Vec<f64> = q.iter().map(to_f64).collect();
            let ok = search_multisep2(&driven, &qf, 3, settings)?.holds();
            all &= ok;
            verdicts.push((qf, if ok { Status::Certified } else { Status::NotCertified }));
        }
        report(
            Vec::new(),
            Some("every Bernoulli"),
            if all { Verdict::SingularCertified } else { Verdict::Inconclusive },
            Evidence::BoxGrid { verdicts },
        )
    };
    let lebesgue = if let Some(c) = detect_moebius_case(system) {
        report(uniform, Some("lebesgue"), Verdict::AcCertified, Evidence::MoebiusClosedForm { c: c.to_string() })
    } else {
        let uniform_q = vec![rat(1, n as i64); n];
        match (&bernoulli.verdict, is_ac_with_bernoulli(system)) {
            (Verdict::AcCertified, Some(p)) if p == uniform_q => {
                let mut r = bernoulli.clone();
                r.comparison_label = Some("lebesgue".into());
                r
            }
            (Verdict::AcCertified, Some(_)) => {
                let w = singularity_witness(system, &uniform_q)?
                    .ok_or_else(|| Error::Consistency("no displacement witness against the uniform vector".into()))?;
                report(
                    uniform,
                    Some("lebesgue"),
                    Verdict::SingularCertified,
                    Evidence::ParameterMismatch { detail: "equivalent to a non-uniform Bernoulli measure".into(), witnesses: vec![(strings(&uniform_q), w)] },
                )
            }
            (v, _) => {
                let mut r = bernoulli.clone();
                r.comparison = uniform;
                r.comparison_label = Some("lebesgue".into());
                r.verdict = *v;
                r
            }
        }
    };
    if bernoulli.verdict == Verdict::AcCertified
        && lebesgue.verdict == Verdict::SingularCertified
        && bernoulli.comparison.iter().all(|&x| (x - 1.0 / n as f64).abs() < 1e-15)
    {
        return Err(Error::Consistency("AC and singular verdicts against the same comparison".into()));
    }
    Ok(DeRhamClassification { bernoulli, lebesgue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::verify_witness;
    use crate::derham::{bernoulli_equivalence_params, minkowski_system, moebius_system, validate};
    use crate::rational::int;
    use crate::systems::{make_adf, make_kusuoka, make_linear, make_toy, ToyParams};

    fn hs(horizon: usize, paths: usize) -> HellingerSettings {
        HellingerSettings { horizon, paths, seed: 7, ..Default::default() }
    }

    #[test]
    fn linear_against_itself_is_zero() {
        let s = make_linear(&[0.3, 0.7]).unwrap();
        let r = hellinger_test(&s, &[0.3, 0.7], &hs(1000, 10)).unwrap();
        assert_eq!(r.verdict, Verdict::AcHeuristic);
        assert!(r.hellinger_partial_sums.iter().all(|p| p.max.abs() < 1e-12));
        let c = certify_singular(&s, &[0.3, 0.7], 3, &ConditionSettings::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn kusuoka_grows_linearly() {
        let k = make_kusuoka([1.0, 0.0]).unwrap();
        let r = hellinger_test(&k, &[1.0 / 3.0; 3], &hs(10_000, 20)).unwrap();
        assert_eq!(r.verdict, Verdict::SingularHeuristic);
        assert!(r.hellinger_partial_sums.last().unwrap().mean >= 0.01 * 10_000.0);
        assert!(!r.countability_checked);
    }

    #[test]
    fn equivalence_system_is_summable() {
        let sys = Arc::new(validate(&bernoulli_equivalence_params(&[rat(1, 2), rat(1, 2)], &int(1)).unwrap()).unwrap());
        let d = derived_system(&sys).unwrap();
        let r = hellinger_test(&d, &[0.5, 0.5], &hs(10_000, 20)).unwrap();
        assert_eq!(r.verdict, Verdict::AcHeuristic);
        let at = |k: usize| r.hellinger_partial_sums.iter().find(|p| p.k == k).unwrap().mean;
        assert!(at(10_000) - at(1000) < 1e-3);
    }

    #[test]
    fn three_state_is_inconclusive() {
        let s = make_toy("three_state", &ToyParams::default()).unwrap();
        let p = [1.0 / 3.0, 2.0 / 3.0];
        let r = hellinger_test(&s, &p, &hs(1000, 100)).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        let c = certify_singular(&s, &p, 3, &ConditionSettings::default()).unwrap();
        assert!(!c.verdict.is_certified());
    }

    #[test]
    fn adf_and_minkowski_certified() {
        let adf = make_adf(0.0).unwrap();
        let m = derived_system(&Arc::new(minkowski_system())).unwrap();
        for sys in [&adf, &m] {
            for k in [1, 3, 5, 7, 9] {
                let p0 = k as f64 / 10.0;
                let r = certify_singular(sys, &[p0, 1.0 - p0], 3, &ConditionSettings::default()).unwrap();
                assert_eq!(r.verdict, Verdict::SingularCertified, "{} p0 = {p0}", sys.label);
            }
        }
    }

    #[test]
    fn box_witnesses_replay() {
        let s = make_linear(&[0.3, 0.7]).unwrap();
        let c = certify_singular(&s, &[0.3, 0.7], 1, &ConditionSettings::default()).unwrap();
        let Some(Evidence::BoxSeparation { verdict }) = c.evidence else { panic!() };
        assert!(verify_witness(&s, verdict.witness.as_ref().unwrap()).unwrap());
    }

    #[test]
    fn derham_classification() {
        let st = ConditionSettings::default();
        let c1 = classify_derham(&Arc::new(moebius_system(2, &int(1)).unwrap()), &st).unwrap();
        assert_eq!(c1.lebesgue.verdict, Verdict::AcCertified);
        assert_eq!(c1.bernoulli.verdict, Verdict::AcCertified);
        let m = classify_derham(&Arc::new(minkowski_system()), &st).unwrap();
        assert_eq!(m.bernoulli.verdict, Verdict::SingularCertified);
        assert_eq!(m.lebesgue.verdict, Verdict::SingularCertified);
        let p = [rat(1, 3), rat(2, 3)];
        let eq = Arc::new(validate(&bernoulli_equivalence_params(&p, &int(1)).unwrap()).unwrap());
        let r = classify_derham(&eq, &st).unwrap();
        assert_eq!(r.bernoulli.verdict, Verdict::AcCertified);
        assert_eq!(r.lebesgue.verdict, Verdict::SingularCertified);
        for k in 1..10 {
            let q = [rat(k, 10), rat(10 - k, 10)];
            let w = singularity_witness(&eq, &q).unwrap();
            assert_eq!(w.is_some(), q != p);
        }
    }

    #[test]
    fn checkpoints_cover_horizon() {
        assert_eq!(checkpoints(1000), vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]);
        assert_eq!(*checkpoints(1234).last().unwrap(), 1234);
    }
}
