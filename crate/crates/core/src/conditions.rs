//! Semi-decision procedures for the orbit conditions (A), (wA), (B), (sB)
//! and the comparison box test, plus the geometric overlap verifier.
//!
//! The conditions quantify over the whole orbit `Y(y)`, which is infinite in
//! general, so a verdict is one of: holds at the explored resolution, fails
//! with a replayable witness, or unknown.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::symbolic::{polygon_diameter, polygon_distance, IfsGeometry, Word};
use crate::systems::{evaluate_step, DrivenSystem, State};

#[derive(Clone, Debug, Serialize)]
pub struct ConditionSettings {
    pub depth: usize,
    pub dedup: f64,
    pub margin: f64,
    pub magnitude_cap: f64,
    pub max_states: usize,
    /// Length `K` of the chain probes; trends are compared at `K` and `2K`.
    pub chain_length: usize,
}

impl Default for ConditionSettings {
    fn default() -> Self {
        Self {
            depth: 12,
            dedup: 1e-9,
            margin: 1e-6,
            magnitude_cap: 1e6,
            max_states: 200_000,
            chain_length: 1024,
        }
    }
}

/// A point of `Y(y)` with an address reaching it from the root.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitState {
    pub state: State,
    pub word: Word,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitApproximation {
    pub root: State,
    pub depth_requested: usize,
    pub depth_reached: usize,
    pub dedup_tolerance: f64,
    /// Some state was beyond the magnitude cap and was not expanded.
    pub capped: bool,
    /// The state budget stopped the enumeration early.
    pub truncated: bool,
    pub states: Vec<OrbitState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Scalar(i64),
    Circle(i64, i64),
    PosInf,
    Wild(u64),
}

fn key(y: &State, tol: f64) -> Key {
    let q = |x: f64| (x / tol).round() as i64;
    match y {
        State::Scalar(x) if x.is_finite() && x.abs() < 1e6 => Key::Scalar(q(*x)),
        State::Scalar(x) => Key::Wild(x.to_bits()),
        State::Circle([a, b]) => Key::Circle(q(*a), q(*b)),
        State::PosInf => Key::PosInf,
    }
}

fn magnitude(y: &State) -> f64 {
    match y {
        State::Scalar(x) => x.abs(),
        State::Circle(_) => 1.0,
        State::PosInf => 0.0,
    }
}

/// Breadth-first enumeration of `H_{i_l} ∘ ⋯ ∘ H_{i_1}(y)`, `l ≤ depth`,
/// including the root.
pub fn orbit(system: &DrivenSystem, depth: usize, settings: &ConditionSettings) -> Result<OrbitApproximation> {
    if depth == 0 {
        return Err(Error::InvalidArgument("orbit depth must be at least 1".into()));
    }
    let n = system.alphabet_size();
    let root = system.initial;
    system.check_state(&root)?;
    let mut seen = HashSet::new();
    seen.insert(key(&root, settings.dedup));
    let mut states = vec![OrbitState { state: root, word: Word::empty(n) }];
    let mut frontier = vec![0usize];
    let mut capped = false;
    let mut truncated = false;
    let mut depth_reached = 0;
    'levels: for level in 1..=depth {
        let mut next = Vec::new();
        for &idx in &frontier {
            let parent = states[idx].clone();
            if magnitude(&parent.state) > settings.magnitude_cap {
                capped = true;
                continue;
            }
            for i in 0..n {
                let y = system.transition(i, &parent.state)?;
                if seen.insert(key(&y, settings.dedup)) {
                    if states.len() >= settings.max_states {
                        truncated = true;
                        break 'levels;
                    }
                    states.push(OrbitState { state: y, word: parent.word.child(i)? });
                    next.push(states.len() - 1);
                }
            }
        }
        depth_reached = level;
        if next.is_empty() {
            depth_reached = depth;
            break;
        }
        frontier = next;
    }
    Ok(OrbitApproximation {
        root,
        depth_requested: depth,
        depth_reached,
        dedup_tolerance: settings.dedup,
        capped,
        truncated,
        states,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    HoldsAtResolution,
    FailsWithWitness,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
pub struct Resolution {
    pub depth_requested: usize,
    pub depth_reached: usize,
    pub states: usize,
    pub margin: f64,
    pub dedup: f64,
    pub capped: bool,
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_word: Option<Word>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Bounds {
    pub symbol: usize,
    pub inf: f64,
    pub sup: f64,
}

/// A concrete state (reached from the root by `word`) and the `G` values
/// that exhibit the failure. For box tests `probe` is the word `i_1…i_l`
/// and `values` holds `G(z)` followed by `G(H_probe(z))`.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub state: State,
    pub word: Word,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<Word>,
    pub values: Vec<f64>,
    pub detail: String,
    /// `(k, G_j(z_k))` samples along a chain probe.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trend: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionVerdict {
    pub condition: String,
    pub status: Status,
    pub resolution: Resolution,
    pub bounds: Vec<Bounds>,
    pub witness: Option<Witness>,
}

impl ConditionVerdict {
    pub fn holds(&self) -> bool {
        self.status == Status::HoldsAtResolution
    }

    pub fn fails(&self) -> bool {
        self.status == Status::FailsWithWitness
    }
}

fn resolution(o: &OrbitApproximation, s: &ConditionSettings) -> Resolution {
    Resolution {
        depth_requested: o.depth_requested,
        depth_reached: o.depth_reached,
        states: o.states.len(),
        margin: s.margin,
        dedup: s.dedup,
        capped: o.capped,
        truncated: o.truncated,
        eps0: None,
        l: None,
        probe_word: None,
    }
}

/// Replays a witness from the root through `evaluate_step` and compares the
/// recorded values.
pub fn verify_witness(system: &DrivenSystem, w: &Witness) -> Result<bool> {
    let mut y = system.initial;
    for &i in w.word.symbols() {
        y = evaluate_step(system, &y, i)?.1;
    }
    let same_state = match (&y, &w.state) {
        (State::Scalar(a), State::Scalar(b)) => (a - b).abs() <= 1e-10 * (1.0 + b.abs()),
        (State::Circle(a), State::Circle(b)) => (a[0] - b[0]).abs() <= 1e-10 && (a[1] - b[1]).abs() <= 1e-10,
        (State::PosInf, State::PosInf) => true,
        _ => false,
    };
    if !same_state {
        return Ok(false);
    }
    let mut values = system.probabilities(&y)?;
    if let Some(probe) = &w.probe {
        let mut z = y;
        for &i in probe.symbols() {
            z = evaluate_step(system, &z, i)?.1;
        }
        values.extend(system.probabilities(&z)?);
    }
    Ok(values.len() == w.values.len() && values.iter().zip(&w.values).all(|(a, b)| (a - b).abs() <= 1e-10))
}

struct Scan {
    orbit: OrbitApproximation,
    probs: Vec<Vec<f64>>,
    bounds: Vec<Bounds>,
}

fn scan(system: &DrivenSystem, settings: &ConditionSettings) -> Result<Scan> {
    let orbit = orbit(system, settings.depth, settings)?;
    let n = system.alphabet_size();
    let probs: Vec<Vec<f64>> =
        orbit.states.iter().map(|s| system.probabilities(&s.state)).collect::<Result<_>>()?;
    let bounds = (0..n)
        .map(|j| {
            let (mut inf, mut sup) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &probs {
                inf = inf.min(p[j]);
                sup = sup.max(p[j]);
            }
            Bounds { symbol: j, inf, sup }
        })
        .collect();
    Ok(Scan { orbit, probs, bounds })
}

fn boundary_gap(g: f64) -> f64 {
    g.min(1.0 - g)
}

/// Looks for a state with `G_j` at `{0, 1}` or a chain `H_i^k(z)` along
/// which `G_j` runs monotonically to the boundary.
fn boundary_witness(
    system: &DrivenSystem,
    sc: &Scan,
    j: usize,
    settings: &ConditionSettings,
) -> Result<Option<Witness>> {
    for (s, p) in sc.orbit.states.iter().zip(&sc.probs) {
        if boundary_gap(p[j]) <= 1e-12 {
            return Ok(Some(Witness {
                state: s.state,
                word: s.word.clone(),
                probe: None,
                values: p.clone(),
                detail: format!("G_{j} = {} on the orbit", p[j]),
                trend: Vec::new(),
            }));
        }
    }
    // Chain probes from the root and from the states extremal for G_j.
    let mut starts = vec![0usize];
    let arg = |better: fn(f64, f64) -> bool| {
        let mut best = 0;
        for (k, p) in sc.probs.iter().enumerate() {
            if better(p[j], sc.probs[best][j]) {
                best = k;
            }
        }
        best
    };
    starts.push(arg(|a, b| a < b));
    starts.push(arg(|a, b| a > b));
    starts.dedup();
    let big_k = settings.chain_length;
    for &start in &starts {
        let origin = &sc.orbit.states[start];
        for i in 0..system.alphabet_size() {
            let mut z = origin.state;
            let mut gaps = Vec::with_capacity(2 * big_k + 1);
            let mut trend = Vec::new();
            let mut ok = true;
            for k in 0..=2 * big_k {
                let g = system.probabilities(&z)?[j];
                gaps.push(boundary_gap(g));
                if k == 0 || k.is_power_of_two() {
                    trend.push((k, g));
                }
                if k < 2 * big_k {
                    z = system.transition(i, &z)?;
                    if magnitude(&z) > settings.magnitude_cap * 1e3 {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-15);
            let (gk, g2k) = (gaps[big_k], gaps[2 * big_k]);
            if monotone && gaps[0] > g2k && g2k <= 0.75 * gk {
                let mut word = origin.word.clone();
                for _ in 0..2 * big_k {
                    word = word.child(i)?;
                }
                return Ok(Some(Witness {
                    state: z,
                    word,
                    probe: None,
                    values: system.probabilities(&z)?,
                    detail: format!(
                        "G_{j} along H_{i}^k from the orbit state {}: boundary gap {gk:.3e} at k = {big_k}, {g2k:.3e} at k = {}",
                        origin.state,
                        2 * big_k
                    ),
                    trend,
                }));
            }
        }
    }
    Ok(None)
}

/// (A-y): `0 < inf G_i ≤ sup G_i < 1` over `Y(y)` for every `i`.
pub fn check_a(system: &DrivenSystem, settings: &ConditionSettings) -> Result<ConditionVerdict> {
    let sc = scan(system, settings)?;
    let n = system.alphabet_size();
    let mut witness = None;
    for j in 0..n {
        if let Some(w) = boundary_witness(system, &sc, j, settings)? {
            witness = Some(w);
            break;
        }
    }
    let inside = sc.bounds.iter().all(|b| b.inf >= settings.margin && b.sup <= 1.0 - settings.margin);
    let status = if witness.is_some() {
        Status::FailsWithWitness
    } else if inside && !sc.orbit.capped {
        Status::HoldsAtResolution
    } else {
        Status::Unknown
    };
    Ok(ConditionVerdict {
        condition: "A".into(),
        status,
        resolution: resolution(&sc.orbit, settings),
        bounds: sc.bounds,
        witness,
    })
}

/// (wA-y): the same for some single `i`.
pub fn check_wa(system: &DrivenSystem, settings: &ConditionSettings) -> Result<ConditionVerdict> {
    let sc = scan(system, settings)?;
    let n = system.alphabet_size();
    let mut witnesses = Vec::new();
    let mut any_inside = false;
    for j in 0..n {
        match boundary_witness(system, &sc, j, settings)? {
            Some(w) => witnesses.push(w),
            None => {
                let b = &sc.bounds[j];
                any_inside |= b.inf >= settings.margin && b.sup <= 1.0 - settings.margin;
            }
        }
    }
    let (status, witness) = if witnesses.len() == n {
        let mut w = witnesses.swap_remove(0);
        w.detail = format!("every G_i reaches the boundary; first: {}", w.detail);
        (Status::FailsWithWitness, Some(w))
    } else if any_inside && !sc.orbit.capped {
        (Status::HoldsAtResolution, None)
    } else {
        (Status::Unknown, None)
    };
    Ok(ConditionVerdict {
        condition: "wA".into(),
        status,
        resolution: resolution(&sc.orbit, settings),
        bounds: sc.bounds,
        witness,
    })
}

#[derive(Clone, Debug)]
enum BoxOutcome {
    /// Every orbit state clears the box at one end with margin.
    Empty,
    /// Some state sits in the box at both ends.
    Hit(Witness),
    Marginal,
}

fn deviation(p: &[f64], target: &[f64]) -> f64 {
    p.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn box_test(
    system: &DrivenSystem,
    sc: &Scan,
    target: &[f64],
    eps0: f64,
    probe: &Word,
    margin: f64,
) -> Result<BoxOutcome> {
    let mut marginal = sc.orbit.capped;
    for (s, p) in sc.orbit.states.iter().zip(&sc.probs) {
        let d0 = deviation(p, target);
        if d0 > eps0 + margin {
            continue;
        }
        let mut z = s.state;
        for &i in probe.symbols() {
            z = system.transition(i, &z)?;
        }
        let q = system.probabilities(&z)?;
        let d1 = deviation(&q, target);
        if d1 > eps0 + margin {
            continue;
        }
        if d0 <= eps0 - margin && d1 <= eps0 - margin {
            let mut values = p.clone();
            values.extend(q);
            return Ok(BoxOutcome::Hit(Witness {
                state: s.state,
                word: s.word.clone(),
                probe: Some(probe.clone()),
                values,
                detail: format!("max deviations {d0:.3e} and {d1:.3e} are within eps0 = {eps0}"),
                trend: Vec::new(),
            }));
        }
        marginal = true;
    }
    Ok(if marginal { BoxOutcome::Marginal } else { BoxOutcome::Empty })
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// The ε0 values tried when the caller does not fix one.
pub fn default_eps_grid(scale: f64) -> Vec<f64> {
    vec![scale / 4.0, 0.9 * scale / 2.0, scale / 8.0, scale / 16.0, scale / 32.0]
}

fn check_eps(eps0: f64, upper: f64) -> Result<()> {
    if !(eps0 > 0.0 && eps0 < upper) {
        return Err(Error::InvalidArgument(format!("eps0 = {eps0} outside (0, {upper})")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn box_verdict(
    name: &str,
    strong: bool,
    system: &DrivenSystem,
    sc: &Scan,
    target: &[f64],
    eps0: f64,
    l: usize,
    settings: &ConditionSettings,
) -> Result<ConditionVerdict> {
    let n = system.alphabet_size();
    let mut all_empty = true;
    let mut all_hit = true;
    let mut first_empty = None;
    let mut first_hit = None;
    for probe in Word::all_of_length(n, l) {
        match box_test(system, sc, target, eps0, &probe, settings.margin)? {
            BoxOutcome::Empty => {
                all_hit = false;
                first_empty.get_or_insert(probe);
            }
            BoxOutcome::Hit(w) => {
                all_empty = false;
                first_hit.get_or_insert(w);
            }
            BoxOutcome::Marginal => {
                all_hit = false;
                all_empty = false;
            }
        }
    }
    let mut res = resolution(&sc.orbit, settings);
    res.eps0 = Some(eps0);
    res.l = Some(l);
    let (status, witness) = if strong {
        if let Some(w) = first_hit {
            (Status::FailsWithWitness, Some(w))
        } else if all_empty {
            (Status::HoldsAtResolution, None)
        } else {
            (Status::Unknown, None)
        }
    } else if let Some(probe) = first_empty {
        res.probe_word = Some(probe);
        (Status::HoldsAtResolution, None)
    } else if all_hit {
        let mut w = first_hit;
        if let Some(w) = w.as_mut() {
            w.detail = format!("every word of length {l} hits the box; e.g. {}", w.detail);
        }
        (Status::FailsWithWitness, w)
    } else {
        (Status::Unknown, None)
    };
    Ok(ConditionVerdict { condition: name.into(), status, resolution: res, bounds: sc.bounds.clone(), witness })
}

/// (B-y) at fixed `(ε0, l)`: some word `i_1…i_l` separates the box.
pub fn check_b(system: &DrivenSystem, eps0: f64, l: usize, settings: &ConditionSettings) -> Result<ConditionVerdict> {
    let n = system.alphabet_size();
    check_eps(eps0, 1.0 / n as f64)?;
    if l == 0 {
        return Err(Error::InvalidArgument("l must be at least 1".into()));
    }
    let sc = scan(system, settings)?;
    box_verdict("B", false, system, &sc, &uniform(n), eps0, l, settings)
}

/// (sB-y) at fixed `(ε0, l)`: every word separates the box.
pub fn check_sb(system: &DrivenSystem, eps0: f64, l: usize, settings: &ConditionSettings) -> Result<ConditionVerdict> {
    let n = system.alphabet_size();
    check_eps(eps0, 1.0 / n as f64)?;
    if l == 0 {
        return Err(Error::InvalidArgument("l must be at least 1".into()));
    }
    let sc = scan(system, settings)?;
    box_verdict("sB", true, system, &sc, &uniform(n), eps0, l, settings)
}

/// Searches `ε0` over the default grid and `l` over `ls`: the first
/// verdict that holds is returned; the result fails only when every grid
/// point fails.
pub fn search_box_condition(
    system: &DrivenSystem,
    strong: bool,
    eps0: Option<f64>,
    ls: &[usize],
    settings: &ConditionSettings,
) -> Result<ConditionVerdict> {
    let n = system.alphabet_size();
    let grid = match eps0 {
        Some(e) => vec![e],
        None => default_eps_grid(1.0 / n as f64),
    };
    let sc = scan(system, settings)?;
    let name = if strong { "sB" } else { "B" };
    let mut all_fail = true;
    let mut last = None;
    for &l in ls {
        for &e in &grid {
            check_eps(e, 1.0 / n as f64)?;
            let v = box_verdict(name, strong, system, &sc, &uniform(n), e, l, settings)?;
            if v.holds() {
                return Ok(v);
            }
            all_fail &= v.fails();
            last = Some(v);
        }
    }
    let mut v = last.ok_or_else(|| Error::InvalidArgument("empty search grid".into()))?;
    if !all_fail {
        v.status = Status::Unknown;
        v.witness = None;
    }
    Ok(v)
}

/// The box test around a comparison vector `target` for one word.
pub fn check_multisep2(
    system: &DrivenSystem,
    target: &[f64],
    eps0: f64,
    probe: &Word,
    settings: &ConditionSettings,
) -> Result<ConditionVerdict> {
    crate::systems::check_probability_vector(target, system.alphabet_size())?;
    let min_p = target.iter().cloned().fold(f64::INFINITY, f64::min);
    check_eps(eps0, min_p)?;
    let sc = scan(system, settings)?;
    multisep2_with_scan(system, &sc, target, eps0, probe, settings)
}

fn multisep2_with_scan(
    system: &DrivenSystem,
    sc: &Scan,
    target: &[f64],
    eps0: f64,
    probe: &Word,
    settings: &ConditionSettings,
) -> Result<ConditionVerdict> {
    let outcome = box_test(system, sc, target, eps0, probe, settings.margin)?;
    let mut res = resolution(&sc.orbit, settings);
    res.eps0 = Some(eps0);
    res.l = Some(probe.len());
    res.probe_word = Some(probe.clone());
    let (status, witness) = match outcome {
        BoxOutcome::Empty => (Status::HoldsAtResolution, None),
        BoxOutcome::Hit(w) => (Status::FailsWithWitness, Some(w)),
        BoxOutcome::Marginal => (Status::Unknown, None),
    };
    Ok(ConditionVerdict { condition: "multisep2".into(), status, resolution: res, bounds: sc.bounds.clone(), witness })
}

/// Runs the comparison box test over the default `ε0` grid (scaled by
/// `min p`) and all words of length `1..=max_len`; returns the first verdict
/// that holds, otherwise the last one tried.
pub fn search_multisep2(
    system: &DrivenSystem,
    target: &[f64],
    max_len: usize,
    settings: &ConditionSettings,
) -> Result<ConditionVerdict> {
    crate::systems::check_probability_vector(target, system.alphabet_size())?;
    let min_p = target.iter().cloned().fold(f64::INFINITY, f64::min);
    let sc = scan(system, settings)?;
    let mut last = None;
    for l in 1..=max_len {
        for e in default_eps_grid(min_p) {
            for probe in Word::all_of_length(system.alphabet_size(), l) {
                let v = multisep2_with_scan(system, &sc, target, e, &probe, settings)?;
                if v.holds() {
                    return Ok(v);
                }
                last = Some(v);
            }
        }
    }
    last.ok_or_else(|| Error::InvalidArgument("empty search".into()))
}

/// Result of checking diameters and ball overlaps of level-`m` cells.
#[derive(Clone, Debug, Serialize)]
pub struct KigamiLevel {
    pub depth: usize,
    pub cells: usize,
    pub centers: usize,
    /// `max diam(K_w) / (c1 r^m)`.
    pub diameter_ratio: f64,
    pub max_overlap: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct KigamiReport {
    pub geometry: IfsGeometry,
    pub levels: Vec<KigamiLevel>,
    pub diameters_ok: bool,
    pub overlap_ok: bool,
}

/// Enumerates the cells of each level `m ≤ max_depth` and counts, for each
/// cell vertex and centroid `x`, the cells meeting the open ball
/// `B(x, r^m)`.
pub fn verify_kigami(geometry: &IfsGeometry, max_depth: usize) -> KigamiReport {
    let mut levels = Vec::new();
    for m in 1..=max_depth {
        let cells = geometry.cells(m);
        let h = geometry.r.powi(m as i32);
        let diameter_ratio = cells
            .iter()
            .map(|c| polygon_diameter(c) / (geometry.c1 * h))
            .fold(0.0, f64::max);

        // Bucket cells by the grid squares their bounding boxes cover.
        let bucket = |v: f64| (v / h).floor() as i64;
        let mut grid: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
        for (k, c) in cells.iter().enumerate() {
            let (x0, x1) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p[0]), a.1.max(p[0])));
            let (y0, y1) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p[1]), a.1.max(p[1])));
            for bx in bucket(x0)..=bucket(x1) {
                for by in bucket(y0)..=bucket(y1) {
                    grid.entry((bx, by)).or_default().push(k);
                }
            }
        }
        let mut centers: Vec<[f64; 2]> = Vec::new();
        let mut seen = HashSet::new();
        for c in &cells {
            let k = c.len() as f64;
            let centroid = [c.iter().map(|p| p[0]).sum::<f64>() / k, c.iter().map(|p| p[1]).sum::<f64>() / k];
            for p in c.iter().chain(std::iter::once(&centroid)) {
                let key = ((p[0] / h * 1e6).round() as i64, (p[1] / h * 1e6).round() as i64);
                if seen.insert(key) {
                    centers.push(*p);
                }
            }
        }
        let mut max_overlap = 0;
        let mut hits = Vec::new();
        for x in &centers {
            hits.clear();
            for bx in bucket(x[0]) - 2..=bucket(x[0]) + 2 {
                for by in bucket(x[1]) - 2..=bucket(x[1]) + 2 {
                    if let Some(ks) = grid.get(&(bx, by)) {
                        hits.extend(ks.iter().copied());
                    }
                }
            }
            hits.sort_unstable();
            hits.dedup();
            let count = hits.iter().filter(|&&k| polygon_distance(*x, &cells[k]) < h * (1.0 - 1e-9)).count();
            max_overlap = max_overlap.max(count);
        }
        levels.push(KigamiLevel { depth: m, cells: cells.len(), centers: centers.len(), diameter_ratio, max_overlap });
    }
    let diameters_ok = levels.iter().all(|l| l.diameter_ratio <= 1.0 + 1e-9);
    let overlap_ok = levels.iter().all(|l| l.max_overlap <= geometry.d);
    KigamiReport { geometry: geometry.clone(), levels, diameters_ok, overlap_ok }
}
