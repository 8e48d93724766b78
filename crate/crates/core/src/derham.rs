//! de Rham curves driven by linear fractional transformations
//! `g_i(x) = Φ(A_i; x) = (a_i x + b_i)/(c_i x + d_i)`.
//!
//! Arithmetic is exact. Matrix products are carried as integer matrices
//! (every quantity read off a product is homogeneous of degree zero in its
//! entries), and floats appear only in the derived driven system.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{bits, exact_sqrt, int, to_f64, ExtReal};
use crate::symbolic::{geometry_for, GeometryKind, Word};
use crate::systems::{
    DrivenSystem, Dynamics, ExactDynamics, ExactState, State, StateSpace, SystemMeta,
};

/// Bit budget for matrix-product entries and exact states.
pub const BIT_BUDGET: u64 = 4096;

/// A 2×2 real matrix `[[a, b], [c, d]]` acting by `z ↦ (az + b)/(cz + d)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LftMatrix {
    pub a: BigRational,
    pub b: BigRational,
    pub c: BigRational,
    pub d: BigRational,
}

impl LftMatrix {
    pub fn new(a: BigRational, b: BigRational, c: BigRational, d: BigRational) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_rows(rows: [[BigRational; 2]; 2]) -> Self {
        let [[a, b], [c, d]] = rows;
        Self { a, b, c, d }
    }

    pub fn from_ints(rows: [[i64; 2]; 2]) -> Self {
        Self::new(int(rows[0][0]), int(rows[0][1]), int(rows[1][0]), int(rows[1][1]))
    }

    pub fn identity() -> Self {
        Self::from_ints([[1, 0], [0, 1]])
    }

    pub fn det(&self) -> BigRational {
        &self.a * &self.d - &self.b * &self.c
    }

    /// Scaled so that `d = 1`; `Φ` is unchanged.
    pub fn normalized(&self) -> Result<Self> {
        if self.d.is_zero() {
            return Err(Error::InvalidArgument("cannot normalize a matrix with d = 0".into()));
        }
        Ok(Self {
            a: &self.a / &self.d,
            b: &self.b / &self.d,
            c: &self.c / &self.d,
            d: BigRational::one(),
        })
    }

    pub fn rows_f64(&self) -> [[f64; 2]; 2] {
        [[to_f64(&self.a), to_f64(&self.b)], [to_f64(&self.c), to_f64(&self.d)]]
    }

    /// The same map as an integer matrix (entries scaled by the common
    /// denominator).
    fn integer(&self) -> IntMatrix {
        let l = [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
        let scale = |q: &BigRational| q.numer() * (&l / q.denom());
        IntMatrix([scale(&self.a), scale(&self.b), scale(&self.c), scale(&self.d)])
    }
}

impl fmt::Display for LftMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

impl Serialize for LftMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = [
            [self.a.to_string(), self.b.to_string()],
            [self.c.to_string(), self.d.to_string()],
        ];
        rows.serialize(s)
    }
}

/// `Φ(A; z)` on `Q ∪ {+∞}`.
pub fn phi_transform(m: &LftMatrix, z: &ExactState) -> Result<ExactState> {
    match z {
        ExactState::PosInf => {
            if m.c.is_zero() {
                Ok(ExactState::PosInf)
            } else {
                Ok(ExactState::Finite(&m.a / &m.c))
            }
        }
        ExactState::Finite(z) => {
            let den = &m.c * z + &m.d;
            if den.is_zero() {
                return Err(Error::Pole(z.to_string()));
            }
            Ok(ExactState::Finite((&m.a * z + &m.b) / den))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct IntMatrix([BigInt; 4]);

impl IntMatrix {
    fn identity() -> Self {
        IntMatrix([BigInt::one(), BigInt::zero(), BigInt::zero(), BigInt::one()])
    }

    fn mul(&self, o: &IntMatrix) -> IntMatrix {
        let [a, b, c, d] = &self.0;
        let [e, f, g, h] = &o.0;
        IntMatrix([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }

    fn max_bits(&self) -> u64 {
        self.0.iter().map(|x| x.bits()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DeRhamFlags {
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
    pub sa3: bool,
    pub weak_contraction: bool,
    /// Indices `i < N−1` with `b_i + c_i = 0`, which (A3) permits but which
    /// break monotonicity of `G_i`.
    pub b_plus_c_zero: Vec<usize>,
}

/// A validated family, normalized to `d_i = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct DeRhamSystem {
    pub matrices: Vec<LftMatrix>,
    pub alpha: ExtReal,
    pub beta: ExtReal,
    pub flags: DeRhamFlags,
    #[serde(serialize_with = "crate::rational::serde_rational::option::serialize")]
    pub c_moebius: Option<BigRational>,
    /// `(1 + c_0 − a_0 N)/(a_0 (N−1))`, the only candidate point where all
    /// `G_i` equal `1/N`.
    #[serde(serialize_with = "crate::rational::serde_rational::option::serialize")]
    pub uniform_point: Option<BigRational>,
}

struct Failure {
    condition: &'static str,
    index: usize,
    detail: String,
}

fn a3_parts(m: &LftMatrix) -> (bool, bool) {
    // √det ≤ min{d, c+d} with both sides positive is det ≤ d² and det ≤ (c+d)².
    let det = m.det();
    let cd = &m.c + &m.d;
    if !m.d.is_positive() || !cd.is_positive() || !det.is_positive() {
        return (false, false);
    }
    let d2 = &m.d * &m.d;
    let cd2 = &cd * &cd;
    (det <= d2 && det <= cd2, det < d2 && det < cd2)
}

/// Checks (A1)–(A3), normalizes, and computes `[α, β]` and the flags.
pub fn validate(matrices: &[LftMatrix]) -> Result<DeRhamSystem> {
    let n = matrices.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 matrices, got {n}")));
    }
    let mut failures = Vec::new();
    let mut flags = DeRhamFlags { a1: true, a2: true, a3: true, sa3: true, ..Default::default() };
    for (i, m) in matrices.iter().enumerate() {
        if !m.det().is_positive() {
            flags.a2 = false;
            failures.push(Failure { condition: "A2", index: i, detail: format!("det = {}", m.det()) });
        }
        let (a3, sa3) = a3_parts(m);
        flags.sa3 &= sa3;
        if !a3 {
            flags.a3 = false;
            failures.push(Failure {
                condition: "A3",
                index: i,
                detail: format!("sqrt(det) = sqrt({}) exceeds min(d, c+d) = min({}, {})", m.det(), m.d, &m.c + &m.d),
            });
        }
    }
    let mut normalized = Vec::with_capacity(n);
    for m in matrices {
        normalized.push(if m.d.is_zero() { m.clone() } else { m.normalized()? });
    }
    let zero = ExactState::Finite(BigRational::zero());
    let one = ExactState::Finite(BigRational::one());
    let eval = |m: &LftMatrix, z: &ExactState| phi_transform(m, z).ok();
    if eval(&normalized[0], &zero) != Some(zero.clone()) {
        flags.a1 = false;
        failures.push(Failure { condition: "A1", index: 0, detail: "Phi(A_0; 0) != 0".into() });
    }
    if eval(&normalized[n - 1], &one) != Some(one.clone()) {
        flags.a1 = false;
        failures.push(Failure { condition: "A1", index: n - 1, detail: "Phi(A_{N-1}; 1) != 1".into() });
    }
    for i in 1..n {
        let left = eval(&normalized[i - 1], &one);
        let right = eval(&normalized[i], &zero);
        if left.is_none() || left != right {
            flags.a1 = false;
            failures.push(Failure {
                condition: "A1",
                index: i,
                detail: format!("Phi(A_{}; 1) != Phi(A_{i}; 0)", i - 1),
            });
        }
    }
    if let Some(first) = failures.first() {
        let mut detail = first.detail.clone();
        let rest: Vec<String> =
            failures[1..].iter().map(|f| format!("{} at {}", f.condition, f.index)).collect();
        if !rest.is_empty() {
            detail.push_str(&format!(" (also: {})", rest.join(", ")));
        }
        return Err(Error::Condition { condition: first.condition, index: first.index, detail });
    }

    for (i, m) in normalized.iter().enumerate() {
        if i >= 1 && !(m.b.is_positive() && m.b < BigRational::one()) {
            return Err(Error::Consistency(format!("b_{i} = {} outside (0, 1)", m.b)));
        }
        if i + 1 < n && (&m.b + &m.c).is_zero() {
            flags.b_plus_c_zero.push(i);
        }
    }
    flags.weak_contraction = normalized
        .iter()
        .all(|m| if m.c.is_zero() { m.a < BigRational::one() } else { flags.a3 });

    let (alpha, beta) = alpha_beta(&normalized)?;
    check_trichotomy(&normalized, &alpha, &beta)?;
    let c_moebius = moebius_constant(&normalized);
    let a0 = &normalized[0].a;
    let uniform_point = (!a0.is_zero()).then(|| {
        (int(1) + &normalized[0].c - a0 * int(n as i64)) / (a0 * int(n as i64 - 1))
    });
    let system = DeRhamSystem { matrices: normalized, alpha, beta, flags, c_moebius, uniform_point };
    system.check_invariance()?;
    Ok(system)
}

fn ext_min(x: ExtReal, y: ExtReal) -> ExtReal {
    if less(&y, &x) { y } else { x }
}

fn ext_max(x: ExtReal, y: ExtReal) -> ExtReal {
    if less(&x, &y) { y } else { x }
}

fn less(x: &ExtReal, y: &ExtReal) -> bool {
    match (x.as_exact(), y.as_exact()) {
        (Some(p), Some(q)) => p < q,
        _ => x.to_f64() < y.to_f64(),
    }
}

fn alpha_beta(ms: &[LftMatrix]) -> Result<(ExtReal, ExtReal)> {
    let zero = ExtReal::Exact(BigRational::zero());
    let mut alpha = zero.clone();
    let mut beta = zero;
    let m0 = &ms[0];
    if m0.a.is_one() {
        alpha = ext_min(alpha, ExtReal::minus_one());
        beta = ExtReal::PosInf;
    } else {
        let e0 = ExtReal::Exact(&m0.c / (BigRational::one() - &m0.a));
        alpha = ext_min(alpha, e0.clone());
        beta = ext_max(beta, e0);
    }
    for m in &ms[1..] {
        let root = positive_root(m);
        alpha = ext_min(alpha, root.clone());
        beta = ext_max(beta, root);
    }
    Ok((alpha, beta))
}

/// `(a − 1 + √((1−a)² + 4bc))/(2b)`, the larger fixed point of `H_i`.
fn positive_root(m: &LftMatrix) -> ExtReal {
    let one = BigRational::one();
    let disc = (&one - &m.a) * (&one - &m.a) + int(4) * &m.b * &m.c;
    let two_b = int(2) * &m.b;
    match exact_sqrt(&disc) {
        Some(r) => ExtReal::Exact((&m.a - &one + r) / two_b),
        None => {
            let r = to_f64(&disc).max(0.0).sqrt();
            ExtReal::Approx((to_f64(&m.a) - 1.0 + r) / to_f64(&two_b))
        }
    }
}

fn check_trichotomy(ms: &[LftMatrix], alpha: &ExtReal, beta: &ExtReal) -> Result<()> {
    let n = ms.len();
    let minus_one = -1.0;
    let (lo, hi) = (alpha.to_f64(), beta.to_f64());
    let ok = if ms[0].a.is_one() {
        lo == minus_one && hi.is_infinite()
    } else if (&ms[n - 1].b + &ms[n - 1].c).is_zero() {
        (lo - minus_one).abs() < 1e-12 && lo <= hi && hi.is_finite()
    } else {
        lo > minus_one && lo <= hi && hi.is_finite()
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Consistency(format!("state interval [{alpha}, {beta}] violates the endpoint trichotomy")))
    }
}

fn moebius_constant(ms: &[LftMatrix]) -> Option<BigRational> {
    let n = ms.len() as i64;
    let c = &ms[0].c * int(n) / int(n - 1);
    for (i, m) in ms.iter().enumerate() {
        let i = i as i64;
        let den = int(n - i) * &c + int(n);
        if den.is_zero() {
            return None;
        }
        let b = int(i) / den;
        let a = (int(n + 1) * &c * &b + int(1)) / int(n);
        let cc = &c * (int(n - 1) - &c * &b) / int(n);
        if m.b != b || m.a != a || m.c != cc {
            return None;
        }
    }
    Some(c)
}

impl DeRhamSystem {
    pub fn alphabet_size(&self) -> usize {
        self.matrices.len()
    }

    fn b(&self, k: usize) -> BigRational {
        if k == self.matrices.len() { BigRational::one() } else { self.matrices[k].b.clone() }
    }

    /// `Fix(H_0) = c_0/(1 − a_0)` when `a_0 < 1`.
    pub fn e0(&self) -> Option<BigRational> {
        let m0 = &self.matrices[0];
        (m0.a < BigRational::one()).then(|| &m0.c / (BigRational::one() - &m0.a))
    }

    /// `G_k(y)` by the simplified telescoping form.
    pub fn g_exact(&self, k: usize, y: &ExactState) -> BigRational {
        let n = self.matrices.len();
        match y {
            ExactState::PosInf => {
                if k == 0 { BigRational::one() } else { BigRational::zero() }
            }
            ExactState::Finite(y) => {
                let one = BigRational::one();
                let bk = self.b(k);
                if k + 1 == n {
                    (&one - &bk) / (&bk * y + &one)
                } else {
                    let bk1 = self.b(k + 1);
                    (y + &one) * (&bk1 - &bk) / ((&bk1 * y + &one) * (&bk * y + &one))
                }
            }
        }
    }

    /// `G_k(y)` by the defining formula; `None` where it is `0/0`.
    pub fn g_defining_exact(&self, k: usize, y: &BigRational) -> Option<BigRational> {
        let m = &self.matrices[k];
        let one = BigRational::one();
        let den = (&m.b * y + &one) * ((&m.a + &m.b) * y + &m.c + &one);
        (!den.is_zero()).then(|| (&m.a - &m.b * &m.c) * (y + &one) / den)
    }

    pub fn h_exact(&self, k: usize, y: &ExactState) -> ExactState {
        let m = &self.matrices[k];
        match y {
            ExactState::PosInf => {
                if k == 0 { ExactState::PosInf } else { ExactState::Finite(&m.a / &m.b) }
            }
            ExactState::Finite(y) => {
                ExactState::Finite((&m.a * y + &m.c) / (&m.b * y + BigRational::one()))
            }
        }
    }

    fn check_invariance(&self) -> Result<()> {
        let (lo, hi) = (self.alpha.to_f64(), self.beta.to_f64());
        let dyn_ = DeRhamDynamics::new(self);
        let mut ends = vec![State::Scalar(lo)];
        ends.push(if hi.is_infinite() { State::PosInf } else { State::Scalar(hi) });
        for y in &ends {
            for k in 0..self.matrices.len() {
                let z = dyn_.transition(k, y);
                let ok = match z {
                    State::PosInf => hi.is_infinite(),
                    State::Scalar(z) => z >= lo - 1e-12 && z <= hi + 1e-12 * (1.0 + hi.abs()),
                    State::Circle(_) => false,
                };
                if !ok {
                    return Err(Error::Consistency(format!("H_{k}({y}) = {z} leaves [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    /// The Möbius closed form `x/(1 − C(x−1))`, when detected.
    pub fn moebius_closed_form(&self, x: &BigRational) -> Option<BigRational> {
        let c = self.c_moebius.as_ref()?;
        Some(x / (int(1) - c * (x - int(1))))
    }
}

/// Floating and exact evaluation of the driven system `(G_k, H_k)` on `[α, β]`.
#[derive(Debug)]
pub struct DeRhamDynamics {
    system: DeRhamSystem,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl DeRhamDynamics {
    fn new(system: &DeRhamSystem) -> Self {
        let f = |g: fn(&LftMatrix) -> &BigRational| system.matrices.iter().map(|m| to_f64(g(m))).collect();
        Self {
            a: f(|m| &m.a),
            b: f(|m| &m.b),
            c: f(|m| &m.c),
            lo: system.alpha.to_f64(),
            hi: system.beta.to_f64(),
            system: system.clone(),
        }
    }

    fn bf(&self, k: usize) -> f64 {
        if k == self.b.len() { 1.0 } else { self.b[k] }
    }

    fn g(&self, k: usize, y: f64) -> f64 {
        let n = self.b.len();
        if y.is_infinite() {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        let bk = self.bf(k);
        if k + 1 == n {
            (1.0 - bk) / (bk * y + 1.0)
        } else {
            let bk1 = self.bf(k + 1);
            (y + 1.0) * (bk1 - bk) / ((bk1 * y + 1.0) * (bk * y + 1.0))
        }
    }

    /// The defining form, used only for cross-checks.
    fn g_defining(&self, k: usize, y: f64) -> f64 {
        let (a, b, c) = (self.a[k], self.b[k], self.c[k]);
        (a - b * c) * (y + 1.0) / ((b * y + 1.0) * ((a + b) * y + c + 1.0))
    }
}

impl Dynamics for DeRhamDynamics {
    fn alphabet_size(&self) -> usize {
        self.a.len()
    }
    fn space(&self) -> StateSpace {
        StateSpace::Interval { lo: self.lo, hi: self.hi }
    }
    fn probabilities(&self, y: &State) -> Vec<f64> {
        let y = y.scalar().unwrap_or(f64::NAN);
        (0..self.a.len()).map(|k| self.g(k, y)).collect()
    }
    fn transition(&self, k: usize, y: &State) -> State {
        let y = y.scalar().unwrap_or(f64::NAN);
        if y.is_infinite() {
            return if k == 0 { State::PosInf } else { State::Scalar(self.a[k] / self.b[k]) };
        }
        let z = (self.a[k] * y + self.c[k]) / (self.b[k] * y + 1.0);
        if z.is_infinite() && self.hi.is_infinite() { State::PosInf } else { State::Scalar(z) }
    }
    fn exact(&self) -> Option<&dyn ExactDynamics> {
        Some(self)
    }
}

fn budget(q: &BigRational) -> Result<()> {
    if bits(q) > BIT_BUDGET {
        return Err(Error::Budget(format!("exact state exceeds {BIT_BUDGET} bits")));
    }
    Ok(())
}

impl ExactDynamics for DeRhamDynamics {
    fn probabilities_exact(&self, y: &ExactState) -> Result<Vec<BigRational>> {
        if let ExactState::Finite(q) = y {
            budget(q)?;
        }
        Ok((0..self.a.len()).map(|k| self.system.g_exact(k, y)).collect())
    }
    fn transition_exact(&self, k: usize, y: &ExactState) -> Result<ExactState> {
        let z = self.system.h_exact(k, y);
        if let ExactState::Finite(q) = &z {
            budget(q)?;
        }
        Ok(z)
    }
}

/// The driven system of a validated family, started at `y = 0`. Both forms
/// of `G_k` are compared on a grid of `[α, β]` (compactified when `β = +∞`).
pub fn derived_system(system: &Arc<DeRhamSystem>) -> Result<DrivenSystem> {
    let dynamics = DeRhamDynamics::new(system);
    let n = system.alphabet_size();
    let (lo, hi) = (dynamics.lo, dynamics.hi);
    for j in 0..=1000 {
        let t = j as f64 / 1000.0;
        let y = if hi.is_infinite() {
            // t ↦ lo + t/(1−t) covers [lo, +∞).
            if j == 1000 { continue } else { lo + t / (1.0 - t) }
        } else {
            lo + t * (hi - lo)
        };
        let mut total = 0.0;
        for k in 0..n {
            let g = dynamics.g(k, y);
            total += g;
            let d = dynamics.g_defining(k, y);
            if d.is_finite() && (g - d).abs() > 1e-12 * (1.0 + g.abs()) {
                return Err(Error::Consistency(format!("G_{k}({y}): {g} vs defining form {d}")));
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Consistency(format!("G sums to {total} at y = {y}")));
        }
    }
    Ok(DrivenSystem {
        label: "derham_lft".into(),
        dynamics: Arc::new(dynamics),
        initial: State::Scalar(0.0),
        initial_exact: Some(ExactState::Finite(BigRational::zero())),
        geometry: geometry_for(GeometryKind::Interval(n)),
        meta: SystemMeta::DeRham(system.clone()),
    })
}

/// Endpoint values of `φ` on a cylinder and its `μ_φ` mass.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CurveCylinder {
    #[serde(serialize_with = "crate::rational::serde_rational::serialize")]
    pub phi_left: BigRational,
    #[serde(serialize_with = "crate::rational::serde_rational::serialize")]
    pub phi_right: BigRational,
    #[serde(serialize_with = "crate::rational::serde_rational::serialize")]
    pub mass: BigRational,
}

/// `φ` at the endpoints of the cylinder of `word`, from the product
/// `A_{i_1}⋯A_{i_k} = [[p, q], [r, s]]`: `φ_left = q/s`,
/// `φ_right = (p+q)/(r+s)`, mass `(ps − qr)/(s(r+s))`.
pub fn curve_eval(system: &DeRhamSystem, word: &Word) -> Result<CurveCylinder> {
    if word.alphabet() != system.alphabet_size() {
        return Err(Error::InvalidArgument(format!(
            "word over {} symbols for a system with {}",
            word.alphabet(),
            system.alphabet_size()
        )));
    }
    let ints: Vec<IntMatrix> = system.matrices.iter().map(LftMatrix::integer).collect();
    let mut prod = IntMatrix::identity();
    for &i in word.symbols() {
        prod = prod.mul(&ints[i]);
        if prod.max_bits() > BIT_BUDGET {
            return Err(Error::Budget(format!("matrix product exceeds {BIT_BUDGET} bits")));
        }
    }
    let [p, q, r, s] = prod.0;
    let phi_left = BigRational::new(q.clone(), s.clone());
    let phi_right = BigRational::new(&p + &q, &r + &s);
    let mass = BigRational::new(&p * &s - &q * &r, &s * (&r + &s));
    Ok(CurveCylinder { phi_left, phi_right, mass })
}

/// `φ(Σ i_k N^{-k})` in floating point, for long words.
pub fn curve_point_f64(system: &DeRhamSystem, symbols: &[usize]) -> f64 {
    let ms: Vec<[[f64; 2]; 2]> = system.matrices.iter().map(LftMatrix::rows_f64).collect();
    let mut p = [[1.0, 0.0], [0.0, 1.0]];
    for &i in symbols {
        let m = &ms[i];
        let mut next = [
            [p[0][0] * m[0][0] + p[0][1] * m[1][0], p[0][0] * m[0][1] + p[0][1] * m[1][1]],
            [p[1][0] * m[0][0] + p[1][1] * m[1][0], p[1][0] * m[0][1] + p[1][1] * m[1][1]],
        ];
        let scale = next.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if scale > 0.0 {
            for x in next.iter_mut().flatten() {
                *x /= scale;
            }
        }
        p = next;
    }
    p[0][1] / p[1][1]
}

/// `φ` at an N-adic rational `t`, exactly.
pub fn curve_at(system: &DeRhamSystem, t: &BigRational) -> Result<BigRational> {
    let n = system.alphabet_size();
    if t.is_negative() || t > &BigRational::one() {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    if t.is_one() {
        return Ok(BigRational::one());
    }
    let mut den = t.denom().clone();
    let mut depth = 0usize;
    let nb = BigInt::from(n);
    while !den.is_one() {
        let (q, r) = den.div_rem(&nb);
        if !r.is_zero() {
            // Not N-adic: reduce the denominator fully or give up.
            let g = den.gcd(&nb);
            if g.is_one() {
                return Err(Error::InvalidArgument(format!("t = {t} is not {n}-adic")));
            }
            den = &den / &g;
        } else {
            den = q;
        }
        depth += 1;
    }
    let scaled = t * BigRational::from_integer(num_traits::pow(nb.clone(), depth));
    let mut k = scaled.to_integer();
    let mut symbols = vec![0usize; depth];
    for slot in symbols.iter_mut().rev() {
        let (q, r) = k.div_rem(&nb);
        *slot = r.to_usize().unwrap_or(0);
        k = q;
    }
    Ok(curve_eval(system, &Word::new(symbols, n)?)?.phi_left)
}

pub fn state_interval(system: &DeRhamSystem) -> (ExtReal, ExtReal) {
    (system.alpha.clone(), system.beta.clone())
}

pub fn detect_moebius_case(system: &DeRhamSystem) -> Option<BigRational> {
    system.c_moebius.clone()
}

/// The matrices of the Möbius absolutely continuous case with constant `C`.
pub fn moebius_matrices(n: usize, c: &BigRational) -> Result<Vec<LftMatrix>> {
    if n < 2 {
        return Err(Error::InvalidArgument("N must be at least 2".into()));
    }
    let nn = n as i64;
    (0..nn)
        .map(|i| {
            let den = int(nn - i) * c + int(nn);
            if !den.is_positive() {
                return Err(Error::InvalidArgument(format!("C = {c} makes (N-i)C + N nonpositive")));
            }
            let b = int(i) / den;
            let a = (int(nn + 1) * c * &b + int(1)) / int(nn);
            let cc = c * (int(nn - 1) - c * &b) / int(nn);
            Ok(LftMatrix::new(a, b, cc, int(1)))
        })
        .collect()
}

pub fn moebius_system(n: usize, c: &BigRational) -> Result<DeRhamSystem> {
    validate(&moebius_matrices(n, c)?)
}

/// The inverse of Minkowski's question-mark function.
pub fn minkowski_system() -> DeRhamSystem {
    validate(&[LftMatrix::from_ints([[1, 0], [1, 1]]), LftMatrix::from_ints([[0, 1], [-1, 2]])])
        .expect("the Minkowski pair satisfies (A1)-(A3)")
}

/// Affine maps `x ↦ w_i x + (w_0 + … + w_{i−1})`.
pub fn linear_matrices(weights: &[BigRational]) -> Vec<LftMatrix> {
    let mut s = BigRational::zero();
    weights
        .iter()
        .map(|w| {
            let m = LftMatrix::new(w.clone(), s.clone(), BigRational::zero(), int(1));
            s += w;
            m
        })
        .collect()
}

fn check_prob(p: &[BigRational]) -> Result<()> {
    if p.len() < 2 || p.iter().any(|x| !x.is_positive()) || !p.iter().sum::<BigRational>().is_one() {
        return Err(Error::NotProbability(format!(
            "[{}]",
            p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}

/// Matrices whose curve measure is equivalent to the `p`-Bernoulli measure,
/// with `e_0 = c_0/(1 − a_0)`.
pub fn bernoulli_equivalence_params(p: &[BigRational], e0: &BigRational) -> Result<Vec<LftMatrix>> {
    check_prob(p)?;
    let one = BigRational::one();
    let mut s = BigRational::zero();
    let mut out = Vec::with_capacity(p.len());
    for pi in p {
        let t = &s + pi;
        let den = (&one - &s) * e0 + &one;
        if den.is_zero() {
            return Err(Error::InvalidArgument(format!("e0 = {e0} gives a zero denominator")));
        }
        let a = (pi + e0 * &t) / &den;
        let b = &s / &den;
        let c = e0 * ((&one - &t) * e0 + &one - pi) / &den;
        out.push(LftMatrix::new(a, b, c, one.clone()));
        s = t;
    }
    validate(&out)?;
    Ok(out)
}

/// The Bernoulli weights `p` for which `μ_φ ≪ μ_p`, if any.
pub fn is_ac_with_bernoulli(system: &DeRhamSystem) -> Option<Vec<BigRational>> {
    let e0 = system.e0()?;
    let one = BigRational::one();
    let n = system.alphabet_size();
    let mut s: Vec<BigRational> = system
        .matrices
        .iter()
        .map(|m| &m.b * (&e0 + &one) / (&one + &m.b * &e0))
        .collect();
    s.push(one.clone());
    let p: Vec<BigRational> = (0..n).map(|i| &s[i + 1] - &s[i]).collect();
    if p.iter().any(|x| !x.is_positive() || x >= &one) {
        return None;
    }
    let rebuilt = bernoulli_equivalence_params(&p, &e0).ok()?;
    (rebuilt == system.matrices).then_some(p)
}

/// Exact evidence that `μ_φ ⊥ μ_q`: a state `y` of `[α, β]`, a symbol `i`
/// and the values showing the box around `q` cannot contain both `y` and
/// `H_i(y)`.
#[derive(Clone, Debug, Serialize)]
pub struct BernoulliWitness {
    pub reason: String,
    pub state: String,
    pub symbol: usize,
    pub values: Vec<String>,
}

pub fn singularity_witness(system: &DeRhamSystem, q: &[BigRational]) -> Result<Option<BernoulliWitness>> {
    check_prob(q)?;
    let n = system.alphabet_size();
    if q.len() != n {
        return Err(Error::InvalidArgument("comparison vector has the wrong length".into()));
    }
    let Some(e0) = system.e0() else { return Ok(None) };
    let m0 = &system.matrices[0];
    let e0s = ExactState::Finite(e0.clone());
    if q[0] != m0.a {
        // G_0 is increasing with G_0^{-1}(q_0) = (q_0 − b_1)/(b_1(1 − q_0)),
        // which is not the fixed point of H_0.
        let b1 = system.b(1);
        let y = (&q[0] - &b1) / (&b1 * (int(1) - &q[0]));
        let ys = ExactState::Finite(y.clone());
        let g = system.g_exact(0, &ys);
        let hy = system.h_exact(0, &ys);
        let gh = system.g_exact(0, &hy);
        if g == q[0] && gh != q[0] {
            return Ok(Some(BernoulliWitness {
                reason: "G_0(y) = q_0 but G_0(H_0(y)) != q_0".into(),
                state: y.to_string(),
                symbol: 0,
                values: vec![g.to_string(), gh.to_string()],
            }));
        }
        return Ok(None);
    }
    for (i, qi) in q.iter().enumerate() {
        let g = system.g_exact(i, &e0s);
        if &g != qi {
            return Ok(Some(BernoulliWitness {
                reason: format!("G_{i}(e_0) != q_{i}; G_0 is increasing so no state has G = q"),
                state: e0.to_string(),
                symbol: i,
                values: vec![g.to_string(), qi.to_string()],
            }));
        }
    }
    for i in 0..n {
        let h = system.h_exact(i, &e0s);
        if h != e0s {
            return Ok(Some(BernoulliWitness {
                reason: format!("H_{i}(e_0) != e_0 while G(e_0) = q"),
                state: e0.to_string(),
                symbol: i,
                values: vec![h.to_string()],
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::cylinder_mass_exact;
    use crate::rational::rat;
    use proptest::prelude::*;

    fn fin(q: BigRational) -> ExactState {
        ExactState::Finite(q)
    }

    #[test]
    fn phi_examples() {
        let id = LftMatrix::identity();
        assert_eq!(phi_transform(&id, &fin(rat(3, 7))).unwrap(), fin(rat(3, 7)));
        let a0 = LftMatrix::from_ints([[1, 0], [1, 1]]);
        assert_eq!(phi_transform(&a0, &fin(int(1))).unwrap(), fin(rat(1, 2)));
        let a1 = LftMatrix::from_ints([[0, 1], [-1, 2]]);
        assert_eq!(phi_transform(&a1, &fin(int(0))).unwrap(), fin(rat(1, 2)));
        assert!(matches!(phi_transform(&a1, &fin(int(2))), Err(Error::Pole(_))));
        assert_eq!(phi_transform(&a0, &ExactState::PosInf).unwrap(), fin(int(1)));
    }

    #[test]
    fn minkowski_validation() {
        let m = minkowski_system();
        assert!(m.flags.a1 && m.flags.a2 && m.flags.a3 && !m.flags.sa3);
        assert_eq!(m.alpha, ExtReal::minus_one());
        assert_eq!(m.beta, ExtReal::PosInf);
        assert_eq!(m.c_moebius, None);
        assert_eq!(is_ac_with_bernoulli(&m), None);
        let m1 = &m.matrices[1];
        assert_eq!((m1.a.clone(), m1.b.clone(), m1.c.clone()), (int(0), rat(1, 2), rat(-1, 2)));
    }

    #[test]
    fn minkowski_derived_maps() {
        let m = Arc::new(minkowski_system());
        let s = derived_system(&m).unwrap();
        for x in [-1.0, -0.5, 0.0, 0.3, 1.0, 7.0, 1e4] {
            let p = s.probabilities(&State::Scalar(x)).unwrap();
            assert!((p[0] - (x + 1.0) / (x + 2.0)).abs() < 1e-15);
            assert_eq!(s.transition(0, &State::Scalar(x)).unwrap(), State::Scalar(x + 1.0));
            let h1 = s.transition(1, &State::Scalar(x)).unwrap().scalar().unwrap();
            assert!((h1 + 1.0 / (x + 2.0)).abs() < 1e-15);
        }
        assert_eq!(s.probabilities(&State::PosInf).unwrap(), vec![1.0, 0.0]);
        assert_eq!(s.transition(0, &State::PosInf).unwrap(), State::PosInf);
        // g_0(x) = x/(x+1), g_1(x) = 1/(2−x)
        let x = rat(1, 3);
        assert_eq!(phi_transform(&m.matrices[0], &fin(x.clone())).unwrap(), fin(rat(1, 4)));
        assert_eq!(phi_transform(&m.matrices[1], &fin(x)).unwrap(), fin(rat(3, 5)));
    }

    #[test]
    fn minkowski_curve_examples() {
        let m = minkowski_system();
        let w = |s: &str| Word::parse(s, 2).unwrap();
        let c = curve_eval(&m, &Word::empty(2)).unwrap();
        assert_eq!((c.phi_left, c.phi_right, c.mass), (int(0), int(1), int(1)));
        let c = curve_eval(&m, &w("00")).unwrap();
        assert_eq!((c.phi_left, c.phi_right.clone(), c.mass), (int(0), rat(1, 3), rat(1, 3)));
        let c = curve_eval(&m, &w("1")).unwrap();
        assert_eq!((c.phi_left, c.phi_right, c.mass), (rat(1, 2), int(1), rat(1, 2)));
        assert_eq!(curve_at(&m, &rat(1, 4)).unwrap(), rat(1, 3));
        assert_eq!(curve_at(&m, &rat(1, 2)).unwrap(), rat(1, 2));
        assert!(curve_at(&m, &rat(1, 3)).is_err());
    }

    #[test]
    fn moebius_c1_detection() {
        let m = moebius_system(2, &int(1)).unwrap();
        let b: Vec<_> = m.matrices.iter().map(|x| x.b.clone()).collect();
        let a: Vec<_> = m.matrices.iter().map(|x| x.a.clone()).collect();
        let c: Vec<_> = m.matrices.iter().map(|x| x.c.clone()).collect();
        assert_eq!(b, vec![int(0), rat(1, 3)]);
        assert_eq!(a, vec![rat(1, 2), int(1)]);
        assert_eq!(c, vec![rat(1, 2), rat(1, 3)]);
        assert!(m.flags.sa3);
        assert_eq!(detect_moebius_case(&m), Some(int(1)));
        assert_eq!(m.uniform_point, Some(int(1)));
        // f(1/2) = 1/3 = g_0(f(1)) with g_0(z) = z/(z+2).
        let f_half = m.moebius_closed_form(&rat(1, 2)).unwrap();
        assert_eq!(f_half, rat(1, 3));
        assert_eq!(phi_transform(&m.matrices[0], &fin(int(1))).unwrap(), fin(f_half));
        assert_eq!(curve_at(&m, &rat(1, 2)).unwrap(), rat(1, 3));
    }

    #[test]
    fn linear_case() {
        let w = [rat(1, 3), rat(2, 3)];
        let m = validate(&linear_matrices(&w)).unwrap();
        assert_eq!((m.alpha.clone(), m.beta.clone()), (ExtReal::Exact(int(0)), ExtReal::Exact(int(0))));
        let s = derived_system(&Arc::new(m.clone())).unwrap();
        assert_eq!(s.exact().unwrap().probabilities_exact(&fin(int(0))).unwrap(), w.to_vec());
        assert_eq!(is_ac_with_bernoulli(&m), Some(w.to_vec()));
        let u = validate(&linear_matrices(&[rat(1, 2), rat(1, 2)])).unwrap();
        assert_eq!(detect_moebius_case(&u), Some(int(0)));
        assert_eq!(u.moebius_closed_form(&rat(3, 8)), Some(rat(3, 8)));
        assert!(u.flags.weak_contraction);
    }

    #[test]
    fn bernoulli_equivalence_round_trip() {
        let p = [rat(1, 2), rat(1, 2)];
        let ms = bernoulli_equivalence_params(&p, &int(1)).unwrap();
        assert_eq!(ms, moebius_matrices(2, &int(1)).unwrap());
        let sys = validate(&ms).unwrap();
        assert_eq!(is_ac_with_bernoulli(&sys), Some(p.to_vec()));
        assert_eq!(sys.e0(), Some(int(1)));
        // Fix(H_0) = e_0 and H_i'(e_0) = p_i.
        for i in 0..2 {
            assert_eq!(sys.h_exact(i, &fin(int(1))), fin(int(1)));
        }
    }

    #[test]
    fn validation_names_failures() {
        let bad = [LftMatrix::from_ints([[1, 0], [1, 1]]), LftMatrix::from_ints([[0, 1], [-1, 3]])];
        match validate(&bad) {
            Err(Error::Condition { condition, .. }) => assert_eq!(condition, "A1"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = [LftMatrix::from_ints([[2, 0], [1, 1]]), LftMatrix::from_ints([[0, 1], [-1, 2]])];
        match validate(&bad) {
            Err(Error::Condition { condition, index, .. }) => assert_eq!((condition, index), ("A3", 0)),
            other => panic!("unexpected {other:?}"),
        }
        let bad = [LftMatrix::from_ints([[0, 0], [1, 1]]), LftMatrix::from_ints([[0, 1], [-1, 2]])];
        assert!(matches!(validate(&bad), Err(Error::Condition { condition: "A2", index: 0, .. })));
    }

    #[test]
    fn singularity_witnesses_for_other_bernoulli() {
        let p = [rat(1, 2), rat(1, 2)];
        let sys = validate(&bernoulli_equivalence_params(&p, &int(1)).unwrap()).unwrap();
        assert!(singularity_witness(&sys, &p).unwrap().is_none());
        for k in 1..10 {
            if k == 5 {
                continue;
            }
            let q = [rat(k, 10), rat(10 - k, 10)];
            assert!(singularity_witness(&sys, &q).unwrap().is_some(), "q_0 = {k}/10");
        }
    }

    #[test]
    fn cross_engine_masses_exact() {
        for sys in [minkowski_system(), moebius_system(2, &int(1)).unwrap()] {
            let sys = Arc::new(sys);
            let driven = derived_system(&sys).unwrap();
            for len in 0..=8 {
                for w in Word::all_of_length(2, len) {
                    let a = curve_eval(&sys, &w).unwrap().mass;
                    let b = cylinder_mass_exact(&driven, &w).unwrap();
                    assert_eq!(a, b, "word {w}");
                }
            }
        }
    }

    #[test]
    fn moebius_curve_matches_closed_form_at_dyadics() {
        let m = moebius_system(2, &int(1)).unwrap();
        for k in 0..=1024i64 {
            let t = rat(k, 1024);
            assert_eq!(curve_at(&m, &t).unwrap(), &t / (int(2) - &t));
        }
    }

    #[test]
    fn moebius_three_symbols() {
        let m = moebius_system(3, &rat(1, 2)).unwrap();
        assert_eq!(detect_moebius_case(&m), Some(rat(1, 2)));
        for k in 0..=27i64 {
            let t = rat(k, 27);
            assert_eq!(curve_at(&m, &t).unwrap(), m.moebius_closed_form(&t).unwrap());
        }
    }

    proptest! {
        #[test]
        fn curve_is_monotone_and_fixed_point_holds(
            p0 in 1i64..20, e0n in 0i64..8,
        ) {
            let p = [rat(p0, 20), rat(20 - p0, 20)];
            let e0 = rat(e0n, 4);
            let Ok(ms) = bernoulli_equivalence_params(&p, &e0) else { return Ok(()) };
            let sys = validate(&ms).unwrap();
            prop_assert_eq!(is_ac_with_bernoulli(&sys), Some(p.to_vec()));
            prop_assert_eq!(sys.h_exact(0, &fin(e0.clone())), fin(e0.clone()));
            let mut last = int(0);
            for w in Word::all_of_length(2, 6) {
                let c = curve_eval(&sys, &w).unwrap();
                prop_assert!(c.phi_left >= last);
                prop_assert!(c.phi_right >= c.phi_left);
                last = c.phi_right;
            }
            prop_assert_eq!(last, int(1));
        }

        #[test]
        fn junction_continuity(prefix in proptest::collection::vec(0usize..2, 0..4)) {
            let sys = minkowski_system();
            let mut left = prefix.clone();
            left.push(0);
            left.extend(std::iter::repeat_n(1, 20));
            let mut right = prefix;
            right.push(1);
            right.extend(std::iter::repeat_n(0, 20));
            let l = curve_eval(&sys, &Word::new(left, 2).unwrap()).unwrap().phi_right;
            let r = curve_eval(&sys, &Word::new(right, 2).unwrap()).unwrap().phi_left;
            prop_assert_eq!(l, r);
        }
    }
}
