//! Words over the alphabet `{0, …, N−1}`, their cylinder intervals under the
//! N-adic interval maps `z ↦ (z + i)/N`, the entropy function, and the four
//! built-in self-similar geometries.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// A finite address in the symbolic space. The empty word addresses the
/// whole space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Word {
    symbols: Vec<usize>,
    alphabet: usize,
}

impl Word {
    pub fn new(symbols: Vec<usize>, alphabet: usize) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::InvalidArgument(format!(
                "alphabet size must be at least 2, got {alphabet}"
            )));
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s >= alphabet) {
            return Err(Error::SymbolOutOfRange { symbol: bad, alphabet });
        }
        Ok(Self { symbols, alphabet })
    }

    pub fn empty(alphabet: usize) -> Self {
        Self { symbols: Vec::new(), alphabet: alphabet.max(2) }
    }

    /// Digits (`"0120"`) for alphabets up to ten symbols, otherwise a
    /// comma-separated list (`"3,11,0"`).
    pub fn parse(text: &str, alphabet: usize) -> Result<Self> {
        let text = text.trim();
        let symbols = if text.contains(',') {
            text.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidArgument(format!("bad symbol `{t}`")))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::InvalidArgument(format!("bad symbol `{c}`")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Self::new(symbols, alphabet)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// The word extended by one symbol on the right.
    pub fn child(&self, symbol: usize) -> Result<Self> {
        if symbol >= self.alphabet {
            return Err(Error::SymbolOutOfRange { symbol, alphabet: self.alphabet });
        }
        let mut symbols = self.symbols.clone();
        symbols.push(symbol);
        Ok(Self { symbols, alphabet: self.alphabet })
    }

    /// The word with `symbol` prepended.
    pub fn prepend(&self, symbol: usize) -> Result<Self> {
        if symbol >= self.alphabet {
            return Err(Error::SymbolOutOfRange { symbol, alphabet: self.alphabet });
        }
        let mut symbols = Vec::with_capacity(self.symbols.len() + 1);
        symbols.push(symbol);
        symbols.extend_from_slice(&self.symbols);
        Ok(Self { symbols, alphabet: self.alphabet })
    }

    /// All words of length `len`, in lexicographic order.
    pub fn all_of_length(alphabet: usize, len: usize) -> impl Iterator<Item = Word> {
        let total = alphabet.pow(len as u32);
        (0..total).map(move |mut code| {
            let mut symbols = vec![0; len];
            for slot in symbols.iter_mut().rev() {
                *slot = code % alphabet;
                code /= alphabet;
            }
            Word { symbols, alphabet }
        })
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.alphabet <= 10 {
            for s in &self.symbols {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.symbols.iter().map(|s| s.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// The N-adic interval `[k/N^n, (k+1)/N^n)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NadicInterval {
    pub numerator: BigUint,
    pub depth: usize,
    pub alphabet: usize,
}

impl NadicInterval {
    fn scale(&self) -> BigUint {
        num_traits::pow(BigUint::from(self.alphabet), self.depth)
    }

    pub fn left(&self) -> BigRational {
        BigRational::new(self.numerator.clone().into(), self.scale().into())
    }

    pub fn right(&self) -> BigRational {
        BigRational::new((&self.numerator + 1u32).into(), self.scale().into())
    }

    /// Half-open containment of `other` in `self`.
    pub fn contains(&self, other: &NadicInterval) -> bool {
        self.left() <= other.left() && other.right() <= self.right()
    }
}

/// The base-N address arithmetic of a cylinder.
pub fn cylinder_interval(word: &Word) -> NadicInterval {
    let n = BigUint::from(word.alphabet());
    let numerator = word
        .symbols()
        .iter()
        .fold(BigUint::zero(), |acc, &s| acc * &n + BigUint::from(s));
    NadicInterval { numerator, depth: word.len(), alphabet: word.alphabet() }
}

/// Natural projection of a finite address: `Σ_k i_k / N^k`, the left
/// endpoint of its cylinder.
pub fn project(word: &Word) -> Result<BigRational> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    Ok(cylinder_interval(word).left())
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 || probs.iter().any(|&p| !(-1e-15..=1.0 + 1e-15).contains(&p)) {
        return Err(Error::NotProbability(format!("{probs:?} sums to {total}")));
    }
    Ok(entropy_unchecked(probs))
}

pub(crate) fn entropy_unchecked(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0)
}

/// Binary entropy `s_2(p, 1−p)`.
pub fn entropy2(p: f64) -> f64 {
    entropy_unchecked(&[p, 1.0 - p])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "n")]
pub enum GeometryKind {
    Interval(usize),
    Square,
    Gasket,
    Carpet,
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryKind::Interval(n) => write!(f, "interval:{n}"),
            GeometryKind::Square => write!(f, "square"),
            GeometryKind::Gasket => write!(f, "gasket"),
            GeometryKind::Carpet => write!(f, "carpet"),
        }
    }
}

impl FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "square" => Ok(GeometryKind::Square),
            "gasket" => Ok(GeometryKind::Gasket),
            "carpet" => Ok(GeometryKind::Carpet),
            "interval" => Ok(GeometryKind::Interval(2)),
            _ => {
                let inner = s
                    .strip_prefix("interval:")
                    .or_else(|| s.strip_prefix("interval(").and_then(|r| r.strip_suffix(')')));
                match inner.and_then(|n| n.parse::<usize>().ok()) {
                    Some(n) if n >= 2 => Ok(GeometryKind::Interval(n)),
                    _ => Err(Error::UnknownGeometry(s)),
                }
            }
        }
    }
}

/// Constants of a self-similar geometry: cells of level `m` have diameter at
/// most `c1 r^m` and an open ball of radius `r^m` centred in `K` meets at
/// most `d` of them. `c2` is the covering constant of the lower-bound
/// argument; it is recorded but not used numerically.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IfsGeometry {
    pub kind: GeometryKind,
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
    pub d: usize,
}

impl IfsGeometry {
    pub fn alphabet_size(&self) -> usize {
        match self.kind {
            GeometryKind::Interval(n) => n,
            GeometryKind::Square => 4,
            GeometryKind::Gasket => 3,
            GeometryKind::Carpet => 8,
        }
    }

    /// `log(1/r)`, the denominator turning entropy rates into dimensions.
    pub fn log_inv_r(&self) -> f64 {
        -self.r.ln()
    }

    /// The vertex polygon of `K` (its convex hull) and the translation
    /// vectors `q_i` of the maps `z ↦ r z + q_i r⁻¹·r`.
    fn generators(&self) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let h = 3f64.sqrt() / 2.0;
        match self.kind {
            GeometryKind::Interval(n) => {
                (vec![[0.0, 0.0], [1.0, 0.0]], (0..n).map(|i| [i as f64, 0.0]).collect())
            }
            GeometryKind::Square => (
                vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            ),
            GeometryKind::Gasket => (
                vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]],
                vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]],
            ),
            GeometryKind::Carpet => {
                let q = (0..3)
                    .flat_map(|y| (0..3).map(move |x| [x as f64, y as f64]))
                    .filter(|p| *p != [1.0, 1.0])
                    .collect();
                (vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], q)
            }
        }
    }

    /// Hull polygons of all level-`m` cells `f_w(K)`, `|w| = m`.
    pub fn cells(&self, m: usize) -> Vec<Vec<[f64; 2]>> {
        let (hull, shifts) = self.generators();
        // f_i(z) = (z + q_i) r, so f_w(z) = r^m z + Σ_k r^k q_{i_k}.
        let mut offsets = vec![([0.0f64, 0.0f64], 1.0f64)];
        for _ in 0..m {
            let mut next = Vec::with_capacity(offsets.len() * shifts.len());
            for (off, scale) in &offsets {
                let s = scale * self.r;
                for q in &shifts {
                    next.push(([off[0] + s * q[0], off[1] + s * q[1]], s));
                }
            }
            offsets = next;
        }
        offsets
            .into_iter()
            .map(|(off, s)| hull.iter().map(|v| [off[0] + s * v[0], off[1] + s * v[1]]).collect())
            .collect()
    }
}

/// The geometry constants for a named geometry (`interval:N`, `square`,
/// `gasket`, `carpet`).
pub fn geometry_constants(name: &str) -> Result<IfsGeometry> {
    let kind: GeometryKind = name.parse()?;
    Ok(geometry_for(kind))
}

pub fn geometry_for(kind: GeometryKind) -> IfsGeometry {
    // d values are the maxima found by exhaustive enumeration of level-m
    // cells (see conditions::verify_kigami).
    match kind {
        GeometryKind::Interval(n) => {
            IfsGeometry { kind, r: 1.0 / n as f64, c1: 1.0, c2: 2.0, d: 3 }
        }
        GeometryKind::Square => {
            IfsGeometry { kind, r: 0.5, c1: 2f64.sqrt(), c2: 2.0 * 2f64.sqrt(), d: 9 }
        }
        GeometryKind::Gasket => IfsGeometry { kind, r: 0.5, c1: 1.0, c2: 2.0, d: GASKET_OVERLAP },
        GeometryKind::Carpet => {
            IfsGeometry { kind, r: 1.0 / 3.0, c1: 2f64.sqrt(), c2: 2.0 * 2f64.sqrt(), d: 9 }
        }
    }
}

// The largest count observed over vertices and centroids up to level 8 is 5;
// one extra cell covers ball centres between sampled points.
const GASKET_OVERLAP: usize = 6;

pub(crate) fn polygon_distance(x: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    if poly.len() >= 3 && point_in_convex(x, poly) {
        return 0.0;
    }
    let k = poly.len();
    let edges = if k == 2 { 1 } else { k };
    (0..edges)
        .map(|e| segment_distance(x, poly[e], poly[(e + 1) % k]))
        .fold(f64::INFINITY, f64::min)
}

fn point_in_convex(x: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let k = poly.len();
    let mut sign = 0.0f64;
    for e in 0..k {
        let a = poly[e];
        let b = poly[(e + 1) % k];
        let cross = (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]);
        if cross.abs() < 1e-15 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

fn segment_distance(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ax = [x[0] - a[0], x[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 { 0.0 } else { ((ax[0] * ab[0] + ax[1] * ab[1]) / len2).clamp(0.0, 1.0) };
    let p = [a[0] + t * ab[0] - x[0], a[1] + t * ab[1] - x[1]];
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

pub(crate) fn polygon_diameter(poly: &[[f64; 2]]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in poly.iter().enumerate() {
        for b in &poly[i + 1..] {
            best = best.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
    }
    best
}

/// The empty-word convention: total mass and the whole interval.
pub fn unit_interval() -> (BigRational, BigRational) {
    (BigRational::zero(), BigRational::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use proptest::prelude::*;

    fn w(s: &str, n: usize) -> Word {
        Word::parse(s, n).unwrap()
    }

    #[test]
    fn project_examples() {
        assert_eq!(project(&w("0", 2)).unwrap(), rat(0, 1));
        assert_eq!(project(&w("1", 2)).unwrap(), rat(1, 2));
        // f_0(f_1(0)) = (1/2 + 0)/2
        assert_eq!(project(&w("01", 2)).unwrap(), rat(1, 4));
        assert!(matches!(project(&Word::empty(2)), Err(Error::EmptyWord)));
    }

    #[test]
    fn cylinder_examples() {
        let c = cylinder_interval(&Word::empty(3));
        assert_eq!((c.left(), c.right(), c.depth), (rat(0, 1), rat(1, 1), 0));
        let c = cylinder_interval(&w("2", 3));
        assert_eq!((c.left(), c.right()), (rat(2, 3), rat(1, 1)));
        let c = cylinder_interval(&w("10", 2));
        assert_eq!((c.left(), c.right(), c.depth), (rat(1, 2), rat(3, 4), 2));
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        let oracle = -(1.0f64 / 3.0) * (1.0f64 / 3.0).ln() - (2.0f64 / 3.0) * (2.0f64 / 3.0).ln();
        let s = entropy(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!((s - oracle).abs() < 1e-15);
        assert!((s - 0.636514).abs() < 1e-6);
        assert!(matches!(entropy(&[0.5, 0.6]), Err(Error::NotProbability(_))));
    }

    #[test]
    fn symbols_are_validated() {
        assert!(matches!(
            Word::new(vec![0, 2], 2),
            Err(Error::SymbolOutOfRange { symbol: 2, alphabet: 2 })
        ));
        assert_eq!(w("3,11,0", 12).symbols(), &[3, 11, 0]);
        assert_eq!(w("3,11,0", 12).to_string(), "3,11,0");
    }

    #[test]
    fn geometry_lookup() {
        assert_eq!(geometry_constants("interval:2").unwrap().r, 0.5);
        assert_eq!(geometry_constants("interval:2").unwrap().d, 3);
        assert_eq!(geometry_constants("gasket").unwrap().r, 0.5);
        assert!((geometry_constants("carpet").unwrap().r - 1.0 / 3.0).abs() < 1e-16);
        assert!(matches!(geometry_constants("koch"), Err(Error::UnknownGeometry(_))));
    }

    #[test]
    fn interval_overlap_bound_by_enumeration() {
        // Open ball of radius 2^-m around any point of [0,1] meets at most
        // three closed dyadic intervals of depth m; centres sampled on the
        // grid of spacing 2^-(m+2) cover endpoints, midpoints and quarters.
        for m in 1..=10u32 {
            let h = 0.5f64.powi(m as i32);
            let cells = 1usize << m;
            let mut worst = 0;
            for c in 0..=(4 * cells) {
                let x = c as f64 * h / 4.0;
                let count = (0..cells)
                    .filter(|&j| {
                        let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
                        let dist = if x < a { a - x } else if x > b { x - b } else { 0.0 };
                        dist < h
                    })
                    .count();
                worst = worst.max(count);
            }
            assert_eq!(worst, 3.min(cells), "depth {m}");
        }
    }

    proptest! {
        #[test]
        fn prepend_commutes_with_projection(
            symbols in proptest::collection::vec(0usize..3, 1..20),
            head in 0usize..3,
        ) {
            let word = Word::new(symbols, 3).unwrap();
            let lhs = project(&word.prepend(head).unwrap()).unwrap();
            let rhs = (project(&word).unwrap() + BigRational::from_integer(head.into())) / rat(3, 1);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn children_nest(symbols in proptest::collection::vec(0usize..4, 0..16), i in 0usize..4) {
            let word = Word::new(symbols, 4).unwrap();
            let parent = cylinder_interval(&word);
            let child = cylinder_interval(&word.child(i).unwrap());
            prop_assert!(parent.contains(&child));
        }

        #[test]
        fn entropy_is_concave(
            a in proptest::collection::vec(0.0f64..1.0, 4),
            b in proptest::collection::vec(0.0f64..1.0, 4),
            t in 0.0f64..1.0,
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum::<f64>() + 1e-9;
                v.iter().map(|x| (x + 1e-9 / 4.0) / s).collect::<Vec<_>>()
            };
            let (p, q) = (norm(&a), norm(&b));
            let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let lhs = entropy_unchecked(&mix);
            let rhs = t * entropy_unchecked(&p) + (1.0 - t) * entropy_unchecked(&q);
            prop_assert!(lhs >= rhs - 1e-12);
            prop_assert!(lhs <= 4f64.ln() + 1e-12);
        }

        #[test]
        fn entropy_is_permutation_invariant(a in proptest::collection::vec(0.01f64..1.0, 3)) {
            let s: f64 = a.iter().sum();
            let p: Vec<f64> = a.iter().map(|x| x / s).collect();
            let perm = vec![p[2], p[0], p[1]];
            prop_assert_eq!(entropy_unchecked(&p).to_bits(), entropy_unchecked(&[p[0], p[1], p[2]]).to_bits());
            prop_assert!((entropy_unchecked(&perm) - entropy_unchecked(&p)).abs() < 1e-15);
        }
    }
}
