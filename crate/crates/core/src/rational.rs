//! Exact rational helpers: parsing decimal and fraction strings, and the
//! extended reals used for de Rham state intervals.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Parses `"3"`, `"-1/3"`, `"0.25"`, `"1.5e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::Config("empty number".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_rational(num)?;
        let d = parse_rational(den)?;
        if d.is_zero() {
            return Err(Error::Config(format!("zero denominator in `{s}`")));
        }
        return Ok(n / d);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = s[pos + 1..]
                .parse()
                .map_err(|_| Error::Config(format!("bad exponent in `{s}`")))?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::Config(format!("not a number: `{s}`")));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(Error::Config(format!("not a number: `{s}`")));
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if all_digits.is_empty() {
        BigInt::zero()
    } else {
        all_digits.parse().map_err(|_| Error::Config(format!("not a number: `{s}`")))?
    };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Reads a JSON number or string as an exact rational. Numbers go through
/// their shortest decimal rendering, so `0.1` means one tenth.
pub fn rational_from_json(value: &serde_json::Value) -> Result<BigRational> {
    match value {
        serde_json::Value::Number(n) => parse_rational(&n.to_string()),
        serde_json::Value::String(s) => parse_rational(s),
        other => Err(Error::Config(format!("expected a number, found {other}"))),
    }
}

pub fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact square root when `q` is the square of a rational.
pub fn exact_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    if &(&n * &n) == q.numer() && &(&d * &d) == q.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

pub fn bits(q: &BigRational) -> u64 {
    q.numer().bits().max(q.denom().bits())
}

/// A point of the extended real line as it appears in de Rham state
/// intervals: exact where the algebra allows, approximate after an
/// irrational square root, or the explicit `+∞` endpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum ExtReal {
    Exact(BigRational),
    Approx(f64),
    PosInf,
}

impl ExtReal {
    pub fn to_f64(&self) -> f64 {
        match self {
            ExtReal::Exact(q) => to_f64(q),
            ExtReal::Approx(x) => *x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            ExtReal::Exact(q) => Some(q),
            _ => None,
        }
    }

    pub fn minus_one() -> Self {
        ExtReal::Exact(-BigRational::one())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Exact(q) => write!(f, "{q}"),
            ExtReal::Approx(x) => write!(f, "{x}"),
            ExtReal::PosInf => write!(f, "+inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

/// Serde helper: exact rationals are written as `"p/q"` strings.
pub mod serde_rational {
    use num_rational::BigRational;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(q: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&q.to_string())
    }

    pub mod vec {
        use num_rational::BigRational;
        use serde::ser::SerializeSeq;
        use serde::Serializer;

        pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for q in v {
                seq.serialize_element(&q.to_string())?;
            }
            seq.end()
        }
    }

    pub mod option {
        use num_rational::BigRational;
        use serde::Serializer;

        pub fn serialize<S: Serializer>(q: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
            match q {
                Some(q) => s.serialize_str(&q.to_string()),
                None => s.serialize_none(),
            }
        }
    }
}
