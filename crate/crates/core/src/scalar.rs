//! Numeric backends: exact rationals and tolerance-compared floats.
//!
//! Every geometric routine is generic over [`Scalar`]. The rational backend is
//! exact, the float backend compares with an absolute tolerance that defaults
//! to `1e-12` and can be changed process-wide with [`set_float_tolerance`].

use std::cmp::Ordering;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use num::traits::NumRef;
use num::{BigInt, BigRational, Num, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub type Rational = BigRational;

static FLOAT_TOLERANCE: AtomicU64 = AtomicU64::new(1e-12f64.to_bits());

/// Current absolute tolerance for float comparisons.
pub fn float_tolerance() -> f64 {
    f64::from_bits(FLOAT_TOLERANCE.load(AtomicOrdering::Relaxed))
}

/// Sets the absolute tolerance used by float comparisons.
pub fn set_float_tolerance(tau: f64) {
    assert!(
        tau >= 0.0 && tau.is_finite(),
        "tolerance must be finite and non-negative"
    );
    FLOAT_TOLERANCE.store(tau.to_bits(), AtomicOrdering::Relaxed);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rational,
    Float,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rational => "rational",
            Mode::Float => "float",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalarError {
    #[error("cannot parse scalar from {0:?}")]
    Parse(String),
    #[error("value {0} is not finite")]
    NotFinite(f64),
    #[error("expected a string or number, got {0}")]
    Json(String),
}

pub trait Scalar:
    Num + NumRef + Signed + Clone + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const MODE: Mode;

    /// Three-way comparison; exact for rationals, within tolerance for floats.
    fn cmp_tol(&self, other: &Self) -> Ordering;
    fn from_int(n: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Exact conversion for rationals; `None` for non-finite input.
    fn from_f64(v: f64) -> Option<Self>;
    /// Accepts `p/q`, integers and decimal literals with optional exponent.
    fn parse(s: &str) -> Result<Self, ScalarError>;
    /// Canonical text form: `p/q` for rationals, shortest round-trip decimal for floats.
    fn encode(&self) -> String;
    fn to_json(&self) -> Value;
    fn from_json(v: &Value) -> Result<Self, ScalarError>;
    fn pow2(e: i32) -> Self;
    /// A value `r >= 0` with `r*r <= self` and `r` within `2^-64` relative of the root.
    fn sqrt_lower(&self) -> Self;

    fn ratio(n: i64, d: i64) -> Self {
        Self::from_int(n) / Self::from_int(d)
    }
}

pub fn le<T: Scalar>(a: &T, b: &T) -> bool {
    a.cmp_tol(b) != Ordering::Greater
}

pub fn lt<T: Scalar>(a: &T, b: &T) -> bool {
    a.cmp_tol(b) == Ordering::Less
}

pub fn teq<T: Scalar>(a: &T, b: &T) -> bool {
    a.cmp_tol(b) == Ordering::Equal
}

pub fn is_zero_tol<T: Scalar>(a: &T) -> bool {
    teq(a, &T::zero())
}

pub fn max_of<T: Scalar>(a: T, b: T) -> T {
    if a >= b {
        a
    } else {
        b
    }
}

pub fn min_of<T: Scalar>(a: T, b: T) -> T {
    if a <= b {
        a
    } else {
        b
    }
}

/// Total order on exact values, used for sorting.
pub fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

fn parse_rational(s: &str) -> Result<Rational, ScalarError> {
    let err = || ScalarError::Parse(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i64>().map_err(|_| err())?),
        None => (t, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(err());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(digits.parse::<BigInt>().map_err(|_| err())?);
    let shift = exp - frac_part.len() as i64;
    if shift.unsigned_abs() > 100_000 {
        return Err(err());
    }
    let ten = Rational::from_integer(BigInt::from(10));
    let scale = num::pow::pow(ten, shift.unsigned_abs() as usize);
    if shift >= 0 {
        value *= scale;
    } else {
        value /= scale;
    }
    Ok(if neg { -value } else { value })
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Rational;

    fn cmp_tol(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }

    fn from_int(n: i64) -> Self {
        Rational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            if self.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
    }

    fn from_f64(v: f64) -> Option<Self> {
        Rational::from_float(v)
    }

    fn parse(s: &str) -> Result<Self, ScalarError> {
        parse_rational(s)
    }

    fn encode(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }

    fn to_json(&self) -> Value {
        Value::String(self.encode())
    }

    fn from_json(v: &Value) -> Result<Self, ScalarError> {
        match v {
            Value::String(s) => parse_rational(s),
            Value::Number(n) => parse_rational(&n.to_string()),
            other => Err(ScalarError::Json(other.to_string())),
        }
    }

    fn pow2(e: i32) -> Self {
        let p = Rational::from_integer(BigInt::one() << e.unsigned_abs() as usize);
        if e >= 0 {
            p
        } else {
            p.recip()
        }
    }

    fn sqrt_lower(&self) -> Self {
        if !self.is_positive() {
            return Rational::zero();
        }
        const BITS: usize = 64;
        let scaled = (self.numer() << (2 * BITS)) / self.denom();
        Rational::new(scaled.sqrt(), BigInt::one() << BITS)
    }
}

impl Scalar for f64 {
    const MODE: Mode = Mode::Float;

    fn cmp_tol(&self, other: &Self) -> Ordering {
        if (self - other).abs() <= float_tolerance() {
            Ordering::Equal
        } else {
            self.total_cmp(other)
        }
    }

    fn from_int(n: i64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_f64(v: f64) -> Option<Self> {
        v.is_finite().then_some(v)
    }

    fn parse(s: &str) -> Result<Self, ScalarError> {
        let t = s.trim();
        let v = match t.split_once('/') {
            Some((n, d)) => {
                let n: f64 = n
                    .trim()
                    .parse()
                    .map_err(|_| ScalarError::Parse(s.to_string()))?;
                let d: f64 = d
                    .trim()
                    .parse()
                    .map_err(|_| ScalarError::Parse(s.to_string()))?;
                n / d
            }
            None => t.parse().map_err(|_| ScalarError::Parse(s.to_string()))?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ScalarError::NotFinite(v))
        }
    }

    fn encode(&self) -> String {
        serde_json::Number::from_f64(*self)
            .map(|n| n.to_string())
            .unwrap_or_else(|| self.to_string())
    }

    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }

    fn from_json(v: &Value) -> Result<Self, ScalarError> {
        match v {
            Value::Number(n) => n.as_f64().ok_or_else(|| ScalarError::Json(n.to_string())),
            Value::String(s) => <f64 as Scalar>::parse(s),
            other => Err(ScalarError::Json(other.to_string())),
        }
    }

    fn pow2(e: i32) -> Self {
        2f64.powi(e)
    }

    fn sqrt_lower(&self) -> Self {
        if *self <= 0.0 {
            0.0
        } else {
            self.sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::ratio(n, d)
    }

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(<Rational as Scalar>::parse("3/4").unwrap(), q(3, 4));
        assert_eq!(<Rational as Scalar>::parse("-6/8").unwrap(), q(-3, 4));
        assert_eq!(<Rational as Scalar>::parse("7").unwrap(), q(7, 1));
        assert_eq!(<Rational as Scalar>::parse("0.125").unwrap(), q(1, 8));
        assert_eq!(<Rational as Scalar>::parse("1e-4").unwrap(), q(1, 10_000));
        assert_eq!(<Rational as Scalar>::parse("-2.5E2").unwrap(), q(-250, 1));
        assert_eq!(<Rational as Scalar>::parse(".5").unwrap(), q(1, 2));
        assert!(<Rational as Scalar>::parse("1/0").is_err());
        assert!(<Rational as Scalar>::parse("abc").is_err());
        assert!(<Rational as Scalar>::parse("").is_err());
    }

    #[test]
    fn rational_encoding_round_trips() {
        for v in [q(5, 3), q(-1, 7), q(0, 1), q(12, 1)] {
            let s = v.encode();
            assert_eq!(<Rational as Scalar>::parse(&s).unwrap(), v);
        }
        assert_eq!(q(6, 4).encode(), "3/2");
        assert_eq!(q(2, 1).encode(), "2/1");
    }

    #[test]
    fn float_encoding_is_shortest_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.5e-300, 123456.789] {
            let s = v.encode();
            assert_eq!(<f64 as Scalar>::parse(&s).unwrap(), v);
        }
        assert_eq!(0.1f64.encode(), "0.1");
    }

    #[test]
    fn float_comparison_uses_tolerance() {
        assert_eq!(1.0f64.cmp_tol(&(1.0 + 1e-13)), Ordering::Equal);
        assert_eq!(1.0f64.cmp_tol(&(1.0 + 1e-9)), Ordering::Less);
        assert!(le(&(1.0 + 1e-13), &1.0));
    }

    #[test]
    fn powers_of_two() {
        assert_eq!(Rational::pow2(3), q(8, 1));
        assert_eq!(Rational::pow2(-4), q(1, 16));
        assert_eq!(f64::pow2(-2), 0.25);
    }

    #[test]
    fn rational_sqrt_is_a_tight_lower_bound() {
        for v in [q(2, 1), q(101, 100), q(1, 3), q(9, 4)] {
            let r = v.sqrt_lower();
            assert!(&r * &r <= v);
            let bumped = &r + Rational::pow2(-60);
            assert!(&bumped * &bumped > v);
        }
        assert_eq!(q(9, 4).sqrt_lower(), q(3, 2));
    }
}
