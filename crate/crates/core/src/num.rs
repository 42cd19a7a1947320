//! Exact scalar types: arbitrary-precision rationals and dyadic rationals.
//!
//! `Rational` is the workhorse for measures, martingale values, and slopes.
//! `DyadicRational` is the closed-under-halving fragment used wherever a
//! quantity lives on a binary grid (cylinder endpoints, staged increments,
//! approximations from below). Both print and parse as plain `p/q` text.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

pub type Rational = num_rational::BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumError {
    #[error("malformed rational literal {0:?}")]
    Malformed(String),
    #[error("zero denominator in rational literal {0:?}")]
    ZeroDenominator(String),
    #[error("{0} is not dyadic (denominator is not a power of two)")]
    NotDyadic(Rational),
}

/// Builds `p/q` without going through strings. Panics on `q == 0`.
pub fn rat(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `p/q` or a bare integer `p`. Unlike `Ratio::from_str`, a zero
/// denominator is a reported error rather than a panic.
pub fn parse_rational(text: &str) -> Result<Rational, NumError> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n, d),
        None => (text, "1"),
    };
    let num = BigInt::from_str(num.trim()).map_err(|_| NumError::Malformed(text.to_owned()))?;
    let den = BigInt::from_str(den.trim()).map_err(|_| NumError::Malformed(text.to_owned()))?;
    if den.is_zero() {
        return Err(NumError::ZeroDenominator(text.to_owned()));
    }
    Ok(Rational::new(num, den))
}

/// Truncated decimal rendering with the requested number of fraction
/// digits. Exact values are the `p/q` fields; this is display sugar only.
pub fn format_decimal(value: &Rational, digits: usize) -> String {
    let sign = if value.is_negative() { "-" } else { "" };
    let abs = value.abs();
    let int = abs.numer() / abs.denom();
    let mut rem = abs.numer() - &int * abs.denom();
    let mut frac = String::with_capacity(digits);
    for _ in 0..digits {
        rem *= 10;
        let digit = &rem / abs.denom();
        rem -= &digit * abs.denom();
        frac.push(char::from(b'0' + digit.to_u8().unwrap_or(0)));
    }
    if digits == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// `num / 2^exp` in lowest terms: either `num` is odd or `exp` is zero,
/// and zero is always stored as `0 / 2^0`. The canonical form makes
/// structural equality agree with numeric equality.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DyadicRational {
    num: BigInt,
    exp: u32,
}

impl DyadicRational {
    pub fn new(num: impl Into<BigInt>, exp: u32) -> Self {
        Self::canonical(num.into(), exp)
    }

    fn canonical(mut num: BigInt, mut exp: u32) -> Self {
        if num.is_zero() {
            return Self { num, exp: 0 };
        }
        while exp > 0 && num.is_even() {
            num /= 2;
            exp -= 1;
        }
        Self { num, exp }
    }

    pub fn zero() -> Self {
        Self { num: BigInt::zero(), exp: 0 }
    }

    pub fn one() -> Self {
        Self { num: BigInt::one(), exp: 0 }
    }

    pub fn from_integer(n: impl Into<BigInt>) -> Self {
        Self { num: n.into(), exp: 0 }
    }

    /// `2^{-k}`.
    pub fn pow2_neg(k: u32) -> Self {
        Self { num: BigInt::one(), exp: k }
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.num.is_negative()
    }

    pub fn to_rational(&self) -> Rational {
        Rational::new(self.num.clone(), BigInt::one() << self.exp)
    }

    pub fn try_from_rational(r: &Rational) -> Result<Self, NumError> {
        let mut den = r.denom().clone();
        let mut exp = 0u32;
        while den.is_even() {
            den /= 2;
            exp += 1;
        }
        if den != BigInt::one() {
            return Err(NumError::NotDyadic(r.clone()));
        }
        Ok(Self { num: r.numer().clone(), exp })
    }

    /// Multiplies by `2^shift` (negative shifts halve).
    pub fn times_pow2(&self, shift: i64) -> Self {
        if self.num.is_zero() {
            return Self::zero();
        }
        let current = -(self.exp as i64);
        let target = current + shift;
        if target >= 0 {
            Self { num: &self.num << target as u64, exp: 0 }
        } else {
            Self::canonical(self.num.clone(), (-target) as u32)
        }
    }

    /// The first `depth` bits after the binary point. Requires a value in
    /// `[0, 1]`; the expansion of 1 is returned as all zeros with the
    /// integer part ignored, so callers treat 1 separately.
    pub fn fraction_bits(&self, depth: usize) -> Vec<bool> {
        let mut bits = Vec::with_capacity(depth);
        for i in 1..=depth as u32 {
            if i <= self.exp {
                let bit = (&self.num >> (self.exp - i)) & BigInt::one();
                bits.push(!bit.is_zero());
            } else {
                bits.push(false);
            }
        }
        bits
    }

    fn aligned(&self, other: &Self) -> (BigInt, BigInt, u32) {
        let exp = self.exp.max(other.exp);
        let a = &self.num << (exp - self.exp);
        let b = &other.num << (exp - other.exp);
        (a, b, exp)
    }
}

impl PartialOrd for DyadicRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DyadicRational {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

impl Add for &DyadicRational {
    type Output = DyadicRational;
    fn add(self, rhs: &DyadicRational) -> DyadicRational {
        let (a, b, exp) = self.aligned(rhs);
        DyadicRational::canonical(a + b, exp)
    }
}

impl Sub for &DyadicRational {
    type Output = DyadicRational;
    fn sub(self, rhs: &DyadicRational) -> DyadicRational {
        let (a, b, exp) = self.aligned(rhs);
        DyadicRational::canonical(a - b, exp)
    }
}

impl Neg for &DyadicRational {
    type Output = DyadicRational;
    fn neg(self) -> DyadicRational {
        DyadicRational { num: -&self.num, exp: self.exp }
    }
}

impl fmt::Display for DyadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_rational())
    }
}

impl fmt::Debug for DyadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.num, self.exp)
    }
}

impl FromStr for DyadicRational {
    type Err = NumError;
    fn from_str(s: &str) -> Result<Self, NumError> {
        Self::try_from_rational(&parse_rational(s)?)
    }
}

impl serde::Serialize for DyadicRational {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for DyadicRational {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "rational_string")]` for `Rational` fields: `p/q` text
/// in JSON rather than a numerator/denominator object.
pub mod rational_string {
    use super::{parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Rational, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}
