//! Finite binary strings, the addresses of cylinders in Cantor space.
//!
//! Ordering is lexicographic with a prefix sorting before its extensions,
//! which is exactly the order canonical generator lists are kept in.

use crate::num::DyadicRational;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bit strings are written in 0/1 characters, got {0:?}")]
pub struct ParseBitStringError(pub String);

impl BitString {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// The `index`-th string of the given length in lexicographic order,
    /// i.e. `index` written in binary over `len` bits.
    pub fn from_index(len: usize, index: usize) -> Self {
        debug_assert!(len >= usize::BITS as usize || index < (1 << len));
        let bits = (0..len).map(|i| index >> (len - 1 - i) & 1 == 1).collect();
        Self { bits }
    }

    pub fn to_index(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| acc << 1 | usize::from(b))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn child(&self, bit: bool) -> Self {
        let mut bits = Vec::with_capacity(self.len() + 1);
        bits.extend_from_slice(&self.bits);
        bits.push(bit);
        Self { bits }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.is_empty() {
            return None;
        }
        Some(Self { bits: self.bits[..self.len() - 1].to_vec() })
    }

    pub fn sibling(&self) -> Option<Self> {
        let mut s = self.clone();
        let last = s.bits.pop()?;
        s.bits.push(!last);
        Some(s)
    }

    pub fn prefix(&self, len: usize) -> Self {
        Self { bits: self.bits[..len].to_vec() }
    }

    pub fn concat(&self, tail: &Self) -> Self {
        let mut bits = Vec::with_capacity(self.len() + tail.len());
        bits.extend_from_slice(&self.bits);
        bits.extend_from_slice(&tail.bits);
        Self { bits }
    }

    pub fn is_prefix_of(&self, other: &Self) -> bool {
        other.bits.len() >= self.bits.len() && other.bits[..self.bits.len()] == self.bits[..]
    }

    pub fn is_proper_prefix_of(&self, other: &Self) -> bool {
        self.len() < other.len() && self.is_prefix_of(other)
    }

    pub fn comparable(&self, other: &Self) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    /// All proper prefixes, shortest first, the empty string included.
    pub fn proper_prefixes(&self) -> impl Iterator<Item = BitString> + '_ {
        (0..self.len()).map(|n| self.prefix(n))
    }

    /// All strings of the given length in lexicographic order.
    pub fn all_of_length(len: usize) -> impl Iterator<Item = BitString> {
        assert!(len < usize::BITS as usize, "enumeration depth too large");
        (0usize..1 << len).map(move |i| BitString::from_index(len, i))
    }

    /// Extensions of `self` by `extra` further bits, lexicographic.
    pub fn extensions(&self, extra: usize) -> impl Iterator<Item = BitString> + '_ {
        BitString::all_of_length(extra).map(move |tail| self.concat(&tail))
    }

    /// Left endpoint of the cylinder's interval view, `0.b_1 b_2 ...`.
    pub fn left_endpoint(&self) -> DyadicRational {
        let mut acc = DyadicRational::zero();
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                acc = &acc + &DyadicRational::pow2_neg(i as u32 + 1);
            }
        }
        acc
    }

    /// The closed dyadic interval `[0.s, 0.s + 2^{-|s|}]` the cylinder
    /// projects onto.
    pub fn interval(&self) -> (DyadicRational, DyadicRational) {
        let lo = self.left_endpoint();
        let hi = &lo + &DyadicRational::pow2_neg(self.len() as u32);
        (lo, hi)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            f.write_str("<>")
        } else {
            write!(f, "{self}")
        }
    }
}

impl FromStr for BitString {
    type Err = ParseBitStringError;

    /// The empty string denotes the root. `e` is accepted as an explicit
    /// spelling of it for contexts where an empty argument is awkward.
    fn from_str(s: &str) -> Result<Self, ParseBitStringError> {
        if s == "e" {
            return Ok(Self::empty());
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(ParseBitStringError(s.to_owned())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::from_bits)
    }
}

impl serde::Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
