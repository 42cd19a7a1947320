//! Clopen subsets of Cantor space as canonical antichains of cylinders.
//!
//! A set is stored by its generators: the lexicographically sorted,
//! prefix-free, sibling-merged list of strings whose cylinders union to
//! the set. Canonical form is established once at construction, so
//! structural equality is extensional equality and every measure query
//! is a plain sum.

use crate::bits::BitString;
use crate::num::Rational;
use num_bigint::BigInt;
use num_traits::{One, Zero};

/// Total weight `sum 2^{-|s|}` of a collection of strings. No antichain
/// assumption: every listed string contributes, which is the reading
/// used for weighted string sets in test constructions.
pub fn weight<'a>(strings: impl IntoIterator<Item = &'a BitString>) -> Rational {
    let mut total = Rational::zero();
    for s in strings {
        total += cylinder_measure(s.len());
    }
    total
}

/// `2^{-len}` as an exact rational.
pub fn cylinder_measure(len: usize) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << len)
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct ClopenSet {
    gens: Vec<BitString>,
}

enum Node {
    Empty,
    Full,
    Split(Box<Node>, Box<Node>),
}

impl Node {
    fn insert(&mut self, bits: &[bool]) {
        match self {
            Node::Full => {}
            _ if bits.is_empty() => *self = Node::Full,
            Node::Empty => {
                *self = Node::Split(Box::new(Node::Empty), Box::new(Node::Empty));
                self.insert(bits);
            }
            Node::Split(zero, one) => {
                if bits[0] { one.insert(&bits[1..]) } else { zero.insert(&bits[1..]) }
                if matches!(**zero, Node::Full) && matches!(**one, Node::Full) {
                    *self = Node::Full;
                }
            }
        }
    }

    fn emit_full(&self, prefix: &mut BitString, out: &mut Vec<BitString>) {
        match self {
            Node::Empty => {}
            Node::Full => out.push(prefix.clone()),
            Node::Split(zero, one) => {
                prefix.push(false);
                zero.emit_full(prefix, out);
                *prefix = prefix.parent().unwrap().child(true);
                one.emit_full(prefix, out);
                *prefix = prefix.parent().unwrap();
            }
        }
    }

    fn emit_empty(&self, prefix: &mut BitString, out: &mut Vec<BitString>) {
        match self {
            Node::Empty => out.push(prefix.clone()),
            Node::Full => {}
            Node::Split(zero, one) => {
                prefix.push(false);
                zero.emit_empty(prefix, out);
                *prefix = prefix.parent().unwrap().child(true);
                one.emit_empty(prefix, out);
                *prefix = prefix.parent().unwrap();
            }
        }
    }
}

impl ClopenSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full() -> Self {
        Self { gens: vec![BitString::empty()] }
    }

    pub fn cylinder(s: &BitString) -> Self {
        Self { gens: vec![s.clone()] }
    }

    /// Canonicalizes an arbitrary generator list: duplicates and covered
    /// extensions are absorbed, exhaustive sibling pairs merge, and the
    /// result is sorted. The set denoted is unchanged.
    pub fn from_raw<I>(gens: I) -> Self
    where
        I: IntoIterator,
        I::Item: std::borrow::Borrow<BitString>,
    {
        use std::borrow::Borrow;
        let mut root = Node::Empty;
        for g in gens {
            root.insert(g.borrow().bits());
        }
        let mut out = Vec::new();
        root.emit_full(&mut BitString::empty(), &mut out);
        Self { gens: out }
    }

    pub fn generators(&self) -> &[BitString] {
        &self.gens
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.gens.len() == 1 && self.gens[0].is_empty()
    }

    /// Length of the longest generator.
    pub fn depth(&self) -> usize {
        self.gens.iter().map(BitString::len).max().unwrap_or(0)
    }

    pub fn measure(&self) -> Rational {
        weight(&self.gens)
    }

    /// Whether the whole cylinder `[s]` is inside the set.
    pub fn covers(&self, s: &BitString) -> bool {
        self.gens.iter().any(|g| g.is_prefix_of(s))
    }

    /// Whether `[s]` meets the set at all.
    pub fn meets(&self, s: &BitString) -> bool {
        self.gens.iter().any(|g| g.comparable(s))
    }

    /// Local measure: the measure of the set relative to the cylinder
    /// `[s]`, i.e. `2^{|s|} * lambda(self ∩ [s])`. Always in `[0, 1]`.
    pub fn local_measure(&self, s: &BitString) -> Rational {
        let mut total = Rational::zero();
        for g in &self.gens {
            if g.is_prefix_of(s) {
                return Rational::one();
            }
            if s.is_prefix_of(g) {
                total += cylinder_measure(g.len() - s.len());
            }
        }
        total
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_raw(self.gens.iter().chain(&other.gens))
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut parts = Vec::new();
        for g in &self.gens {
            for h in &other.gens {
                if g.is_prefix_of(h) {
                    parts.push(h.clone());
                } else if h.is_prefix_of(g) {
                    parts.push(g.clone());
                }
            }
        }
        Self::from_raw(parts)
    }

    pub fn complement(&self) -> Self {
        let mut root = Node::Empty;
        for g in &self.gens {
            root.insert(g.bits());
        }
        let mut out = Vec::new();
        root.emit_empty(&mut BitString::empty(), &mut out);
        Self { gens: out }
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.intersect(&other.complement())
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.gens.iter().all(|g| other.covers(g))
    }
}

impl<'a> IntoIterator for &'a ClopenSet {
    type Item = &'a BitString;
    type IntoIter = std::slice::Iter<'a, BitString>;
    fn into_iter(self) -> Self::IntoIter {
        self.gens.iter()
    }
}

impl std::fmt::Display for ClopenSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, g) in self.gens.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{g:?}")?;
        }
        write!(f, "}}")
    }
}

impl serde::Serialize for ClopenSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.gens.iter().map(|g| g.to_string()))
    }
}

impl<'de> serde::Deserialize<'de> for ClopenSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let gens = Vec::<BitString>::deserialize(deserializer)?;
        Ok(Self::from_raw(gens))
    }
}
