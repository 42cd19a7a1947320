//! Finite-depth betting martingales and their staged approximations.
//!
//! A martingale here is a total assignment of nonnegative rationals to
//! all strings up to a depth, fair in the betting sense: the value at a
//! node is the average of the values at its children. Staged sequences
//! capture approximation from below; nothing in this module claims a
//! limit, every statement is about the finitely many stages given.

use crate::bits::BitString;
use crate::clopen::ClopenSet;
use crate::num::{DyadicRational, Rational};
use num_traits::{One, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MartingaleError {
    #[error("expected {expected} values for depth {depth}, got {got}")]
    WrongValueCount { depth: usize, expected: usize, got: usize },
    #[error("martingale values must be nonnegative; {node:?} carries {value}")]
    NegativeValue { node: BitString, value: Rational },
    #[error("upcrossing band needs 0 < c < d, got c={c}, d={d}")]
    InvalidBand { c: Rational, d: Rational },
    #[error("path of length {path_len} exceeds martingale depth {depth}")]
    PathTooDeep { path_len: usize, depth: usize },
    #[error("the hypothesis requires M(<>) < c, but M(<>) = {root} and c = {c}")]
    RootNotBelowBand { root: Rational, c: Rational },
    #[error("enumeration depth {depth} exceeds the configured limit {limit}")]
    DepthBudget { depth: usize, limit: usize },
    #[error("{first:?} and {second:?} are comparable, so the family is not an antichain")]
    NotAntichain { first: BitString, second: BitString },
    #[error("{tau:?} is not a proper extension of {eta:?}")]
    NotProperExtension { tau: BitString, eta: BitString },
    #[error("node {node:?} lies below depth {depth}")]
    NodeTooDeep { node: BitString, depth: usize },
    #[error("staged martingales need equal depths; stage {stage} has depth {got}, expected {expected}")]
    MixedDepths { stage: usize, got: usize, expected: usize },
    #[error("stage {stage} decreases at {node:?}: {before} -> {after}")]
    StageDecrease { stage: usize, node: BitString, before: Rational, after: Rational },
    #[error("approximation sequence decreases at index {index}")]
    ApproximationDecrease { index: usize },
    #[error("approximation value at index {index} is outside [0, 1]")]
    ApproximationOutOfRange { index: usize },
}

/// Total assignment on all strings of length at most `depth`, stored in
/// level order (root, 0, 1, 00, 01, ...).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "MartingaleRepr", into = "MartingaleRepr")]
pub struct FiniteMartingale {
    depth: usize,
    values: Vec<Rational>,
}

fn node_count(depth: usize) -> usize {
    (1 << (depth + 1)) - 1
}

impl FiniteMartingale {
    pub fn from_values(depth: usize, values: Vec<Rational>) -> Result<Self, MartingaleError> {
        let expected = node_count(depth);
        if values.len() != expected {
            return Err(MartingaleError::WrongValueCount { depth, expected, got: values.len() });
        }
        for (i, v) in values.iter().enumerate() {
            if v < &Rational::zero() {
                return Err(MartingaleError::NegativeValue {
                    node: node_of_index(i),
                    value: v.clone(),
                });
            }
        }
        Ok(Self { depth, values })
    }

    pub fn from_fn(
        depth: usize,
        mut f: impl FnMut(&BitString) -> Rational,
    ) -> Result<Self, MartingaleError> {
        let mut values = Vec::with_capacity(node_count(depth));
        for len in 0..=depth {
            for s in BitString::all_of_length(len) {
                values.push(f(&s));
            }
        }
        Self::from_values(depth, values)
    }

    pub fn constant(depth: usize, value: Rational) -> Self {
        assert!(value >= Rational::zero(), "martingale values are nonnegative");
        Self { depth, values: vec![value; node_count(depth)] }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn value(&self, s: &BitString) -> &Rational {
        assert!(s.len() <= self.depth, "node below martingale depth");
        &self.values[index_of_node(s)]
    }

    pub fn values_level_order(&self) -> &[Rational] {
        &self.values
    }

    /// Checks `2M(σ) = M(σ0) + M(σ1)` at every interior node.
    pub fn check_fairness(&self) -> FairnessReport {
        for len in 0..self.depth {
            for s in BitString::all_of_length(len) {
                let here = self.value(&s);
                let lhs = here + here;
                let rhs = self.value(&s.child(false)) + self.value(&s.child(true));
                if lhs != rhs {
                    return FairnessReport { first_violation: Some(FairnessViolation {
                        node: s,
                        doubled_value: lhs,
                        children_sum: rhs,
                    }) };
                }
            }
        }
        FairnessReport { first_violation: None }
    }

    /// Greedy left-to-right scan along the prefixes of `z`: find a value
    /// below `c`, then the first later value above `d`, record the pair,
    /// repeat from there. Intermediate values never exceed `d` within a
    /// recorded pair, so the pairs match the crossing definition.
    pub fn count_upcrossings(
        &self,
        z: &BitString,
        c: &Rational,
        d: &Rational,
    ) -> Result<UpcrossingRecord, MartingaleError> {
        check_band(c, d)?;
        if z.len() > self.depth {
            return Err(MartingaleError::PathTooDeep { path_len: z.len(), depth: self.depth });
        }
        let mut crossings = Vec::new();
        let mut open: Option<usize> = None;
        for n in 0..=z.len() {
            let v = self.value(&z.prefix(n));
            match open {
                None if v < c => open = Some(n),
                Some(start) if v > d => {
                    crossings.push((z.prefix(start), z.prefix(n)));
                    open = None;
                }
                _ => {}
            }
        }
        Ok(UpcrossingRecord { c: c.clone(), d: d.clone(), crossings })
    }

    /// Exact measure of the depth-`d` leaves with at least `k`
    /// upcrossings along their prefix path, against the bound `(c/d)^k`.
    pub fn dubins_check(
        &self,
        c: &Rational,
        d: &Rational,
        k: usize,
        depth_limit: usize,
    ) -> Result<DubinsReport, MartingaleError> {
        check_band(c, d)?;
        if self.depth > depth_limit {
            return Err(MartingaleError::DepthBudget { depth: self.depth, limit: depth_limit });
        }
        let root = self.value(&BitString::empty());
        if root >= c {
            return Err(MartingaleError::RootNotBelowBand { root: root.clone(), c: c.clone() });
        }
        let leaf_count = 1usize << self.depth;
        let mut hit_count = 0usize;
        for leaf in BitString::all_of_length(self.depth) {
            let record = self.count_upcrossings(&leaf, c, d)?;
            if record.count() >= k {
                hit_count += 1;
            }
        }
        let measured = Rational::new(hit_count.into(), leaf_count.into());
        let ratio = c / d;
        let mut bound = Rational::one();
        for _ in 0..k {
            bound *= &ratio;
        }
        let holds = measured <= bound;
        Ok(DubinsReport { k, measured, bound, holds, hit_count, leaf_count })
    }

    /// Verifies `2^{-|η|} M(η) ≥ Σ_{τ∈F} 2^{-|τ|} M(τ)` for an antichain
    /// `F` of proper extensions of `η`.
    pub fn kolmogorov_check(
        &self,
        eta: &BitString,
        family: &[BitString],
    ) -> Result<KolmogorovReport, MartingaleError> {
        if eta.len() > self.depth {
            return Err(MartingaleError::NodeTooDeep { node: eta.clone(), depth: self.depth });
        }
        for tau in family {
            if !eta.is_proper_prefix_of(tau) {
                return Err(MartingaleError::NotProperExtension {
                    tau: tau.clone(),
                    eta: eta.clone(),
                });
            }
            if tau.len() > self.depth {
                return Err(MartingaleError::NodeTooDeep { node: tau.clone(), depth: self.depth });
            }
        }
        for (i, a) in family.iter().enumerate() {
            for b in &family[i + 1..] {
                if a.comparable(b) {
                    return Err(MartingaleError::NotAntichain {
                        first: a.clone(),
                        second: b.clone(),
                    });
                }
            }
        }
        let weight_at = |s: &BitString| {
            Rational::new(1.into(), num_bigint::BigInt::from(1) << s.len()) * self.value(s)
        };
        let lhs = weight_at(eta);
        let rhs = family.iter().map(weight_at).fold(Rational::zero(), |a, b| a + b);
        let holds = lhs >= rhs;
        Ok(KolmogorovReport { lhs, rhs, holds })
    }
}

fn check_band(c: &Rational, d: &Rational) -> Result<(), MartingaleError> {
    if !(Rational::zero() < *c && c < d) {
        return Err(MartingaleError::InvalidBand { c: c.clone(), d: d.clone() });
    }
    Ok(())
}

fn index_of_node(s: &BitString) -> usize {
    (1 << s.len()) - 1 + s.to_index()
}

fn node_of_index(mut i: usize) -> BitString {
    let mut len = 0;
    while i >= 1 << len {
        i -= 1 << len;
        len += 1;
    }
    BitString::from_index(len, i)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct MartingaleRepr {
    depth: usize,
    values: Vec<String>,
}

impl From<FiniteMartingale> for MartingaleRepr {
    fn from(m: FiniteMartingale) -> Self {
        Self { depth: m.depth, values: m.values.iter().map(|v| v.to_string()).collect() }
    }
}

impl TryFrom<MartingaleRepr> for FiniteMartingale {
    type Error = String;
    fn try_from(repr: MartingaleRepr) -> Result<Self, String> {
        let values = repr
            .values
            .iter()
            .map(|v| crate::num::parse_rational(v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        FiniteMartingale::from_values(repr.depth, values).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairnessReport {
    pub first_violation: Option<FairnessViolation>,
}

impl FairnessReport {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairnessViolation {
    pub node: BitString,
    pub doubled_value: Rational,
    pub children_sum: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpcrossingRecord {
    pub c: Rational,
    pub d: Rational,
    /// Pairs `(σ, τ)` of prefixes of the scanned path with `M(σ) < c`,
    /// `M(τ) > d`, and no value above `d` strictly between them.
    pub crossings: Vec<(BitString, BitString)>,
}

impl UpcrossingRecord {
    pub fn count(&self) -> usize {
        self.crossings.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DubinsReport {
    pub k: usize,
    pub measured: Rational,
    pub bound: Rational,
    pub holds: bool,
    pub hit_count: usize,
    pub leaf_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KolmogorovReport {
    pub lhs: Rational,
    pub rhs: Rational,
    pub holds: bool,
}

/// Equal-depth stages, pointwise nondecreasing. The last stage stands in
/// for the approximated object in every "final" query.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct StagedMartingale {
    stages: Vec<FiniteMartingale>,
}

impl StagedMartingale {
    pub fn new(stages: Vec<FiniteMartingale>) -> Result<Self, MartingaleError> {
        assert!(!stages.is_empty(), "a staged martingale needs at least one stage");
        let depth = stages[0].depth;
        for (i, stage) in stages.iter().enumerate() {
            if stage.depth != depth {
                return Err(MartingaleError::MixedDepths {
                    stage: i,
                    got: stage.depth,
                    expected: depth,
                });
            }
        }
        for i in 1..stages.len() {
            for (j, (before, after)) in
                stages[i - 1].values.iter().zip(&stages[i].values).enumerate()
            {
                if after < before {
                    return Err(MartingaleError::StageDecrease {
                        stage: i,
                        node: node_of_index(j),
                        before: before.clone(),
                        after: after.clone(),
                    });
                }
            }
        }
        Ok(Self { stages })
    }

    pub fn depth(&self) -> usize {
        self.stages[0].depth
    }

    pub fn stages(&self) -> &[FiniteMartingale] {
        &self.stages
    }

    pub fn stage(&self, s: usize) -> &FiniteMartingale {
        &self.stages[s]
    }

    pub fn final_stage(&self) -> &FiniteMartingale {
        self.stages.last().unwrap()
    }

    pub fn check_fairness(&self) -> Vec<FairnessReport> {
        self.stages.iter().map(FiniteMartingale::check_fairness).collect()
    }

    /// Final-stage values along the prefixes of `z`, with running
    /// min/max and gap accumulated from the cut index on. The gap of the
    /// trace is `max − min` over the rows at positions ≥ `cut`.
    pub fn oscillation_trace(
        &self,
        z: &BitString,
        cut: usize,
    ) -> Result<OscillationTrace, MartingaleError> {
        if z.len() > self.depth() {
            return Err(MartingaleError::PathTooDeep { path_len: z.len(), depth: self.depth() });
        }
        let last = self.final_stage();
        let mut rows = Vec::with_capacity(z.len() + 1);
        let mut lo: Option<Rational> = None;
        let mut hi: Option<Rational> = None;
        for n in 0..=z.len() {
            let value = last.value(&z.prefix(n)).clone();
            if n >= cut {
                lo = Some(lo.map_or(value.clone(), |m: Rational| m.min(value.clone())));
                hi = Some(hi.map_or(value.clone(), |m: Rational| m.max(value.clone())));
            }
            rows.push(TraceRow {
                n,
                value,
                running_min: lo.clone(),
                running_max: hi.clone(),
                gap: match (&lo, &hi) {
                    (Some(lo), Some(hi)) => Some(hi - lo),
                    _ => None,
                },
            });
        }
        let gap = rows.last().and_then(|r| r.gap.clone()).unwrap_or_else(Rational::zero);
        Ok(OscillationTrace { rows, cut, gap })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub n: usize,
    pub value: Rational,
    pub running_min: Option<Rational>,
    pub running_max: Option<Rational>,
    pub gap: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OscillationTrace {
    pub rows: Vec<TraceRow>,
    pub cut: usize,
    pub gap: Rational,
}

/// Finite nondecreasing approximation of a real in `[0, 1]` from below.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct LeftCEReal {
    approximations: Vec<DyadicRational>,
}

impl LeftCEReal {
    pub fn new(approximations: Vec<DyadicRational>) -> Result<Self, MartingaleError> {
        assert!(!approximations.is_empty(), "a left-c.e. real needs at least one stage");
        let one = DyadicRational::one();
        for (i, a) in approximations.iter().enumerate() {
            if a.is_negative() || a > &one {
                return Err(MartingaleError::ApproximationOutOfRange { index: i });
            }
            if i > 0 && a < &approximations[i - 1] {
                return Err(MartingaleError::ApproximationDecrease { index: i });
            }
        }
        Ok(Self { approximations })
    }

    pub fn stages(&self) -> &[DyadicRational] {
        &self.approximations
    }

    pub fn final_value(&self) -> &DyadicRational {
        self.approximations.last().unwrap()
    }
}

/// The clopen set of sequences strictly below `alpha` in the usual
/// ordering of binary expansions, i.e. `[0, alpha)`, truncated to the
/// first `depth` bits of the expansion. For `alpha = 1` the whole space.
pub fn initial_segment(alpha: &DyadicRational, depth: usize) -> ClopenSet {
    if alpha >= &DyadicRational::one() {
        return ClopenSet::full();
    }
    let bits = alpha.fraction_bits(depth);
    let mut gens = Vec::new();
    let mut prefix = BitString::empty();
    for b in bits {
        if b {
            gens.push(prefix.child(false));
        }
        prefix.push(b);
    }
    ClopenSet::from_raw(gens)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalMartingaleReport {
    pub staged: StagedMartingale,
    /// Residual mass `α_s − λ[0, α_s↓depth)` dropped at each stage by
    /// the depth truncation; each entry is below `2^{-depth}`.
    pub dropped: Vec<Rational>,
}

/// The stage-s martingale is the local measure of `[0, α_s)` truncated
/// at the working depth: `L_s(σ) = λ_σ([0, α_s↓depth))`. Every stage is
/// fair by construction, and stages are nondecreasing because initial
/// segments of a nondecreasing sequence are nested.
pub fn interval_martingale(alpha: &LeftCEReal, depth: usize) -> IntervalMartingaleReport {
    let mut stages = Vec::with_capacity(alpha.stages().len());
    let mut dropped = Vec::with_capacity(alpha.stages().len());
    for a in alpha.stages() {
        let segment = initial_segment(a, depth);
        dropped.push(a.to_rational() - segment.measure());
        let stage = FiniteMartingale::from_fn(depth, |s| segment.local_measure(s))
            .expect("local measures are nonnegative");
        stages.push(stage);
    }
    let staged = StagedMartingale::new(stages).expect("nested segments give monotone stages");
    IntervalMartingaleReport { staged, dropped }
}
