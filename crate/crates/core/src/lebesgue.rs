//! Step functions with exact cylinder averages, staged approximations
//! of integral tests, and the construction that turns a gap between a
//! function's value and its average limit along a path into a new test
//! with large value on that path, together with the telescoping bound
//! certifying the new test's integral.

use crate::bits::BitString;
use crate::clopen::cylinder_measure;
use crate::martingale::{FiniteMartingale, StagedMartingale};
use crate::num::Rational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LebesgueError {
    #[error("cell {cell:?} carries a negative value")]
    NegativeValue { cell: BitString },
    #[error("cell {cell:?} appears twice in the partition")]
    DuplicateCell { cell: BitString },
    #[error("cells {first:?} and {second:?} overlap")]
    OverlappingCells { first: BitString, second: BitString },
    #[error("cell measures sum to {total}, not 1; the cells do not partition the space")]
    NotAPartition { total: Rational },
    #[error("a staged approximation needs at least one stage")]
    NoStages,
    #[error("stage {stage} decreases on leaf {leaf:?}")]
    StageDecrease { stage: usize, leaf: BitString },
    #[error("threshold must be positive, got {q}")]
    NonPositiveThreshold { q: Rational },
    #[error("the construction needs at least one level")]
    NoLevels,
    #[error("path of length {got} is too short; the probe needs {need} bits")]
    PathTooShort { need: usize, got: usize },
}

/// A nonnegative function that is constant on each cell of a finite
/// cylinder partition.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "StepFunctionRepr", into = "StepFunctionRepr")]
pub struct StepFunction {
    cells: BTreeMap<BitString, Rational>,
}

impl StepFunction {
    pub fn new(
        cells: impl IntoIterator<Item = (BitString, Rational)>,
    ) -> Result<Self, LebesgueError> {
        let mut map = BTreeMap::new();
        for (cell, value) in cells {
            if value < Rational::zero() {
                return Err(LebesgueError::NegativeValue { cell });
            }
            if map.insert(cell.clone(), value).is_some() {
                return Err(LebesgueError::DuplicateCell { cell });
            }
        }
        let keys: Vec<&BitString> = map.keys().collect();
        for (i, a) in keys.iter().enumerate() {
            for b in &keys[i + 1..] {
                if a.comparable(b) {
                    return Err(LebesgueError::OverlappingCells {
                        first: (*a).clone(),
                        second: (*b).clone(),
                    });
                }
            }
        }
        let total: Rational = map.keys().map(|c| cylinder_measure(c.len())).sum();
        if total != Rational::one() {
            return Err(LebesgueError::NotAPartition { total });
        }
        Ok(Self { cells: map })
    }

    pub fn constant(value: Rational) -> Self {
        Self::new([(BitString::empty(), value)]).expect("a single root cell is a partition")
    }

    /// `value` on `[sigma]`, zero elsewhere.
    pub fn indicator(sigma: &BitString, value: Rational) -> Self {
        let mut cells = vec![(sigma.clone(), value)];
        for len in 1..=sigma.len() {
            let along = sigma.prefix(len).sibling().expect("nonempty prefix");
            cells.push((along, Rational::zero()));
        }
        Self::new(cells).expect("a cylinder and its path siblings partition the space")
    }

    pub fn cells(&self) -> &BTreeMap<BitString, Rational> {
        &self.cells
    }

    /// Depth of the finest cell; the function is constant below it.
    pub fn depth(&self) -> usize {
        self.cells.keys().map(BitString::len).max().unwrap_or(0)
    }

    pub fn integral(&self) -> Rational {
        self.cells
            .iter()
            .map(|(c, v)| v * cylinder_measure(c.len()))
            .sum()
    }

    /// Value on the cell containing the paths through `z`; the path
    /// must be long enough to single out a cell.
    pub fn value_along(&self, z: &BitString) -> Result<Rational, LebesgueError> {
        self.cells
            .iter()
            .find(|(c, _)| c.is_prefix_of(z))
            .map(|(_, v)| v.clone())
            .ok_or(LebesgueError::PathTooShort { need: self.depth(), got: z.len() })
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct StepFunctionRepr {
    cells: Vec<(String, String)>,
}

impl TryFrom<StepFunctionRepr> for StepFunction {
    type Error = String;
    fn try_from(repr: StepFunctionRepr) -> Result<Self, String> {
        let cells = repr
            .cells
            .iter()
            .map(|(c, v)| {
                Ok((
                    c.parse::<BitString>().map_err(|e| e.to_string())?,
                    crate::num::parse_rational(v).map_err(|e| e.to_string())?,
                ))
            })
            .collect::<Result<Vec<_>, String>>()?;
        StepFunction::new(cells).map_err(|e| e.to_string())
    }
}

impl From<StepFunction> for StepFunctionRepr {
    fn from(f: StepFunction) -> Self {
        StepFunctionRepr {
            cells: f.cells.iter().map(|(c, v)| (c.to_string(), v.to_string())).collect(),
        }
    }
}

/// Exact average of `g` over `[sigma]`.
pub fn cond_expectation(g: &StepFunction, sigma: &BitString) -> Rational {
    let mut total = Rational::zero();
    for (cell, value) in g.cells() {
        if cell.is_prefix_of(sigma) {
            return value.clone();
        }
        if sigma.is_proper_prefix_of(cell) {
            total += value * cylinder_measure(cell.len() - sigma.len());
        }
    }
    total
}

/// Cellwise comparison on the common refinement.
pub fn pointwise_le(lower: &StepFunction, upper: &StepFunction) -> bool {
    first_exceeding_leaf(lower, upper).is_none()
}

fn first_exceeding_leaf(lower: &StepFunction, upper: &StepFunction) -> Option<BitString> {
    let depth = lower.depth().max(upper.depth());
    BitString::all_of_length(depth).find(|leaf| {
        lower.value_along(leaf).unwrap() > upper.value_along(leaf).unwrap()
    })
}

/// A nondecreasing sequence of step functions approximating an
/// integrable function from below, with the derived stabilization
/// depths: beyond `u(s)` the stage-`s` averages stop moving.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "IntegralTestRepr", into = "IntegralTestRepr")]
pub struct IntegralTestApprox {
    stages: Vec<StepFunction>,
    stabilization: Vec<usize>,
}

impl IntegralTestApprox {
    pub fn new(stages: Vec<StepFunction>) -> Result<Self, LebesgueError> {
        if stages.is_empty() {
            return Err(LebesgueError::NoStages);
        }
        for s in 1..stages.len() {
            if let Some(leaf) = first_exceeding_leaf(&stages[s - 1], &stages[s]) {
                return Err(LebesgueError::StageDecrease { stage: s, leaf });
            }
        }
        let mut stabilization = Vec::with_capacity(stages.len());
        let mut running = 0usize;
        for stage in &stages {
            running = running.max(stage.depth());
            stabilization.push(running);
        }
        Ok(Self { stages, stabilization })
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, s: usize) -> &StepFunction {
        &self.stages[s.min(self.stages.len() - 1)]
    }

    pub fn final_stage(&self) -> &StepFunction {
        self.stages.last().unwrap()
    }

    /// Nondecreasing stabilization depth for stage `s`.
    pub fn stabilization(&self, s: usize) -> usize {
        self.stabilization[s.min(self.stabilization.len() - 1)]
    }

    pub fn max_stabilization(&self) -> usize {
        *self.stabilization.last().unwrap()
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct IntegralTestRepr {
    stages: Vec<StepFunction>,
}

impl TryFrom<IntegralTestRepr> for IntegralTestApprox {
    type Error = String;
    fn try_from(repr: IntegralTestRepr) -> Result<Self, String> {
        IntegralTestApprox::new(repr.stages).map_err(|e| e.to_string())
    }
}

impl From<IntegralTestApprox> for IntegralTestRepr {
    fn from(g: IntegralTestApprox) -> Self {
        IntegralTestRepr { stages: g.stages }
    }
}

/// The staged martingale `sigma -> average of g_s over [sigma]`, at
/// depth equal to the deepest stabilization level.
pub fn expectation_martingale(g: &IntegralTestApprox) -> StagedMartingale {
    let depth = g.max_stabilization();
    let stages = (0..g.stage_count())
        .map(|s| {
            FiniteMartingale::from_fn(depth, |sigma| cond_expectation(g.stage(s), sigma))
                .expect("averages of a nonnegative function are nonnegative")
        })
        .collect();
    StagedMartingale::new(stages).expect("stage growth carries over to averages")
}

/// One entry of a construction level: the cell, the first stage whose
/// average on the cell exceeds the threshold, the parent pair it grew
/// from, and the component coefficient `q - E(g_s, tau)` taken at the
/// parent's stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HPair {
    pub tau: BitString,
    pub t: usize,
    pub parent: BitString,
    pub parent_stage: usize,
    pub coefficient: Rational,
}

/// Levels of cells where the staged averages first cross the threshold
/// above a parent cell, the assembled step function summing the
/// components, and its partial value along the distinguished path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HConstruction {
    pub q: Rational,
    pub z: BitString,
    /// Level 0 holds the root seed with coefficient zero and no
    /// component; components start at level 1.
    pub levels: Vec<Vec<HPair>>,
    /// Depth at which qualification is decided; stages are constant
    /// below it, so the minimal-cell search never truncates early.
    pub search_depth: usize,
    pub h: StepFunction,
    /// Sum of coefficients over pairs lying on the path.
    pub path_value: Rational,
}

impl HConstruction {
    pub fn pairs(&self) -> impl Iterator<Item = &HPair> {
        self.levels.iter().skip(1).flatten()
    }
}

/// Grows the level sets: below each parent cell, the minimal cells of
/// length at least the parent-stage stabilization depth whose final
/// average exceeds `q` enter with the least crossing stage. Cells
/// already above `q` at the parent's own stage are excluded; their
/// components would be negative and the path argument never draws on
/// them.
pub fn build_h(
    g: &IntegralTestApprox,
    q: &Rational,
    z: &BitString,
    levels: usize,
) -> Result<HConstruction, LebesgueError> {
    if *q <= Rational::zero() {
        return Err(LebesgueError::NonPositiveThreshold { q: q.clone() });
    }
    if levels == 0 {
        return Err(LebesgueError::NoLevels);
    }
    let final_stage = g.final_stage();
    let search_depth = g.max_stabilization();
    let root = HPair {
        tau: BitString::empty(),
        t: 0,
        parent: BitString::empty(),
        parent_stage: 0,
        coefficient: Rational::zero(),
    };
    let mut level_sets = vec![vec![root]];
    for _ in 1..=levels {
        let previous = level_sets.last().unwrap();
        let mut next = Vec::new();
        for parent in previous {
            let (sigma, s) = (&parent.tau, parent.t);
            let min_len = g.stabilization(s).max(sigma.len() + 1);
            let horizon = search_depth.max(min_len);
            let mut stack = vec![sigma.child(true), sigma.child(false)];
            while let Some(node) = stack.pop() {
                if node.len() >= min_len && &cond_expectation(final_stage, &node) > q {
                    let at_parent_stage = cond_expectation(g.stage(s), &node);
                    if &at_parent_stage <= q {
                        let t = (0..g.stage_count())
                            .find(|&r| &cond_expectation(g.stage(r), &node) > q)
                            .expect("the final stage already exceeds the threshold");
                        next.push(HPair {
                            tau: node,
                            t,
                            parent: sigma.clone(),
                            parent_stage: s,
                            coefficient: q - at_parent_stage,
                        });
                    }
                    continue;
                }
                if node.len() < horizon {
                    stack.push(node.child(true));
                    stack.push(node.child(false));
                }
            }
        }
        level_sets.push(next);
    }

    let h_depth = level_sets
        .iter()
        .skip(1)
        .flatten()
        .map(|p| p.tau.len())
        .max()
        .unwrap_or(0);
    let h = StepFunction::new(BitString::all_of_length(h_depth).map(|leaf| {
        let value = level_sets
            .iter()
            .skip(1)
            .flatten()
            .filter(|p| p.tau.is_prefix_of(&leaf))
            .map(|p| p.coefficient.clone())
            .sum();
        (leaf, value)
    }))
    .expect("uniform leaves with nonnegative sums form a partition");
    let path_value = level_sets
        .iter()
        .skip(1)
        .flatten()
        .filter(|p| p.tau.is_prefix_of(z))
        .map(|p| p.coefficient.clone())
        .sum();
    Ok(HConstruction {
        q: q.clone(),
        z: z.clone(),
        levels: level_sets,
        search_depth,
        h,
        path_value,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBound {
    pub tau: BitString,
    pub t: usize,
    pub component_integral: Rational,
    pub allowance: Rational,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelescopingReport {
    /// Total integral of the assembled components.
    pub lhs: Rational,
    /// Integral of the final stage.
    pub rhs: Rational,
    pub holds: bool,
    /// Per-pair comparison of the component integral against the mass
    /// the stages gained on the cell between the parent's stage and the
    /// crossing stage.
    pub pairs: Vec<PairBound>,
}

/// Certifies the construction's total integral against the integral of
/// the approximated function, exactly.
pub fn telescoping_bound_check(h: &HConstruction, g: &IntegralTestApprox) -> TelescopingReport {
    let mut lhs = Rational::zero();
    let mut pairs = Vec::new();
    for pair in h.pairs() {
        let weight = cylinder_measure(pair.tau.len());
        let component_integral = &pair.coefficient * &weight;
        let gained = cond_expectation(g.stage(pair.t), &pair.tau)
            - cond_expectation(g.stage(pair.parent_stage), &pair.tau);
        let allowance = gained * &weight;
        let holds = component_integral <= allowance;
        lhs += &component_integral;
        pairs.push(PairBound {
            tau: pair.tau.clone(),
            t: pair.t,
            component_integral,
            allowance,
            holds,
        });
    }
    let rhs = g.final_stage().integral();
    let holds = lhs <= rhs && pairs.iter().all(|p| p.holds);
    TelescopingReport { lhs, rhs, holds, pairs }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeTrace {
    pub path: BitString,
    /// `(n, average of the final stage over the length-n prefix)`.
    pub entries: Vec<(usize, Rational)>,
    /// Value of the final stage on the cell the path singles out.
    pub cell_value: Rational,
    /// Depth past which the averages stop moving.
    pub stabilization: usize,
    pub tail_min: Rational,
    pub tail_max: Rational,
    /// Largest distance between the tail envelope and the cell value.
    pub discrepancy: Rational,
}

/// Finite surrogate of the averages-converge-to-the-value condition:
/// the average trace along the path, its envelope past the
/// stabilization depth, and the gap to the function's value there.
pub fn lebesgue_point_probe(
    g: &IntegralTestApprox,
    z: &BitString,
    depth: usize,
) -> Result<ProbeTrace, LebesgueError> {
    let stabilization = g.max_stabilization();
    let need = depth.max(stabilization);
    if z.len() < need {
        return Err(LebesgueError::PathTooShort { need, got: z.len() });
    }
    let final_stage = g.final_stage();
    let entries: Vec<(usize, Rational)> = (0..=depth)
        .map(|n| (n, cond_expectation(final_stage, &z.prefix(n))))
        .collect();
    let cell_value = final_stage.value_along(z)?;
    let tail_start = stabilization.min(depth);
    let tail: Vec<&Rational> = entries[tail_start..].iter().map(|(_, v)| v).collect();
    let tail_min = (*tail.iter().min().unwrap()).clone();
    let tail_max = (*tail.iter().max().unwrap()).clone();
    let discrepancy = (&tail_min - &cell_value)
        .abs()
        .max((&tail_max - &cell_value).abs());
    Ok(ProbeTrace {
        path: z.clone(),
        entries,
        cell_value,
        stabilization,
        tail_min,
        tail_max,
        discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn from_leaves(depth: usize, values: &[Rational]) -> StepFunction {
        assert_eq!(values.len(), 1 << depth);
        StepFunction::new(
            BitString::all_of_length(depth).zip(values.iter().cloned()),
        )
        .unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(matches!(
            StepFunction::new([(bs("0"), rat(-1, 2)), (bs("1"), rat(0, 1))]),
            Err(LebesgueError::NegativeValue { .. })
        ));
        assert!(matches!(
            StepFunction::new([(bs("0"), rat(1, 1)), (bs("01"), rat(0, 1))]),
            Err(LebesgueError::OverlappingCells { .. })
        ));
        assert!(matches!(
            StepFunction::new([(bs("0"), rat(1, 1))]),
            Err(LebesgueError::NotAPartition { .. })
        ));
        assert!(matches!(
            StepFunction::new([(bs("0"), rat(1, 1)), (bs("0"), rat(2, 1)), (bs("1"), rat(0, 1))]),
            Err(LebesgueError::DuplicateCell { .. })
        ));
    }

    #[test]
    fn averages_by_hand() {
        let c = StepFunction::constant(rat(7, 3));
        for sigma in ["", "0", "10", "111"] {
            assert_eq!(cond_expectation(&c, &bs(sigma)), rat(7, 3));
        }
        let g = StepFunction::indicator(&bs("0"), rat(2, 1));
        assert_eq!(cond_expectation(&g, &bs("")), rat(1, 1));
        assert_eq!(cond_expectation(&g, &bs("0")), rat(2, 1));
        assert_eq!(cond_expectation(&g, &bs("1")), rat(0, 1));
        assert_eq!(g.integral(), rat(1, 1));
    }

    #[test]
    fn averages_are_fair_and_linear() {
        let g = StepFunction::indicator(&bs("0"), rat(2, 1));
        let h = StepFunction::indicator(&bs("11"), rat(1, 1));
        // cellwise sum on the common refinement
        let sum = from_leaves(2, &[rat(2, 1), rat(2, 1), rat(0, 1), rat(1, 1)]);
        for len in 0..=3 {
            for sigma in BitString::all_of_length(len) {
                let left = cond_expectation(&g, &sigma.child(false))
                    + cond_expectation(&g, &sigma.child(true));
                assert_eq!(cond_expectation(&g, &sigma) * rat(2, 1), left);
                assert_eq!(
                    cond_expectation(&sum, &sigma),
                    cond_expectation(&g, &sigma) + cond_expectation(&h, &sigma)
                );
            }
        }
    }

    #[test]
    fn staged_approximations_validate_monotonicity() {
        let ok = IntegralTestApprox::new(vec![
            StepFunction::constant(rat(0, 1)),
            StepFunction::indicator(&bs("1"), rat(1, 1)),
        ]);
        assert!(ok.is_ok());
        let bad = IntegralTestApprox::new(vec![
            StepFunction::constant(rat(1, 1)),
            StepFunction::indicator(&bs("1"), rat(1, 1)),
        ]);
        assert!(matches!(
            bad,
            Err(LebesgueError::StageDecrease { stage: 1, leaf }) if leaf == bs("0")
        ));
    }

    #[test]
    fn expectation_martingale_examples() {
        let constant = IntegralTestApprox::new(vec![StepFunction::constant(rat(3, 4))]).unwrap();
        let m = expectation_martingale(&constant);
        assert_eq!(m.final_stage(), &FiniteMartingale::constant(0, rat(3, 4)));

        let g = IntegralTestApprox::new(vec![
            StepFunction::constant(rat(0, 1)),
            StepFunction::indicator(&bs("1"), rat(1, 1)),
        ])
        .unwrap();
        let m = expectation_martingale(&g);
        assert_eq!(m.depth(), 1);
        assert_eq!(m.stage(1).value(&bs("")), &rat(1, 2));
        assert_eq!(m.stage(1).value(&bs("1")), &rat(1, 1));
        for report in m.check_fairness() {
            assert!(report.holds());
        }
    }

    #[test]
    fn expectation_martingale_stabilizes() {
        // stage 0 settles at depth 1, the second stage at depth 2
        let g = IntegralTestApprox::new(vec![
            StepFunction::indicator(&bs("1"), rat(1, 2)),
            from_leaves(2, &[rat(0, 1), rat(1, 4), rat(1, 2), rat(3, 2)]),
        ])
        .unwrap();
        assert_eq!(g.stabilization(0), 1);
        assert_eq!(g.stabilization(1), 2);
        let m = expectation_martingale(&g);
        for sigma in BitString::all_of_length(2) {
            assert_eq!(
                m.stage(0).value(&sigma),
                m.stage(0).value(&sigma.prefix(1))
            );
        }
    }

    /// Three stages: nothing, a spike on [10] lifting the average of
    /// [1] over 1/2, then a higher spike on [11].
    fn staged_spikes() -> IntegralTestApprox {
        IntegralTestApprox::new(vec![
            StepFunction::constant(rat(0, 1)),
            StepFunction::indicator(&bs("10"), rat(3, 2)),
            from_leaves(2, &[rat(0, 1), rat(0, 1), rat(3, 2), rat(2, 1)]),
        ])
        .unwrap()
    }

    #[test]
    fn build_h_stays_empty_without_crossings() {
        let zeros = IntegralTestApprox::new(vec![
            StepFunction::constant(rat(0, 1)),
            StepFunction::constant(rat(0, 1)),
        ])
        .unwrap();
        let h = build_h(&zeros, &rat(1, 3), &bs("0101"), 3).unwrap();
        assert!(h.pairs().next().is_none());
        assert_eq!(h.h, StepFunction::constant(rat(0, 1)));
        assert_eq!(h.path_value, rat(0, 1));
    }

    #[test]
    fn build_h_rejects_bad_inputs() {
        let zeros = IntegralTestApprox::new(vec![StepFunction::constant(rat(0, 1))]).unwrap();
        assert!(matches!(
            build_h(&zeros, &rat(0, 1), &bs("0"), 1),
            Err(LebesgueError::NonPositiveThreshold { .. })
        ));
        assert!(matches!(
            build_h(&zeros, &rat(1, 2), &bs("0"), 0),
            Err(LebesgueError::NoLevels)
        ));
    }

    #[test]
    fn build_h_single_crossing() {
        // one cell jumps above the threshold below the path
        let g = IntegralTestApprox::new(vec![
            StepFunction::constant(rat(0, 1)),
            StepFunction::indicator(&bs("11"), rat(2, 1)),
        ])
        .unwrap();
        let h = build_h(&g, &rat(1, 2), &bs("1111"), 1).unwrap();
        let pairs: Vec<&HPair> = h.pairs().collect();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].tau, bs("1"));
        assert_eq!(pairs[0].t, 1);
        assert_eq!(pairs[0].parent_stage, 0);
        assert_eq!(pairs[0].coefficient, rat(1, 2));
        assert_eq!(h.path_value, rat(1, 2));
    }

    #[test]
    fn build_h_two_levels_along_path() {
        let g = staged_spikes();
        let h = build_h(&g, &rat(1, 2), &bs("1111"), 2).unwrap();
        assert_eq!(h.levels[1].len(), 1);
        assert_eq!(h.levels[1][0].tau, bs("1"));
        assert_eq!(h.levels[1][0].t, 1);
        assert_eq!(h.levels[1][0].coefficient, rat(1, 2));
        // below [1] the cell [10] is already above q at stage 1 and is
        // excluded; [11] crosses at stage 2 with a clean coefficient
        assert_eq!(h.levels[2].len(), 1);
        assert_eq!(h.levels[2][0].tau, bs("11"));
        assert_eq!(h.levels[2][0].t, 2);
        assert_eq!(h.levels[2][0].parent_stage, 1);
        assert_eq!(h.levels[2][0].coefficient, rat(1, 2));
        assert_eq!(h.path_value, rat(1, 1));
        // assembled step function: 1/2 on [10], 1 on [11]
        assert_eq!(h.h.value_along(&bs("00")).unwrap(), rat(0, 1));
        assert_eq!(h.h.value_along(&bs("10")).unwrap(), rat(1, 2));
        assert_eq!(h.h.value_along(&bs("11")).unwrap(), rat(1, 1));

        // every on-path component is at least q minus the value there
        let cell_value = g.final_stage().value_along(&bs("1111")).unwrap();
        for pair in h.pairs() {
            if pair.tau.is_prefix_of(&bs("1111")) {
                assert!(pair.coefficient >= &rat(1, 2) - &cell_value);
            }
        }
    }

    #[test]
    fn levels_are_antichains_with_parents_above() {
        let g = staged_spikes();
        let h = build_h(&g, &rat(1, 2), &bs("1111"), 3).unwrap();
        for (n, level) in h.levels.iter().enumerate().skip(1) {
            for (i, a) in level.iter().enumerate() {
                assert!(
                    h.levels[n - 1].iter().any(|p| p.tau == a.parent
                        && p.t == a.parent_stage
                        && p.tau.is_proper_prefix_of(&a.tau)),
                    "pair without a parent in the previous level"
                );
                for b in &level[i + 1..] {
                    assert!(!a.tau.comparable(&b.tau), "level is not an antichain");
                }
            }
        }
    }

    #[test]
    fn telescoping_bound_on_the_spike_instance() {
        let g = staged_spikes();
        let h = build_h(&g, &rat(1, 2), &bs("1111"), 2).unwrap();
        let report = telescoping_bound_check(&h, &g);
        assert_eq!(report.lhs, rat(3, 8));
        assert_eq!(report.rhs, rat(7, 8));
        assert!(report.holds);
        assert_eq!(report.pairs.len(), 2);
        for bound in &report.pairs {
            assert!(bound.holds);
            assert!(bound.component_integral <= bound.allowance);
        }
    }

    #[test]
    fn telescoping_bound_trivial_case() {
        let zeros = IntegralTestApprox::new(vec![StepFunction::constant(rat(0, 1))]).unwrap();
        let h = build_h(&zeros, &rat(1, 1), &bs("0"), 1).unwrap();
        let report = telescoping_bound_check(&h, &zeros);
        assert_eq!(report.lhs, rat(0, 1));
        assert_eq!(report.rhs, rat(0, 1));
        assert!(report.holds);
    }

    #[test]
    fn telescoping_bound_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1eb);
        for _ in 0..40 {
            let depth = rng.gen_range(1..=3usize);
            let leaves = 1usize << depth;
            let stage_count = rng.gen_range(2..=4usize);
            let mut current = vec![rat(0, 1); leaves];
            let mut stages = vec![from_leaves(depth, &current)];
            for _ in 1..stage_count {
                for value in current.iter_mut() {
                    if rng.gen_bool(0.4) {
                        *value += rat(rng.gen_range(1..=4), 4);
                    }
                }
                stages.push(from_leaves(depth, &current));
            }
            let g = IntegralTestApprox::new(stages).unwrap();
            let q = rat(rng.gen_range(1..=6), 4);
            let z: BitString = BitString::from_bits(
                (0..8).map(|_| rng.gen_bool(0.5)).collect(),
            );
            let n = rng.gen_range(1..=4usize);
            let h = build_h(&g, &q, &z, n).unwrap();
            let report = telescoping_bound_check(&h, &g);
            assert!(report.holds, "telescoping failed for q={q}: {report:?}");
            for pair in h.pairs() {
                assert!(pair.coefficient >= rat(0, 1));
            }
        }
    }

    #[test]
    fn probe_traces() {
        let constant = IntegralTestApprox::new(vec![StepFunction::constant(rat(5, 8))]).unwrap();
        let trace = lebesgue_point_probe(&constant, &bs("0110"), 4).unwrap();
        assert!(trace.entries.iter().all(|(_, v)| v == &rat(5, 8)));
        assert_eq!(trace.discrepancy, rat(0, 1));

        let g = IntegralTestApprox::new(vec![StepFunction::indicator(&bs("1"), rat(1, 1))])
            .unwrap();
        let ones = lebesgue_point_probe(&g, &bs("1111"), 3).unwrap();
        assert_eq!(
            ones.entries,
            vec![(0, rat(1, 2)), (1, rat(1, 1)), (2, rat(1, 1)), (3, rat(1, 1))]
        );
        assert_eq!(ones.cell_value, rat(1, 1));
        assert_eq!(ones.discrepancy, rat(0, 1));

        let zeros = lebesgue_point_probe(&g, &bs("0000"), 2).unwrap();
        assert_eq!(zeros.entries, vec![(0, rat(1, 2)), (1, rat(0, 1)), (2, rat(0, 1))]);
        assert_eq!(zeros.cell_value, rat(0, 1));
        assert_eq!(zeros.discrepancy, rat(0, 1));

        assert!(matches!(
            lebesgue_point_probe(&g, &bs("11"), 3),
            Err(LebesgueError::PathTooShort { need: 3, got: 2 })
        ));
    }

    #[test]
    fn serde_round_trips() {
        let g = staged_spikes();
        let json = serde_json::to_string(&g).unwrap();
        let back: IntegralTestApprox = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);

        let f = StepFunction::indicator(&bs("10"), rat(3, 2));
        let json = serde_json::to_string(&f).unwrap();
        let back: StepFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(f, back);
    }
}
