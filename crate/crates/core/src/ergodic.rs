//! Computable measures on Cantor space, cylinder-level measure
//! preserving maps, ergodic averages of step functions, an exact
//! maximal-inequality checker, and bounded tests with their
//! stage-indexed measure allowances.

use crate::bits::BitString;
use crate::clopen::ClopenSet;
use crate::lebesgue::{IntegralTestApprox, StepFunction};
use crate::num::{rat, Rational};
use num_traits::Zero;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ErgodicError {
    #[error("cylinder table has {got} entries, expected {expected}")]
    WrongTableSize { expected: usize, got: usize },
    #[error("the whole space must carry mass 1, got {value}")]
    RootMass { value: Rational },
    #[error("cylinder {sigma:?} carries negative mass")]
    NegativeMass { sigma: BitString },
    #[error("mass of {sigma:?} differs from the sum over its children")]
    NotAdditive { sigma: BitString },
    #[error("rule table has {got} outputs, expected {expected} for its input depth")]
    WrongRuleCount { expected: usize, got: usize },
    #[error("prefix of length {got} is too short, {required} bits are required")]
    PrefixTooShort { required: usize, got: usize },
    #[error("threshold must be positive, got {r}")]
    NonPositiveThreshold { r: Rational },
    #[error("measure table of depth {got} is too shallow, depth {need} is needed")]
    MeasureTooShallow { need: usize, got: usize },
    #[error("{levels} levels but {betas} allowances")]
    LevelCountMismatch { levels: usize, betas: usize },
    #[error("allowance sequence decreases at level {level}")]
    BetaDecreasing { level: usize },
    #[error("limit allowance {beta} must lie between the level allowances and 1")]
    BetaOutOfRange { beta: Rational },
}

/// Exact cylinder masses down to a fixed depth, additive at every
/// split and carrying total mass 1.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct ComputableMeasure {
    depth: usize,
    /// Level order: root, then both length-1 cylinders, and so on.
    table: Vec<Rational>,
}

fn node_offset(sigma: &BitString) -> usize {
    (1 << sigma.len()) - 1 + sigma.to_index()
}

impl ComputableMeasure {
    pub fn new(depth: usize, table: Vec<Rational>) -> Result<Self, ErgodicError> {
        let expected = (1 << (depth + 1)) - 1;
        if table.len() != expected {
            return Err(ErgodicError::WrongTableSize { expected, got: table.len() });
        }
        for len in 0..=depth {
            for sigma in BitString::all_of_length(len) {
                if table[node_offset(&sigma)] < Rational::zero() {
                    return Err(ErgodicError::NegativeMass { sigma });
                }
            }
        }
        if table[0] != rat(1, 1) {
            return Err(ErgodicError::RootMass { value: table[0].clone() });
        }
        for len in 0..depth {
            for sigma in BitString::all_of_length(len) {
                let children = &table[node_offset(&sigma.child(false))]
                    + &table[node_offset(&sigma.child(true))];
                if table[node_offset(&sigma)] != children {
                    return Err(ErgodicError::NotAdditive { sigma });
                }
            }
        }
        Ok(Self { depth, table })
    }

    pub fn uniform(depth: usize) -> Self {
        let table = (0..=depth)
            .flat_map(|len| std::iter::repeat(crate::clopen::cylinder_measure(len)).take(1 << len))
            .collect();
        Self::new(depth, table).expect("halving masses are additive")
    }

    /// Builds the table upward from masses on the depth cells.
    pub fn from_leaves(depth: usize, leaves: Vec<Rational>) -> Result<Self, ErgodicError> {
        let expected = 1 << depth;
        if leaves.len() != expected {
            return Err(ErgodicError::WrongTableSize { expected, got: leaves.len() });
        }
        let mut levels = vec![leaves];
        while levels.last().unwrap().len() > 1 {
            let below = levels.last().unwrap();
            let above = below.chunks(2).map(|pair| &pair[0] + &pair[1]).collect();
            levels.push(above);
        }
        levels.reverse();
        Self::new(depth, levels.concat())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn mass(&self, sigma: &BitString) -> &Rational {
        assert!(sigma.len() <= self.depth, "cylinder below the table depth");
        &self.table[node_offset(sigma)]
    }

    pub fn of_clopen(&self, set: &ClopenSet) -> Result<Rational, ErgodicError> {
        if set.depth() > self.depth {
            return Err(ErgodicError::MeasureTooShallow { need: set.depth(), got: self.depth });
        }
        Ok(set.generators().iter().map(|g| self.mass(g).clone()).sum())
    }

    pub fn integral_of(&self, f: &StepFunction) -> Result<Rational, ErgodicError> {
        if f.depth() > self.depth {
            return Err(ErgodicError::MeasureTooShallow { need: f.depth(), got: self.depth });
        }
        Ok(f.cells().iter().map(|(c, v)| v * self.mass(c)).sum())
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct MeasureRepr {
    depth: usize,
    table: Vec<String>,
}

impl TryFrom<MeasureRepr> for ComputableMeasure {
    type Error = String;
    fn try_from(repr: MeasureRepr) -> Result<Self, String> {
        let table = repr
            .table
            .iter()
            .map(|v| crate::num::parse_rational(v).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, String>>()?;
        ComputableMeasure::new(repr.depth, table).map_err(|e| e.to_string())
    }
}

impl From<ComputableMeasure> for MeasureRepr {
    fn from(m: ComputableMeasure) -> Self {
        MeasureRepr {
            depth: m.depth,
            table: m.table.iter().map(Rational::to_string).collect(),
        }
    }
}

/// Rewrites the first `input_depth` bits of a string according to a
/// per-cell output, keeping the tail.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct RuleTable {
    input_depth: usize,
    outputs: Vec<BitString>,
}

impl RuleTable {
    pub fn new(input_depth: usize, outputs: Vec<BitString>) -> Result<Self, ErgodicError> {
        let expected = 1 << input_depth;
        if outputs.len() != expected {
            return Err(ErgodicError::WrongRuleCount { expected, got: outputs.len() });
        }
        Ok(Self { input_depth, outputs })
    }

    pub fn input_depth(&self) -> usize {
        self.input_depth
    }

    pub fn outputs(&self) -> &[BitString] {
        &self.outputs
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TableRepr {
    input_depth: usize,
    outputs: Vec<BitString>,
}

impl TryFrom<TableRepr> for RuleTable {
    type Error = String;
    fn try_from(repr: TableRepr) -> Result<Self, String> {
        RuleTable::new(repr.input_depth, repr.outputs).map_err(|e| e.to_string())
    }
}

impl From<RuleTable> for TableRepr {
    fn from(t: RuleTable) -> Self {
        TableRepr { input_depth: t.input_depth, outputs: t.outputs }
    }
}

/// A map on Cantor space expressed at the level of cylinders. The
/// shift drops the first bit; the odometer adds one with carry,
/// starting from the first bit; a rule table rewrites a fixed-depth
/// prefix.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellMap {
    Shift,
    Odometer,
    Table(RuleTable),
}

impl CellMap {
    /// How many bits of resolution one application can consume; the
    /// preimage of a length-n cylinder needs cylinders of length at
    /// most n plus this.
    pub fn cost(&self) -> usize {
        match self {
            CellMap::Shift => 1,
            CellMap::Odometer => 0,
            CellMap::Table(t) => t
                .outputs
                .iter()
                .map(|out| t.input_depth.saturating_sub(out.len()))
                .max()
                .unwrap_or(0),
        }
    }

    fn min_input(&self) -> usize {
        match self {
            CellMap::Shift => 1,
            CellMap::Odometer => 0,
            CellMap::Table(t) => t.input_depth,
        }
    }

    /// Image prefix: every path through `x` is sent into the returned
    /// cylinder.
    pub fn apply_prefix(&self, x: &BitString) -> Result<BitString, ErgodicError> {
        match self {
            CellMap::Shift => {
                if x.is_empty() {
                    return Err(ErgodicError::PrefixTooShort { required: 1, got: 0 });
                }
                Ok(BitString::from_bits(x.bits()[1..].to_vec()))
            }
            CellMap::Odometer => {
                let mut bits = x.bits().to_vec();
                for b in bits.iter_mut() {
                    let carry = *b;
                    *b = !*b;
                    if !carry {
                        break;
                    }
                }
                // a carry running off the known prefix leaves all
                // zeros, which is still the right image cylinder
                Ok(BitString::from_bits(bits))
            }
            CellMap::Table(t) => {
                if x.len() < t.input_depth {
                    return Err(ErgodicError::PrefixTooShort {
                        required: t.input_depth,
                        got: x.len(),
                    });
                }
                let cell = x.prefix(t.input_depth);
                let mut bits = t.outputs[cell.to_index()].bits().to_vec();
                bits.extend_from_slice(&x.bits()[t.input_depth..]);
                Ok(BitString::from_bits(bits))
            }
        }
    }

    /// The set of paths landing in `[sigma]`, as a clopen set.
    pub fn preimage(&self, sigma: &BitString) -> ClopenSet {
        match self {
            CellMap::Shift => {
                let extend = |bit: bool| {
                    let mut bits = vec![bit];
                    bits.extend_from_slice(sigma.bits());
                    BitString::from_bits(bits)
                };
                ClopenSet::from_raw([&extend(false), &extend(true)])
            }
            CellMap::Odometer => {
                let mut bits = sigma.bits().to_vec();
                match bits.iter().position(|&b| b) {
                    // subtracting one flips the leading zeros and the
                    // first one
                    Some(i) => {
                        for b in bits.iter_mut().take(i + 1) {
                            *b = !*b;
                        }
                    }
                    // the all-zeros cell is reached exactly from the
                    // all-ones cell by the overflowing carry
                    None => bits.iter_mut().for_each(|b| *b = true),
                }
                ClopenSet::cylinder(&BitString::from_bits(bits))
            }
            CellMap::Table(t) => {
                let mut parts = Vec::new();
                for (i, out) in t.outputs.iter().enumerate() {
                    let cell = BitString::from_index(t.input_depth, i);
                    if out.is_prefix_of(sigma) {
                        let mut bits = cell.bits().to_vec();
                        bits.extend_from_slice(&sigma.bits()[out.len()..]);
                        parts.push(BitString::from_bits(bits));
                    } else if sigma.is_prefix_of(out) {
                        parts.push(cell);
                    }
                }
                ClopenSet::from_raw(&parts)
            }
        }
    }
}

/// Shortest prefix on which all `n` evaluation points of the average
/// are determined, using the worst case consumption per application.
fn required_length(f_depth: usize, map: &CellMap, n: usize) -> usize {
    let cost = map.cost();
    let mut required = f_depth + (n - 1) * cost;
    if n >= 2 {
        required = required.max(map.min_input() + (n - 2) * cost);
    }
    required
}

/// The average of `f` over the first `n` points of the orbit of `x`,
/// exact; `x` must be long enough to determine every evaluation.
pub fn ergodic_average(
    f: &StepFunction,
    map: &CellMap,
    x: &BitString,
    n: usize,
) -> Result<Rational, ErgodicError> {
    assert!(n >= 1, "an average needs at least one orbit point");
    let required = required_length(f.depth(), map, n);
    if x.len() < required {
        return Err(ErgodicError::PrefixTooShort { required, got: x.len() });
    }
    let mut y = x.clone();
    let mut sum = Rational::zero();
    for i in 0..n {
        sum += f.value_along(&y).expect("length was checked upfront");
        if i + 1 < n {
            y = map.apply_prefix(&y).expect("length was checked upfront");
        }
    }
    Ok(sum / rat(n as i64, 1))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaximalReport {
    /// Exact mass of the depth-`d` cells where some average up to the
    /// horizon exceeds the threshold.
    pub measured: Rational,
    /// The integral of `f` divided by the threshold.
    pub bound: Rational,
    pub holds: bool,
}

/// Checks the maximal-average inequality by full enumeration of the
/// depth-`d` cells. The enumerated set only grows with the horizon, so
/// a passing verdict is conservative.
pub fn maximal_ergodic_check(
    f: &StepFunction,
    map: &CellMap,
    mu: &ComputableMeasure,
    r: &Rational,
    horizon: usize,
    depth: usize,
) -> Result<MaximalReport, ErgodicError> {
    assert!(horizon >= 1, "the check needs at least one average");
    if *r <= Rational::zero() {
        return Err(ErgodicError::NonPositiveThreshold { r: r.clone() });
    }
    let required = required_length(f.depth(), map, horizon);
    if depth < required {
        return Err(ErgodicError::PrefixTooShort { required, got: depth });
    }
    if mu.depth() < depth {
        return Err(ErgodicError::MeasureTooShallow { need: depth, got: mu.depth() });
    }
    let mut measured = Rational::zero();
    for cell in BitString::all_of_length(depth) {
        let exceeds = (1..=horizon).any(|n| {
            &ergodic_average(f, map, &cell, n).expect("depth was checked upfront") > r
        });
        if exceeds {
            measured += mu.mass(&cell);
        }
    }
    let bound = mu.integral_of(f)? / r;
    let holds = measured <= bound;
    Ok(MaximalReport { measured, bound, holds })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapReport {
    pub stage: usize,
    /// Depth-`d` cells where some average of the final-minus-stage
    /// difference exceeds the gap.
    pub set: ClopenSet,
    pub measure: Rational,
    /// The integral of the difference divided by the gap.
    pub bound: Rational,
    pub holds: bool,
}

/// The stage-`t` set of the divergence argument: cells where the
/// averages of what the approximation still misses at stage `t` jump
/// by more than the gap `b - a`, with its maximal-inequality bound.
pub fn step_gap_test(
    g: &IntegralTestApprox,
    map: &CellMap,
    mu: &ComputableMeasure,
    a: &Rational,
    b: &Rational,
    stage: usize,
    horizon: usize,
    depth: usize,
) -> Result<GapReport, ErgodicError> {
    assert!(a < b, "the gap needs a < b");
    let final_stage = g.final_stage();
    let stage_fn = g.stage(stage);
    let f_depth = final_stage.depth().max(stage_fn.depth());
    let required = required_length(f_depth, map, horizon);
    if depth < required {
        return Err(ErgodicError::PrefixTooShort { required, got: depth });
    }
    if mu.depth() < depth {
        return Err(ErgodicError::MeasureTooShallow { need: depth, got: mu.depth() });
    }
    let gap = b - a;
    let mut cells = Vec::new();
    for cell in BitString::all_of_length(depth) {
        let exceeds = (1..=horizon).any(|n| {
            let above = ergodic_average(final_stage, map, &cell, n)
                .expect("depth was checked upfront");
            let below = ergodic_average(stage_fn, map, &cell, n)
                .expect("depth was checked upfront");
            above - below > gap
        });
        if exceeds {
            cells.push(cell);
        }
    }
    let set = ClopenSet::from_raw(&cells);
    let measure = mu.of_clopen(&set)?;
    let bound = (mu.integral_of(final_stage)? - mu.integral_of(stage_fn)?) / gap;
    let holds = measure <= bound;
    Ok(GapReport { stage, set, measure, bound, holds })
}

/// Nested stages with nondecreasing allowances: stage `n` may carry
/// mass at most `beta - beta_n`, where `beta` bounds the whole
/// allowance sequence.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "BoundedTestRepr", into = "BoundedTestRepr")]
pub struct BoundedTest {
    levels: Vec<ClopenSet>,
    betas: Vec<Rational>,
    beta: Rational,
}

impl BoundedTest {
    pub fn new(
        levels: Vec<ClopenSet>,
        betas: Vec<Rational>,
        beta: Rational,
    ) -> Result<Self, ErgodicError> {
        if levels.len() != betas.len() {
            return Err(ErgodicError::LevelCountMismatch {
                levels: levels.len(),
                betas: betas.len(),
            });
        }
        for i in 1..betas.len() {
            if betas[i] < betas[i - 1] {
                return Err(ErgodicError::BetaDecreasing { level: i });
            }
        }
        let max_beta = betas.iter().max().cloned().unwrap_or_else(Rational::zero);
        if beta < max_beta || beta > rat(1, 1) {
            return Err(ErgodicError::BetaOutOfRange { beta });
        }
        Ok(Self { levels, betas, beta })
    }

    pub fn levels(&self) -> &[ClopenSet] {
        &self.levels
    }

    pub fn betas(&self) -> &[Rational] {
        &self.betas
    }

    pub fn beta(&self) -> &Rational {
        &self.beta
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct BoundedTestRepr {
    levels: Vec<ClopenSet>,
    betas: Vec<String>,
    beta: String,
}

impl TryFrom<BoundedTestRepr> for BoundedTest {
    type Error = String;
    fn try_from(repr: BoundedTestRepr) -> Result<Self, String> {
        let betas = repr
            .betas
            .iter()
            .map(|v| crate::num::parse_rational(v).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, String>>()?;
        let beta = crate::num::parse_rational(&repr.beta).map_err(|e| e.to_string())?;
        BoundedTest::new(repr.levels, betas, beta).map_err(|e| e.to_string())
    }
}

impl From<BoundedTest> for BoundedTestRepr {
    fn from(t: BoundedTest) -> Self {
        BoundedTestRepr {
            levels: t.levels,
            betas: t.betas.iter().map(Rational::to_string).collect(),
            beta: t.beta.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelCheck {
    pub level: usize,
    pub measure: Rational,
    pub allowance: Rational,
    pub bound_holds: bool,
    pub nested: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundedTestReport {
    pub levels: Vec<LevelCheck>,
    /// How many stages contain the supplied path; a finite surrogate
    /// of membership in the intersection.
    pub hits: usize,
    pub first_violation: Option<usize>,
    pub holds: bool,
}

/// Verifies nestedness and the per-level measure allowance exactly,
/// and counts how many stages the supplied path lands in.
pub fn bounded_test_verify(
    test: &BoundedTest,
    mu: &ComputableMeasure,
    z: &BitString,
) -> Result<BoundedTestReport, ErgodicError> {
    let resolution = test.levels.iter().map(ClopenSet::depth).max().unwrap_or(0);
    if z.len() < resolution {
        return Err(ErgodicError::PrefixTooShort { required: resolution, got: z.len() });
    }
    let mut levels = Vec::with_capacity(test.levels.len());
    let mut hits = 0;
    for (n, set) in test.levels.iter().enumerate() {
        let measure = mu.of_clopen(set)?;
        let allowance = &test.beta - &test.betas[n];
        let bound_holds = measure <= allowance;
        let nested = n == 0 || set.is_subset_of(&test.levels[n - 1]);
        if set.covers(z) {
            hits += 1;
        }
        levels.push(LevelCheck { level: n, measure, allowance, bound_holds, nested });
    }
    let first_violation = levels
        .iter()
        .find(|c| !c.bound_holds || !c.nested)
        .map(|c| c.level);
    let holds = first_violation.is_none();
    Ok(BoundedTestReport { levels, hits, first_violation, holds })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreservationViolation {
    pub sigma: BitString,
    pub preimage_mass: Rational,
    pub cell_mass: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreservationReport {
    pub cost: usize,
    /// Cylinders up to this length were compared with their preimages.
    pub checked_depth: usize,
    pub cells_checked: usize,
    pub first_violation: Option<PreservationViolation>,
    pub holds: bool,
}

/// Exact comparison of every cylinder's mass with the mass of its
/// preimage, down to the depth the map's cost allows.
pub fn preservation_check(
    map: &CellMap,
    mu: &ComputableMeasure,
    depth: usize,
) -> Result<PreservationReport, ErgodicError> {
    if mu.depth() < depth {
        return Err(ErgodicError::MeasureTooShallow { need: depth, got: mu.depth() });
    }
    let cost = map.cost();
    let checked_depth = depth.saturating_sub(cost);
    let mut cells_checked = 0;
    let mut first_violation = None;
    'scan: for len in 0..=checked_depth {
        for sigma in BitString::all_of_length(len) {
            cells_checked += 1;
            let preimage_mass = mu.of_clopen(&map.preimage(&sigma))?;
            let cell_mass = mu.mass(&sigma).clone();
            if preimage_mass != cell_mass {
                first_violation = Some(PreservationViolation { sigma, preimage_mass, cell_mass });
                break 'scan;
            }
        }
    }
    Ok(PreservationReport {
        cost,
        checked_depth,
        cells_checked,
        holds: first_violation.is_none(),
        first_violation,
    })
}
