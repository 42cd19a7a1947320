//! Nondecreasing functions on the unit interval given by staged,
//! exactly-stored increments on a fine dyadic grid, together with the
//! slope calculus built on them: slope queries over arbitrary rational
//! intervals, the slope view as a staged martingale and its inverse,
//! pseudo-derivative envelopes, hole finding for the upper-derivative
//! argument, and the two-grid analysis for the lower one.
//!
//! Values between grid breakpoints follow the piecewise-linear
//! interpolant of the stored increments; every operation that reports
//! slopes states this convention. Functions extend to `[-1, 2]` as
//! constants on either side, so shifted-grid endpoints always resolve.

use crate::bits::BitString;
use crate::clopen::{cylinder_measure, ClopenSet};
use crate::grid::{DyadicInterval, Grid};
use crate::martingale::{FiniteMartingale, StagedMartingale};
use crate::num::{DyadicRational, Rational};
use crate::pi01::Pi01Approx;
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

/// Interpolation convention used whenever an endpoint falls between
/// stored breakpoints; quoted in every slope-bearing report.
pub const INTERPOLATION: &str = "piecewise-linear between finest-grid breakpoints";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MonotoneError {
    #[error("a staged function needs at least one stage")]
    NoStages,
    #[error("stage {stage} has {got} increments, expected {want}")]
    ShapeMismatch { stage: usize, got: usize, want: usize },
    #[error("negative increment at stage {stage}, cell {cell}")]
    NegativeIncrement { stage: usize, cell: usize },
    #[error("increment at stage {stage}, cell {cell} is below the previous stage")]
    StageDecrease { stage: usize, cell: usize },
    #[error("slope endpoints coincide at {a}")]
    DegenerateInterval { a: Rational },
    #[error("interval endpoints out of order: {a} > {b}")]
    ReversedInterval { a: Rational, b: Rational },
    #[error("endpoint {value} outside the extended domain [-1, 2]")]
    OutOfDomain { value: Rational },
    #[error("point {z} outside the unit interval")]
    OutOfUnit { z: Rational },
    #[error("scale {h} is finer than the stored grid cell {finest}")]
    ScaleTooFine { h: Rational, finest: Rational },
    #[error("martingale stage {stage} is not fair; cannot read it as a measure")]
    Unfair { stage: usize },
    #[error("martingale value {value} is not dyadic; increments cannot store it")]
    NonDyadicValue { value: Rational },
    #[error("slope threshold must be positive, got {p}")]
    NonPositiveThreshold { p: Rational },
    #[error("interval of length {len} is too wide for the dyadic normalization")]
    IntervalTooWide { len: Rational },
    #[error("point {z} is not inside the given interval")]
    ZNotInInterval { z: Rational },
    #[error("fineness parameter k must be at least 1, got {k}")]
    InvalidHoleScale { k: u32 },
    #[error("interval sits at scale n={n}, below the required n* + 3 = {required}")]
    ScaleTooCoarse { n: usize, required: usize },
    #[error("analysis needs grid depth {need}, function stores depth {depth}")]
    DepthTooShallow { need: usize, depth: usize },
    #[error("thresholds must satisfy q < u < v, got q={q}, u={u}, v={v}")]
    InvalidThresholds { q: Rational, u: Rational, v: Rational },
    #[error("coarse walk on the {grid:?} grid has slope {slope}, not below q={q}")]
    CoarseSlopeNotBelow { grid: Grid, slope: Rational, q: Rational },
    #[error("containing cell has slope {value}, below the promised floor u={u}")]
    StartSlopeBelowFloor { value: Rational, u: Rational },
    #[error("no direction under {eta} rises above v={v}; best was {best}")]
    BalanceNotFound { eta: BitString, best: Rational, v: Rational },
    #[error("shifted cell index for {z} falls outside the unit square of strings")]
    ShiftOutOfRange { z: Rational },
    #[error("neither grid contains the witnesses in a single cell; this contradicts \
             the one-third separation bound")]
    NeitherCase,
    #[error("internal check failed: {detail}")]
    InternalCheck { detail: String },
}

/// `2^{-level}` as a rational interval width.
fn dyadic_width(level: usize) -> Rational {
    cylinder_measure(level)
}

/// A nondecreasing function `f` with `f(0) = 0`, stored as stagewise
/// nondecreasing cell increments on the level-`depth` standard grid.
/// Coarser increments are derived by summation, so additivity is
/// structural. Outside `[0, 1]` the function continues flat.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "IntervalCeRepr", into = "IntervalCeRepr")]
pub struct IntervalCEFunction {
    depth: usize,
    increments: Vec<Vec<DyadicRational>>,
    prefix: Vec<Vec<Rational>>,
}

impl IntervalCEFunction {
    pub fn new(
        depth: usize,
        increments: Vec<Vec<DyadicRational>>,
    ) -> Result<Self, MonotoneError> {
        if increments.is_empty() {
            return Err(MonotoneError::NoStages);
        }
        let want = 1usize << depth;
        for (s, stage) in increments.iter().enumerate() {
            if stage.len() != want {
                return Err(MonotoneError::ShapeMismatch { stage: s, got: stage.len(), want });
            }
            for (cell, inc) in stage.iter().enumerate() {
                if inc.is_negative() {
                    return Err(MonotoneError::NegativeIncrement { stage: s, cell });
                }
                if s > 0 && inc < &increments[s - 1][cell] {
                    return Err(MonotoneError::StageDecrease { stage: s, cell });
                }
            }
        }
        let prefix = increments
            .iter()
            .map(|stage| {
                let mut sums = Vec::with_capacity(want + 1);
                let mut acc = Rational::zero();
                sums.push(acc.clone());
                for inc in stage {
                    acc += inc.to_rational();
                    sums.push(acc.clone());
                }
                sums
            })
            .collect();
        Ok(Self { depth, increments, prefix })
    }

    /// Single-stage function with one unit of mass spread uniformly:
    /// the identity.
    pub fn identity(depth: usize) -> Self {
        let cell = DyadicRational::pow2_neg(depth as u32);
        Self::new(depth, vec![vec![cell; 1 << depth]]).unwrap()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn stage_count(&self) -> usize {
        self.increments.len()
    }

    pub fn increments(&self, s: usize) -> &[DyadicRational] {
        &self.increments[s.min(self.increments.len() - 1)]
    }

    fn sums(&self, s: usize) -> &[Rational] {
        &self.prefix[s.min(self.prefix.len() - 1)]
    }

    /// `f_s(1) - f_s(0)`, the total mass at stage s.
    pub fn total(&self, s: usize) -> Rational {
        self.sums(s).last().unwrap().clone()
    }

    /// Value of the stage-s interpolant at any rational of `[-1, 2]`,
    /// flat outside the unit interval.
    pub fn value(&self, s: usize, x: &Rational) -> Rational {
        if x <= &Rational::zero() {
            return Rational::zero();
        }
        if x >= &Rational::one() {
            return self.total(s);
        }
        let scaled = x * Rational::from_integer(BigInt::one() << self.depth);
        let cell = scaled.floor().to_integer();
        let i = cell.to_usize().expect("cell index fits after the range check");
        let fraction = scaled - Rational::from_integer(cell);
        let sums = self.sums(s);
        &sums[i] + fraction * (&sums[i + 1] - &sums[i])
    }

    /// Exact rise `f_s(b) - f_s(a)` over the cells a basic string spans.
    pub fn rise_over(&self, s: usize, sigma: &BitString) -> Rational {
        assert!(sigma.len() <= self.depth, "string below the stored grid");
        let span = 1usize << (self.depth - sigma.len());
        let lo = sigma.to_index() * span;
        let sums = self.sums(s);
        &sums[lo + span] - &sums[lo]
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct IntervalCeRepr {
    depth: usize,
    stages: Vec<Vec<String>>,
}

impl TryFrom<IntervalCeRepr> for IntervalCEFunction {
    type Error = String;
    fn try_from(repr: IntervalCeRepr) -> Result<Self, String> {
        let increments = repr
            .stages
            .iter()
            .map(|stage| {
                stage.iter().map(|s| s.parse().map_err(|e| format!("{e}"))).collect()
            })
            .collect::<Result<Vec<Vec<DyadicRational>>, String>>()?;
        IntervalCEFunction::new(repr.depth, increments).map_err(|e| e.to_string())
    }
}

impl From<IntervalCEFunction> for IntervalCeRepr {
    fn from(f: IntervalCEFunction) -> Self {
        IntervalCeRepr {
            depth: f.depth,
            stages: f
                .increments
                .iter()
                .map(|stage| stage.iter().map(|d| d.to_string()).collect())
                .collect(),
        }
    }
}

/// A validated rational interval within the extended domain `[-1, 2]`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "SlopeQueryRepr", into = "SlopeQueryRepr")]
pub struct SlopeQuery {
    a: Rational,
    b: Rational,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SlopeQueryRepr {
    a: String,
    b: String,
}

impl TryFrom<SlopeQueryRepr> for SlopeQuery {
    type Error = String;
    fn try_from(repr: SlopeQueryRepr) -> Result<Self, String> {
        let a = crate::num::parse_rational(&repr.a).map_err(|e| e.to_string())?;
        let b = crate::num::parse_rational(&repr.b).map_err(|e| e.to_string())?;
        SlopeQuery::new(a, b).map_err(|e| e.to_string())
    }
}

impl From<SlopeQuery> for SlopeQueryRepr {
    fn from(q: SlopeQuery) -> Self {
        SlopeQueryRepr { a: q.a.to_string(), b: q.b.to_string() }
    }
}

impl SlopeQuery {
    pub fn new(a: Rational, b: Rational) -> Result<Self, MonotoneError> {
        if a == b {
            return Err(MonotoneError::DegenerateInterval { a });
        }
        if a > b {
            return Err(MonotoneError::ReversedInterval { a, b });
        }
        for value in [&a, &b] {
            if *value < Rational::from_integer((-1).into())
                || *value > Rational::from_integer(2.into())
            {
                return Err(MonotoneError::OutOfDomain { value: value.clone() });
            }
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Rational {
        &self.a
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn length(&self) -> Rational {
        &self.b - &self.a
    }

    pub fn contains(&self, z: &Rational) -> bool {
        &self.a <= z && z <= &self.b
    }
}

/// `(f_s(b) - f_s(a)) / (b - a)`, exact under the interpolation
/// convention.
pub fn slope(f: &IntervalCEFunction, q: &SlopeQuery, s: usize) -> Rational {
    (f.value(s, q.b()) - f.value(s, q.a())) / q.length()
}

fn slope_between(f: &IntervalCEFunction, s: usize, a: &Rational, b: &Rational) -> Rational {
    (f.value(s, b) - f.value(s, a)) / (b - a)
}

/// The staged martingale `sigma -> slope of f_s over the cell [sigma]`.
/// Fairness is additivity of increments; stage growth is theirs.
pub fn slope_martingale(f: &IntervalCEFunction) -> StagedMartingale {
    let depth = f.depth();
    let stages = (0..f.stage_count())
        .map(|s| {
            FiniteMartingale::from_fn(depth, |sigma| {
                f.rise_over(s, sigma) * Rational::from_integer(BigInt::one() << sigma.len())
            })
            .expect("rises of a nondecreasing function are nonnegative")
        })
        .collect();
    StagedMartingale::new(stages).expect("stagewise growth carries over to slopes")
}

/// Reads a fairness-valid staged martingale as a staged measure and
/// returns its distribution function: the increment over each finest
/// cell is the cell's share `2^{-depth} M_s(sigma)`. Values must be
/// dyadic to be stored exactly.
pub fn cdf_from_martingale(m: &StagedMartingale) -> Result<IntervalCEFunction, MonotoneError> {
    for (s, report) in m.check_fairness().iter().enumerate() {
        if !report.holds() {
            return Err(MonotoneError::Unfair { stage: s });
        }
    }
    let depth = m.depth();
    let mut increments = Vec::with_capacity(m.stages().len());
    for stage in m.stages() {
        let mut cells = Vec::with_capacity(1 << depth);
        for sigma in BitString::all_of_length(depth) {
            let value = stage.value(&sigma);
            let Ok(dyadic) = DyadicRational::try_from_rational(value) else {
                return Err(MonotoneError::NonDyadicValue { value: value.clone() });
            };
            cells.push(dyadic.times_pow2(-(depth as i64)));
        }
        increments.push(cells);
    }
    IntervalCEFunction::new(depth, increments)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EstimateVariant {
    /// All intervals with endpoints on the selected finest grids.
    Full,
    /// Only basic cells of the selected grids.
    Dyadic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GridChoice {
    Standard,
    Shifted,
    Both,
}

impl GridChoice {
    fn grids(self) -> &'static [Grid] {
        match self {
            GridChoice::Standard => &[Grid::Standard],
            GridChoice::Shifted => &[Grid::Shifted],
            GridChoice::Both => &[Grid::Standard, Grid::Shifted],
        }
    }
}

/// Min and max slope over the admissible intervals around a point at
/// one scale; shrinking the scale shrinks this envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivativeEstimate {
    pub z: Rational,
    pub h: Rational,
    pub variant: EstimateVariant,
    pub grids: GridChoice,
    pub min_slope: Rational,
    pub max_slope: Rational,
    /// Number of intervals examined.
    pub examined: usize,
    pub interpolation: &'static str,
}

/// Envelope of slopes over grid-expressible intervals `[a, b]` with
/// `a <= z <= b` and `0 < b - a <= h`, at the final stage.
pub fn pseudo_derivative_estimate(
    f: &IntervalCEFunction,
    z: &Rational,
    h: &Rational,
    variant: EstimateVariant,
    grids: GridChoice,
) -> Result<DerivativeEstimate, MonotoneError> {
    if z < &Rational::zero() || z > &Rational::one() {
        return Err(MonotoneError::OutOfUnit { z: z.clone() });
    }
    let finest = dyadic_width(f.depth());
    if h < &finest {
        return Err(MonotoneError::ScaleTooFine { h: h.clone(), finest });
    }
    let stage = f.stage_count() - 1;
    let mut best: Option<(Rational, Rational)> = None;
    let mut examined = 0usize;
    let mut consider = |a: &Rational, b: &Rational| {
        let s = slope_between(f, stage, a, b);
        examined += 1;
        best = Some(match best.take() {
            None => (s.clone(), s),
            Some((lo, hi)) => (lo.min(s.clone()), hi.max(s)),
        });
    };
    let lo_domain = Rational::from_integer((-1).into());
    let hi_domain = Rational::from_integer(2.into());
    match variant {
        EstimateVariant::Full => {
            for grid in grids.grids() {
                let offset = grid.offset();
                // grid points g = i*2^-depth + offset within [z-h, z]
                // on the left and [z, z+h] on the right
                let scale = Rational::from_integer(BigInt::one() << f.depth());
                let left_lo = ((z - h - &offset) * &scale).ceil().to_integer();
                let left_hi = ((z - &offset) * &scale).floor().to_integer();
                let right_lo = ((z - &offset) * &scale).ceil().to_integer();
                let right_hi = ((z + h - &offset) * &scale).floor().to_integer();
                let point = |i: &BigInt| {
                    Rational::new(i.clone(), BigInt::one() << f.depth()) + &offset
                };
                let mut i = left_lo.clone();
                while i <= left_hi {
                    let a = point(&i);
                    if a >= lo_domain {
                        let mut j = right_lo.clone();
                        while j <= right_hi {
                            let b = point(&j);
                            if b <= hi_domain && b > a && &b - &a <= *h {
                                consider(&a, &b);
                            }
                            j += BigInt::one();
                        }
                    }
                    i += BigInt::one();
                }
            }
        }
        EstimateVariant::Dyadic => {
            for grid in grids.grids() {
                let offset = grid.offset();
                for level in 0..=f.depth() {
                    if dyadic_width(level) > *h {
                        continue;
                    }
                    let scaled = (z - &offset) * Rational::from_integer(BigInt::one() << level);
                    let base = scaled.floor().to_integer();
                    let mut indices = vec![base.clone()];
                    if scaled.is_integer() {
                        indices.push(base - 1);
                    }
                    for i in indices {
                        let a = Rational::new(i.clone(), BigInt::one() << level) + &offset;
                        let b = &a + dyadic_width(level);
                        if a >= lo_domain && b <= hi_domain {
                            consider(&a, &b);
                        }
                    }
                }
            }
        }
    }
    let Some((min_slope, max_slope)) = best else {
        return Err(MonotoneError::ScaleTooFine { h: h.clone(), finest: dyadic_width(f.depth()) });
    };
    Ok(DerivativeEstimate {
        z: z.clone(),
        h: h.clone(),
        variant,
        grids,
        min_slope,
        max_slope,
        examined,
        interpolation: INTERPOLATION,
    })
}

/// Dyadic normalization of an interval length: the n with
/// `2^{-n+1} > len >= 2^{-n}`.
fn length_level(len: &Rational) -> Result<usize, MonotoneError> {
    if *len > Rational::one() {
        return Err(MonotoneError::IntervalTooWide { len: len.clone() });
    }
    let mut n = 0usize;
    while dyadic_width(n) > *len {
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoleReport {
    /// Scale of the source interval: `2^{-n+1} > |I| >= 2^{-n}`.
    pub n: usize,
    /// Index of the returned cell along the walk.
    pub u: usize,
    /// Number of walk cells covering the interval.
    pub r: usize,
    pub cell_lo: Rational,
    pub cell_hi: Rational,
    pub slope: Rational,
    pub interpolation: &'static str,
}

/// Walks the interval in steps of `2^{-n-k}` and returns the first cell
/// whose slope exceeds p, provided the interval's slope clears the
/// averaging margin `p (1 + 2^{-k+1})`; otherwise nothing is promised
/// and nothing is returned. The cell lies within `2^{-n+2}` of every
/// point of the interval.
pub fn upper_hole_finder(
    f: &IntervalCEFunction,
    p: &Rational,
    k: u32,
    interval: &SlopeQuery,
    stage: usize,
) -> Result<Option<HoleReport>, MonotoneError> {
    if *p <= Rational::zero() {
        return Err(MonotoneError::NonPositiveThreshold { p: p.clone() });
    }
    if k == 0 {
        return Err(MonotoneError::InvalidHoleScale { k });
    }
    let n = length_level(&interval.length())?;
    let margin = p * (Rational::one() + dyadic_width(k as usize) * Rational::from_integer(2.into()));
    if margin >= slope(f, interval, stage) {
        return Ok(None);
    }
    let step = dyadic_width(n + k as usize);
    // greatest multiple of the step strictly below the interval
    let scaled = interval.a() / &step;
    let ell = if scaled.is_integer() {
        scaled.to_integer() - BigInt::one()
    } else {
        scaled.floor().to_integer()
    };
    let a0 = Rational::from_integer(ell) * &step;
    let r = ((interval.b() - &a0) / &step).ceil().to_integer();
    let r = r.to_usize().ok_or_else(|| MonotoneError::InternalCheck {
        detail: "walk length does not fit".into(),
    })?;
    for u in 0..r {
        let lo = &a0 + Rational::from_integer(BigInt::from(u)) * &step;
        let hi = &lo + &step;
        let s = slope_between(f, stage, &lo, &hi);
        if s > *p {
            let reach = dyadic_width(n) * Rational::from_integer(4.into());
            if lo < interval.b() - &reach || hi > interval.a() + &reach {
                return Err(MonotoneError::InternalCheck {
                    detail: format!("hole cell [{lo}, {hi}] strays out of reach of the interval"),
                });
            }
            return Ok(Some(HoleReport {
                n,
                u,
                r,
                cell_lo: lo,
                cell_hi: hi,
                slope: s,
                interpolation: INTERPOLATION,
            }));
        }
    }
    Err(MonotoneError::InternalCheck {
        detail: "no cell exceeded p although the average does".into(),
    })
}

/// Index w of a single level cell `offset + [w 2^{-level}, (w+1) 2^{-level}]`
/// containing every given point, if one exists.
fn single_cell_index(
    points: &[&Rational],
    level: usize,
    offset: &Rational,
) -> Option<BigInt> {
    let width = dyadic_width(level);
    let scaled: Vec<Rational> = points.iter().map(|p| (*p - offset) / &width).collect();
    let min = scaled.iter().min().unwrap();
    let max = scaled.iter().max().unwrap();
    let w = min.floor().to_integer();
    (*max <= Rational::from_integer(&w + BigInt::one())).then_some(w)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoGridReport {
    /// Which grid's cell captured the point and the witness.
    pub case: Grid,
    pub n: usize,
    pub k: u32,
    /// The capturing cell at level n-3 on the case's grid.
    pub cell: DyadicInterval,
    /// The walk cell with slope below q.
    pub witness_lo: Rational,
    pub witness_hi: Rational,
    pub witness_slope: Rational,
    /// Level-(n-3) string naming the capturing cell.
    pub eta: BitString,
    /// Direction of the witness under eta, length k+3; slope below q.
    pub alpha: BitString,
    pub alpha_value: Rational,
    /// Balancing direction, length k+3; slope above v.
    pub beta: BitString,
    pub beta_value: Rational,
    /// Slope of the capturing cell, at least u.
    pub eta_value: Rational,
    pub interpolation: &'static str,
}

/// Runs the standard and the one-third-shifted walk over an interval of
/// small slope, locates a cell below q on each, and decides which grid
/// captures the point together with its witness cell inside a single
/// level-(n-3) cell. The separation bound for the two grids guarantees
/// one of the two cases. The capturing cell must carry slope at least
/// u, and some sibling direction must rise above v to balance the dip.
/// Final-stage values throughout.
pub fn lower_two_grid_analysis(
    f: &IntervalCEFunction,
    interval: &SlopeQuery,
    q: &Rational,
    u: &Rational,
    v: &Rational,
    k: u32,
    n_star: usize,
    z: &Rational,
) -> Result<TwoGridReport, MonotoneError> {
    if !(q < u && u < v) {
        return Err(MonotoneError::InvalidThresholds {
            q: q.clone(),
            u: u.clone(),
            v: v.clone(),
        });
    }
    if k == 0 {
        return Err(MonotoneError::InvalidHoleScale { k });
    }
    if !interval.contains(z) {
        return Err(MonotoneError::ZNotInInterval { z: z.clone() });
    }
    let n = length_level(&interval.length())?;
    if n < n_star + 3 {
        return Err(MonotoneError::ScaleTooCoarse { n, required: n_star + 3 });
    }
    let need = n + k as usize;
    if need > f.depth() {
        return Err(MonotoneError::DepthTooShallow { need, depth: f.depth() });
    }
    let stage = f.stage_count() - 1;
    let step = dyadic_width(need);

    // least grid point at or above the interval start, then the longest
    // run of cells staying inside
    let walk = |offset: &Rational| -> Result<(Rational, usize), MonotoneError> {
        let start = ((interval.a() - offset) / &step).ceil().to_integer();
        let first = Rational::from_integer(start) * &step + offset;
        let count = ((interval.b() - &first) / &step).floor().to_integer();
        match count.to_usize().filter(|&c| c >= 1) {
            Some(count) => Ok((first, count)),
            None => Err(MonotoneError::InternalCheck {
                detail: "interval does not span a full walk step".into(),
            }),
        }
    };

    let mut cases = Vec::new();
    for grid in [Grid::Standard, Grid::Shifted] {
        let offset = grid.offset();
        let (first, count) = walk(&offset)?;
        let last = &first + Rational::from_integer(BigInt::from(count)) * &step;
        let coarse = slope_between(f, stage, &first, &last);
        if coarse >= *q {
            return Err(MonotoneError::CoarseSlopeNotBelow {
                grid,
                slope: coarse,
                q: q.clone(),
            });
        }
        let hit = (0..count).find(|&i| {
            let lo = &first + Rational::from_integer(BigInt::from(i)) * &step;
            let hi = &lo + &step;
            slope_between(f, stage, &lo, &hi) < *q
        });
        let Some(hit) = hit else {
            return Err(MonotoneError::InternalCheck {
                detail: format!(
                    "{grid:?} walk averages below q but no single cell does"
                ),
            });
        };
        let lo = &first + Rational::from_integer(BigInt::from(hit)) * &step;
        let hi = &lo + &step;
        cases.push((grid, lo, hi));
    }

    for (grid, lo, hi) in cases {
        let offset = grid.offset();
        let Some(w) = single_cell_index(&[z, &lo, &hi], n - 3, &offset) else {
            continue;
        };
        let cell_count = BigInt::one() << (n - 3);
        if w < BigInt::zero() || w >= cell_count {
            return Err(MonotoneError::ShiftOutOfRange { z: z.clone() });
        }
        let index = w.to_i64().expect("cell index fits at desk scale");
        let cell = DyadicInterval::new(grid, (n - 3) as u32, index);
        let eta = BitString::from_index(n - 3, index as usize);
        let cell_lo = Rational::from_integer(w) * dyadic_width(n - 3) + &offset;
        let eta_value =
            slope_between(f, stage, &cell_lo, &(&cell_lo + dyadic_width(n - 3)));
        if eta_value < *u {
            return Err(MonotoneError::StartSlopeBelowFloor { value: eta_value, u: u.clone() });
        }
        let alpha_offset = ((&lo - &cell_lo) / &step).to_integer();
        let alpha_index = alpha_offset.to_usize().ok_or_else(|| MonotoneError::InternalCheck {
            detail: "witness cell is not aligned under its capturing cell".into(),
        })?;
        let alpha = BitString::from_index(k as usize + 3, alpha_index);
        let witness_slope = slope_between(f, stage, &lo, &hi);

        let directions = 1usize << (k as usize + 3);
        let mut best = Rational::zero();
        let mut beta = None;
        for idx in 0..directions {
            let sub_lo = &cell_lo + Rational::from_integer(BigInt::from(idx)) * &step;
            let sub_hi = &sub_lo + &step;
            let s = slope_between(f, stage, &sub_lo, &sub_hi);
            if s > *v {
                beta = Some((BitString::from_index(k as usize + 3, idx), s));
                break;
            }
            if s > best {
                best = s;
            }
        }
        let Some((beta, beta_value)) = beta else {
            return Err(MonotoneError::BalanceNotFound { eta, best, v: v.clone() });
        };
        return Ok(TwoGridReport {
            case: grid,
            n,
            k,
            cell,
            witness_lo: lo,
            witness_hi: hi,
            witness_slope: witness_slope.clone(),
            eta,
            alpha,
            alpha_value: witness_slope,
            beta,
            beta_value,
            eta_value,
            interpolation: INTERPOLATION,
        });
    }
    Err(MonotoneError::NeitherCase)
}

/// Staged clopen approximations of the set that survives deleting every
/// basic cell whose slope exceeds p, inside the given base cylinder.
/// Later stages delete more; the result can empty out, which callers
/// can observe on the final stage.
pub fn porosity_class_builder(
    f: &IntervalCEFunction,
    p: &Rational,
    sigma_star: &BitString,
) -> Pi01Approx {
    assert!(
        sigma_star.len() <= f.depth(),
        "base cylinder must live on the stored grid"
    );
    let depth = f.depth();
    let stages = (0..f.stage_count())
        .map(|s| {
            let survivors = sigma_star.extensions(depth - sigma_star.len()).filter(|tau| {
                std::iter::once(tau.clone())
                    .chain(tau.proper_prefixes())
                    .all(|sigma| {
                        f.rise_over(s, &sigma)
                            * Rational::from_integer(BigInt::one() << sigma.len())
                            <= *p
                    })
            });
            ClopenSet::from_raw(survivors)
        })
        .collect();
    Pi01Approx::new(stages).expect("growing slopes only shrink the survivors")
}
