//! Dyadic grids on the real line: the standard level-m grid with
//! endpoints `k/2^m` and its 1/3-shifted copy with endpoints `1/3 + k/2^m`.
//!
//! The point of keeping both around is the separation fact made
//! executable by [`min_endpoint_distance`]: no endpoint of one grid ever
//! comes closer than `1/(3·2^m)` to an endpoint of the other, because
//! `|3j − 2^m| ≥ 1` for all integers j. Walk arguments that fail on one
//! grid can therefore be replayed on the other with controlled geometry.

use crate::bits::BitString;
use crate::num::{rat, Rational};
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    Standard,
    Shifted,
}

impl Grid {
    /// Offset added to every endpoint: 0 or 1/3.
    pub fn offset(self) -> Rational {
        match self {
            Grid::Standard => Rational::zero(),
            Grid::Shifted => rat(1, 3),
        }
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Grid::Standard => "standard",
            Grid::Shifted => "shifted",
        })
    }
}

/// The closed interval `[offset + index/2^level, offset + (index+1)/2^level]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct DyadicInterval {
    pub grid: Grid,
    pub level: u32,
    pub index: i64,
}

impl DyadicInterval {
    pub fn new(grid: Grid, level: u32, index: i64) -> Self {
        Self { grid, level, index }
    }

    pub fn lo(&self) -> Rational {
        self.grid.offset() + Rational::new(BigInt::from(self.index), BigInt::one() << self.level)
    }

    pub fn hi(&self) -> Rational {
        self.grid.offset()
            + Rational::new(BigInt::from(self.index + 1), BigInt::one() << self.level)
    }

    pub fn width(&self) -> Rational {
        Rational::new(BigInt::one(), BigInt::one() << self.level)
    }

    pub fn contains(&self, z: &Rational) -> bool {
        &self.lo() <= z && z <= &self.hi()
    }

    pub fn contains_all<'a>(&self, points: impl IntoIterator<Item = &'a Rational>) -> bool {
        points.into_iter().all(|z| self.contains(z))
    }

    /// The cylinder address when the interval is a standard one inside
    /// `[0, 1]`; shifted or out-of-range intervals have none.
    pub fn to_bitstring(&self) -> Option<BitString> {
        if self.grid != Grid::Standard || self.index < 0 || self.index >= 1 << self.level {
            return None;
        }
        Some(BitString::from_index(self.level as usize, self.index as usize))
    }

    /// The interval of the grid and level whose closed span contains `z`.
    /// When `z` is an endpoint shared by two cells, the one with `z` as
    /// its left endpoint is returned.
    pub fn containing(grid: Grid, level: u32, z: &Rational) -> Self {
        let scaled = (z - grid.offset()) * Rational::from_integer(BigInt::one() << level);
        let index = scaled.floor().to_integer().to_i64().expect("grid index fits i64");
        Self { grid, level, index }
    }
}

impl std::fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo(), self.hi())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("the shifted-grid separation lemma is stated for level m ≥ 1")]
    LevelZero,
    #[error("level {0} exceeds the enumeration cap ({max})", max = MAX_ENUMERATION_LEVEL)]
    LevelTooLarge(u32),
    #[error("window [{0}, {1}] is not contained in [-1, 2]")]
    WindowOutOfRange(Rational, Rational),
}

pub const MAX_ENUMERATION_LEVEL: u32 = 30;

fn check_window(lo: &Rational, hi: &Rational) -> Result<(), GridError> {
    if lo < &rat(-1, 1) || hi > &rat(2, 1) {
        return Err(GridError::WindowOutOfRange(lo.clone(), hi.clone()));
    }
    Ok(())
}

/// All level-m intervals of the grid whose interior meets the window,
/// in increasing order. Intervals that only touch the window at a point
/// are not listed. An empty window yields an empty sequence.
pub fn grid_intervals(
    m: u32,
    grid: Grid,
    window_lo: &Rational,
    window_hi: &Rational,
) -> Result<Vec<DyadicInterval>, GridError> {
    check_window(window_lo, window_hi)?;
    if window_lo >= window_hi {
        return Ok(Vec::new());
    }
    let first = DyadicInterval::containing(grid, m, window_lo);
    // The cell containing window_lo only counts when some of the window
    // lies strictly inside it.
    let start = if first.hi() > *window_lo { first.index } else { first.index + 1 };
    let mut out = Vec::new();
    let mut index = start;
    loop {
        let cell = DyadicInterval::new(grid, m, index);
        if cell.lo() >= *window_hi {
            break;
        }
        out.push(cell);
        index += 1;
    }
    Ok(out)
}

/// Minimum distance, over a full period, between an endpoint of a
/// standard level-m interval and an endpoint of a shifted level-m
/// interval. Exhaustive over one unit window; all endpoint pairs at
/// distance `j/2^m − 1/3` for integer j are realized there.
pub fn min_endpoint_distance(m: u32) -> Result<Rational, GridError> {
    if m == 0 {
        return Err(GridError::LevelZero);
    }
    if m > MAX_ENUMERATION_LEVEL {
        return Err(GridError::LevelTooLarge(m));
    }
    let pow = 1i64 << m;
    // Over the common denominator 3·2^m the distance between k/2^m and
    // 1/3 + p/2^m has numerator |3(k−p) − 2^m|.
    let mut best: Option<i64> = None;
    for p in 0..=(2 * pow / 3) {
        let target = pow + 3 * p; // the value 3k would need for distance zero
        for k in [target / 3, target / 3 + 1] {
            if (0..=pow).contains(&k) {
                let d = (3 * k - target).abs();
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    let numer = best.expect("period window is nonempty");
    Ok(Rational::new(BigInt::from(numer), BigInt::from(3) * (BigInt::one() << m)))
}
