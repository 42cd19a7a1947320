//! Exact computation on Cantor space.
//!
//! Everything here is desk-scale and exact: bit strings up to a working
//! depth, clopen sets as canonical antichains of cylinders, martingales
//! and measures with arbitrary-precision rational values. No floating
//! point enters any computation; decimal output is a rendering concern
//! left to callers.
//!
//! The crate is organised around a handful of executable constructions:
//!
//! * [`clopen`] and [`grid`]: cylinders, canonical clopen sets, dyadic
//!   grids (standard and 1/3-shifted) on the interval.
//! * [`martingale`]: finite and staged betting martingales, fairness and
//!   upcrossing checks, the measure view of an increasing dyadic real.
//! * [`pi01`]: shrinking clopen approximations to a closed class, local
//!   density traces, porosity scans, and the betting strategies that
//!   succeed on a class of small local measure.
//! * [`madison`]: sequences of weighted string sets with a re-entry
//!   discipline, built from oscillating or diverging martingales, and
//!   their conversion into staged level sets of Martin-Löf type.
//! * [`monotone`]: nondecreasing interval functions with left-c.e.
//!   increments, slope martingales, pseudo-derivative estimates, hole
//!   finding, and the two-grid slope analysis.
//! * [`lebesgue`]: step functions, conditional expectations, and the
//!   layered correction function used to certify Lebesgue points.
//! * [`ergodic`]: computable measures, cylinder maps (shift, odometer),
//!   ergodic averages and the maximal inequality, staged gap tests.
//! * [`scenario`]: seeded, reproducible generators for all of the above
//!   plus batch invariant sweeps.

pub mod bits;
pub mod clopen;
pub mod ergodic;
pub mod grid;
pub mod lebesgue;
pub mod madison;
pub mod martingale;
pub mod monotone;
pub mod num;
pub mod pi01;
pub mod scenario;

pub use bits::BitString;
pub use clopen::{weight, ClopenSet};
pub use ergodic::{BoundedTest, CellMap, ComputableMeasure, RuleTable};
pub use grid::{DyadicInterval, Grid};
pub use lebesgue::{HConstruction, IntegralTestApprox, StepFunction};
pub use madison::{MadisonReport, MadisonTest, MLTestFamily};
pub use martingale::{FiniteMartingale, LeftCEReal, StagedMartingale};
pub use monotone::{IntervalCEFunction, SlopeQuery};
pub use num::{DyadicRational, Rational};
pub use pi01::Pi01Approx;
pub use scenario::{
    generate, sweep, FailureBundle, Generated, Scenario, ScenarioParams, SweepReport,
};

/// Default working depth for operations that need one and are not given one.
pub const DEFAULT_DEPTH_LIMIT: usize = 16;
