//! Subcommand definitions and handlers.
//!
//! Every handler returns a [`Verdict`]: `Clean` maps to exit 0,
//! `Violation` to exit 1 (a mathematical check ran and failed; a JSON
//! reproduction bundle goes to stderr). Any error return maps to exit
//! 2: malformed input, missing file, out-of-range parameters, or a
//! request outside the enumeration budget.

use std::path::PathBuf;

use anyhow::{bail, Result};
use cantorlab_core::ergodic::{
    ergodic_average, maximal_ergodic_check, preservation_check, step_gap_test,
};
use cantorlab_core::lebesgue::{build_h, lebesgue_point_probe, telescoping_bound_check};
use cantorlab_core::madison::{
    from_divergent_staged, from_oscillating_martingale, madison_to_ml, verify_madison,
};
use cantorlab_core::monotone::{
    lower_two_grid_analysis, pseudo_derivative_estimate, upper_hole_finder, EstimateVariant,
    GridChoice,
};
use cantorlab_core::num::parse_rational;
use cantorlab_core::pi01::density_trace;
use cantorlab_core::{
    sweep, BitString, CellMap, ClopenSet, ComputableMeasure, FiniteMartingale, Generated, Grid,
    IntegralTestApprox, IntervalCEFunction, MadisonTest, Pi01Approx, Rational, SlopeQuery,
    StagedMartingale, StepFunction,
};
use clap::{Args, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::output::{emit_bundle, exact, opt_rat_cells, rat_cells, rat_value, Format, Sink, Table};
use crate::source::{load_object, parse_map, parse_measure, RunConfig, ScenarioArgs};

pub enum Verdict {
    Clean,
    Violation,
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

fn bits(s: &str) -> Result<BitString, String> {
    s.parse().map_err(|e: cantorlab_core::bits::ParseBitStringError| e.to_string())
}

fn kind_of(generated: &Generated) -> &'static str {
    match generated {
        Generated::OmegaInterval { .. } => "omega-interval",
        Generated::PorousClass { .. } => "porous-class",
        Generated::MassCdf { .. } => "mass-cdf",
        Generated::Oscillator { .. } => "oscillator",
        Generated::GapIntegralTest { .. } => "gap-integral-test",
        Generated::ErgodicPair { .. } => "ergodic-pair",
    }
}

fn grid_name(grid: Grid) -> &'static str {
    match grid {
        Grid::Standard => "standard",
        Grid::Shifted => "shifted",
    }
}

/// Object-emitting commands always write JSON, so the artifact
/// re-parses into an equal object.
fn require_json(config: &RunConfig, command: &str) -> Result<()> {
    if config.format == Format::Csv {
        bail!("{command} emits a serialized object; use --format json");
    }
    Ok(())
}

#[derive(Subcommand)]
pub enum Command {
    /// Local measure of a shrinking class along every prefix of a path.
    TraceDensity(TraceDensityArgs),
    /// Staged string-set families: construction, checks, conversion.
    #[command(subcommand)]
    Madison(MadisonCommand),
    /// Measure of the k-fold band-crossing set against (c/d)^k.
    Dubins(DubinsArgs),
    /// Slope analysis of nondecreasing staged interval functions.
    #[command(subcommand)]
    Derivative(DerivativeCommand),
    /// Threshold crossings of staged integral approximations.
    #[command(subcommand)]
    Lebesgue(LebesgueCommand),
    /// Orbit averages, the maximal inequality, gap tests, preservation.
    #[command(subcommand)]
    Ergodic(ErgodicCommand),
    /// Generate scenarios over consecutive seeds and run every
    /// applicable invariant check.
    Sweep(SweepArgs),
}

pub fn dispatch(command: Command, config: &RunConfig) -> Result<Verdict> {
    let sink = Sink::new(config.out.clone());
    match command {
        Command::TraceDensity(args) => trace_density(&args, config, &sink),
        Command::Madison(cmd) => match cmd {
            MadisonCommand::BuildOscillating(args) => build_oscillating(&args, config, &sink),
            MadisonCommand::BuildDivergent(args) => build_divergent(&args, config, &sink),
            MadisonCommand::Verify(args) => madison_verify(&args, config, &sink),
            MadisonCommand::ToMl(args) => madison_to_ml_cmd(&args, config, &sink),
        },
        Command::Dubins(args) => dubins(&args, config, &sink),
        Command::Derivative(cmd) => match cmd {
            DerivativeCommand::Estimate(args) => derivative_estimate(&args, config, &sink),
            DerivativeCommand::Holes(args) => derivative_holes(&args, config, &sink),
            DerivativeCommand::TwoGrid(args) => derivative_two_grid(&args, config, &sink),
        },
        Command::Lebesgue(cmd) => match cmd {
            LebesgueCommand::Probe(args) => lebesgue_probe(&args, config, &sink),
            LebesgueCommand::BuildH(args) => lebesgue_build_h(&args, config, &sink),
            LebesgueCommand::CheckBound(args) => lebesgue_check_bound(&args, config, &sink),
        },
        Command::Ergodic(cmd) => match cmd {
            ErgodicCommand::Average(args) => ergodic_average_cmd(&args, config, &sink),
            ErgodicCommand::Maximal(args) => ergodic_maximal(&args, config, &sink),
            ErgodicCommand::OwTest(args) => ergodic_ow_test(&args, config, &sink),
            ErgodicCommand::Preserve(args) => ergodic_preserve(&args, config, &sink),
        },
        Command::Sweep(args) => sweep_cmd(&args, config, &sink),
    }
}

#[derive(Args)]
pub struct TraceDensityArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Serialized class file (staged clopen sets) instead of a scenario.
    #[arg(long, conflicts_with_all = ["scenario", "kind", "cylinder"])]
    class: Option<PathBuf>,
    /// Frozen class: the single cylinder below these bits.
    #[arg(long, value_parser = bits, conflicts_with_all = ["scenario", "kind"])]
    cylinder: Option<BitString>,
    /// Path to trace along (0/1 text; `e` is the root).
    #[arg(long, value_parser = bits)]
    path: BitString,
    /// First index of the tail window for the min/max summary.
    #[arg(long, default_value_t = 0)]
    window: usize,
}

fn trace_density(args: &TraceDensityArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    config.check_depth("the path", args.path.len())?;
    let class = if let Some(path) = &args.class {
        load_object::<Pi01Approx>("class", path)?
    } else if let Some(sigma) = &args.cylinder {
        Pi01Approx::frozen(ClopenSet::cylinder(sigma), 1)
    } else {
        match args.scenario.generate("porous-class", config)? {
            Generated::PorousClass { class, .. } => class,
            other => bail!("a {} scenario does not produce a class", kind_of(&other)),
        }
    };
    config.check_stages("the class", class.stage_count())?;
    let trace = density_trace(&class, &args.path, args.window);

    let mut table = Table::new(["n", "local_measure", "local_measure_approx12"]);
    for (n, v) in &trace.entries {
        let [e, a] = rat_cells(v);
        table.row([n.to_string(), e, a]);
    }
    let entries: Vec<Value> = trace
        .entries
        .iter()
        .map(|(n, v)| json!({ "n": n, "local_measure": rat_value(v) }))
        .collect();
    let value = json!({
        "command": "trace-density",
        "path": trace.path.to_string(),
        "entries": entries,
        "window_start": trace.window_start,
        "window_min": rat_value(&trace.window_min),
        "window_max": rat_value(&trace.window_max),
    });
    sink.report(config.format, &value, &table)?;
    Ok(Verdict::Clean)
}

#[derive(Subcommand)]
pub enum MadisonCommand {
    /// Build the staged family tracking upcrossings of a band.
    BuildOscillating(BuildOscillatingArgs),
    /// Build the labelled family tracking stage-to-stage value rises.
    BuildDivergent(BuildDivergentArgs),
    /// Check every structural condition of a staged family file.
    Verify(MadisonVerifyArgs),
    /// Convert a family into nested per-scale level sets.
    ToMl(MadisonToMlArgs),
}

#[derive(Args)]
pub struct BuildOscillatingArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Serialized betting martingale instead of a scenario.
    #[arg(long, conflicts_with_all = ["scenario", "kind"])]
    martingale: Option<PathBuf>,
    /// Lower band value.
    #[arg(long, value_parser = rational)]
    c: Rational,
    /// Upper band value (must exceed 2c).
    #[arg(long, value_parser = rational)]
    d: Rational,
}

fn build_oscillating(
    args: &BuildOscillatingArgs,
    config: &RunConfig,
    sink: &Sink,
) -> Result<Verdict> {
    require_json(config, "madison build-oscillating")?;
    let martingale = if let Some(path) = &args.martingale {
        load_object::<FiniteMartingale>("martingale", path)?
    } else {
        match args.scenario.generate("oscillator", config)? {
            Generated::Oscillator { martingale, .. } => martingale,
            other => bail!("a {} scenario does not produce a betting martingale", kind_of(&other)),
        }
    };
    config.check_depth("the martingale", martingale.depth())?;
    let test = from_oscillating_martingale(&martingale, &args.c, &args.d)?;
    sink.object(&test)?;
    Ok(Verdict::Clean)
}

#[derive(Args)]
pub struct BuildDivergentArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Serialized staged martingale instead of a scenario.
    #[arg(long, conflicts_with_all = ["scenario", "kind"])]
    martingale: Option<PathBuf>,
    /// Rise threshold between stages.
    #[arg(long, value_parser = rational)]
    eps: Rational,
}

fn build_divergent(args: &BuildDivergentArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    require_json(config, "madison build-divergent")?;
    let staged = if let Some(path) = &args.martingale {
        load_object::<StagedMartingale>("martingale", path)?
    } else {
        match args.scenario.generate("omega-interval", config)? {
            Generated::OmegaInterval { martingale, .. } => martingale,
            other => bail!("a {} scenario does not produce a staged martingale", kind_of(&other)),
        }
    };
    config.check_depth("the martingale", staged.depth())?;
    config.check_stages("the martingale", staged.stages().len())?;
    let test = from_divergent_staged(&staged, &args.eps)?;
    sink.object(&test)?;
    Ok(Verdict::Clean)
}

#[derive(Args)]
pub struct MadisonVerifyArgs {
    /// Staged family file (stages, labels, weight bound).
    #[arg(long)]
    test: PathBuf,
}

fn madison_verify(args: &MadisonVerifyArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    let test: MadisonTest = load_object("test", &args.test)?;
    config.check_stages("the family", test.stage_count())?;
    let report = verify_madison(&test);

    let mut table = Table::new(["index", "violation"]);
    for (i, v) in report.violations.iter().enumerate() {
        table.row([i.to_string(), v.to_string()]);
    }
    let value = json!({
        "command": "madison verify",
        "holds": report.holds,
        "stage_count": test.stage_count(),
        "bound": rat_value(test.bound()),
        "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
    });
    sink.report(config.format, &value, &table)?;
    if report.holds {
        Ok(Verdict::Clean)
    } else {
        emit_bundle(
            "madison verify",
            &format!("{} condition violation(s)", report.violations.len()),
            json!({ "test": test }),
        );
        Ok(Verdict::Violation)
    }
}

#[derive(Args)]
pub struct MadisonToMlArgs {
    /// Staged family file to convert.
    #[arg(long)]
    test: PathBuf,
    /// Levels 0..=k_max are built, each within its measure budget.
    #[arg(long, default_value_t = 4)]
    k_max: usize,
}

fn madison_to_ml_cmd(args: &MadisonToMlArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    require_json(config, "madison to-ml")?;
    let test: MadisonTest = load_object("test", &args.test)?;
    config.check_stages("the family", test.stage_count())?;
    config.check_depth("the level scale", args.k_max)?;
    match madison_to_ml(&test, args.k_max) {
        Ok(family) => {
            sink.object(&family)?;
            Ok(Verdict::Clean)
        }
        Err(e) => {
            emit_bundle(
                "madison to-ml",
                &e.to_string(),
                json!({ "test": test, "k_max": args.k_max }),
            );
            Ok(Verdict::Violation)
        }
    }
}

#[derive(Args)]
pub struct DubinsArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Serialized betting martingale instead of a scenario.
    #[arg(long, conflicts_with_all = ["scenario", "kind"])]
    martingale: Option<PathBuf>,
    /// Lower band value (the root must sit below it).
    #[arg(long, value_parser = rational)]
    c: Rational,
    /// Upper band value.
    #[arg(long, value_parser = rational)]
    d: Rational,
    /// Crossing count whose hit-set measure is bounded.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Emit the value trace along this path instead of the check.
    #[arg(long, value_parser = bits)]
    trace: Option<BitString>,
    /// First index of the trace's min/max window.
    #[arg(long, default_value_t = 0)]
    cut: usize,
}

fn dubins(args: &DubinsArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    let staged = if let Some(path) = &args.martingale {
        let m: FiniteMartingale = load_object("martingale", path)?;
        StagedMartingale::new(vec![m])?
    } else {
        match args.scenario.generate("oscillator", config)? {
            Generated::Oscillator { martingale, .. } => StagedMartingale::new(vec![martingale])?,
            Generated::OmegaInterval { martingale, .. } => martingale,
            other => bail!("a {} scenario does not produce a martingale", kind_of(&other)),
        }
    };
    config.check_depth("the martingale", staged.depth())?;
    config.check_stages("the martingale", staged.stages().len())?;

    if let Some(z) = &args.trace {
        let trace = staged.oscillation_trace(z, args.cut)?;
        let mut table = Table::new([
            "n",
            "value",
            "value_approx12",
            "running_min",
            "running_min_approx12",
            "running_max",
            "running_max_approx12",
            "gap",
            "gap_approx12",
        ]);
        for row in &trace.rows {
            let [ve, va] = rat_cells(&row.value);
            let [mne, mna] = opt_rat_cells(&row.running_min);
            let [mxe, mxa] = opt_rat_cells(&row.running_max);
            let [ge, ga] = opt_rat_cells(&row.gap);
            table.row([row.n.to_string(), ve, va, mne, mna, mxe, mxa, ge, ga]);
        }
        let rows: Vec<Value> = trace
            .rows
            .iter()
            .map(|r| {
                json!({
                    "n": r.n,
                    "value": rat_value(&r.value),
                    "running_min": crate::output::opt_rat_value(&r.running_min),
                    "running_max": crate::output::opt_rat_value(&r.running_max),
                    "gap": crate::output::opt_rat_value(&r.gap),
                })
            })
            .collect();
        let value = json!({
            "command": "dubins",
            "trace": z.to_string(),
            "cut": trace.cut,
            "rows": rows,
            "gap": rat_value(&trace.gap),
        });
        sink.report(config.format, &value, &table)?;
        return Ok(Verdict::Clean);
    }

    let report = staged.final_stage().dubins_check(&args.c, &args.d, args.k, config.depth_limit)?;
    let mut table = Table::new([
        "k",
        "measured",
        "measured_approx12",
        "bound",
        "bound_approx12",
        "holds",
        "hit_count",
        "leaf_count",
    ]);
    let [me, ma] = rat_cells(&report.measured);
    let [be, ba] = rat_cells(&report.bound);
    table.row([
        report.k.to_string(),
        me,
        ma,
        be,
        ba,
        report.holds.to_string(),
        report.hit_count.to_string(),
        report.leaf_count.to_string(),
    ]);
    let value = json!({
        "command": "dubins",
        "k": report.k,
        "c": exact(&args.c),
        "d": exact(&args.d),
        "measured": rat_value(&report.measured),
        "bound": rat_value(&report.bound),
        "hit_count": report.hit_count,
        "leaf_count": report.leaf_count,
        "holds": report.holds,
    });
    sink.report(config.format, &value, &table)?;
    if report.holds {
        Ok(Verdict::Clean)
    } else {
        emit_bundle(
            "dubins",
            &format!("measured {} exceeds the bound {}", report.measured, report.bound),
            json!({
                "martingale": staged,
                "c": exact(&args.c),
                "d": exact(&args.d),
                "k": args.k,
            }),
        );
        Ok(Verdict::Violation)
    }
}

#[derive(Subcommand)]
pub enum DerivativeCommand {
    /// Min/max slope envelope over grid intervals around a point.
    Estimate(DerivativeEstimateArgs),
    /// First walk cell whose slope clears the averaging margin.
    Holes(DerivativeHolesArgs),
    /// Decide which grid captures a small-slope window in one cell.
    TwoGrid(DerivativeTwoGridArgs),
}

#[derive(Args)]
pub struct FunctionSource {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Serialized nondecreasing interval function instead of a scenario.
    #[arg(long, conflicts_with_all = ["scenario", "kind"])]
    function: Option<PathBuf>,
}

impl FunctionSource {
    fn load(&self, config: &RunConfig) -> Result<IntervalCEFunction> {
        let f = if let Some(path) = &self.function {
            load_object::<IntervalCEFunction>("function", path)?
        } else {
            match self.scenario.generate("mass-cdf", config)? {
                Generated::MassCdf { cdf, .. } => cdf,
                other => {
                    bail!("a {} scenario does not produce an interval function", kind_of(&other))
                }
            }
        };
        config.check_depth("the function", f.depth())?;
        config.check_stages("the function", f.stage_count())?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantOpt {
    /// All grid-endpoint intervals around the point.
    Full,
    /// Only basic grid cells containing the point.
    Dyadic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GridsOpt {
    Standard,
    Shifted,
    Both,
}

#[derive(Args)]
pub struct DerivativeEstimateArgs {
    #[command(flatten)]
    source: FunctionSource,
    /// Point whose slope envelope is estimated.
    #[arg(long, value_parser = rational)]
    z: Rational,
    /// Largest interval length considered.
    #[arg(long, value_parser = rational)]
    h: Rational,
    #[arg(long, value_enum, default_value_t = VariantOpt::Full)]
    variant: VariantOpt,
    #[arg(long, value_enum, default_value_t = GridsOpt::Both)]
    grids: GridsOpt,
}

fn derivative_estimate(
    args: &DerivativeEstimateArgs,
    config: &RunConfig,
    sink: &Sink,
) -> Result<Verdict> {
    let f = args.source.load(config)?;
    let variant = match args.variant {
        VariantOpt::Full => EstimateVariant::Full,
        VariantOpt::Dyadic => EstimateVariant::Dyadic,
    };
    let grids = match args.grids {
        GridsOpt::Standard => GridChoice::Standard,
        GridsOpt::Shifted => GridChoice::Shifted,
        GridsOpt::Both => GridChoice::Both,
    };
    let report = pseudo_derivative_estimate(&f, &args.z, &args.h, variant, grids)?;
    let mut table = Table::new([
        "z",
        "z_approx12",
        "h",
        "h_approx12",
        "variant",
        "grids",
        "min_slope",
        "min_slope_approx12",
        "max_slope",
        "max_slope_approx12",
        "examined",
        "interpolation",
    ]);
    let [ze, za] = rat_cells(&report.z);
    let [he, ha] = rat_cells(&report.h);
    let [mne, mna] = rat_cells(&report.min_slope);
    let [mxe, mxa] = rat_cells(&report.max_slope);
    table.row([
        ze,
        za,
        he,
        ha,
        format!("{:?}", report.variant).to_lowercase(),
        format!("{:?}", report.grids).to_lowercase(),
        mne,
        mna,
        mxe,
        mxa,
        report.examined.to_string(),
        report.interpolation.to_string(),
    ]);
    let value = json!({
        "command": "derivative estimate",
        "z": rat_value(&report.z),
        "h": rat_value(&report.h),
        "variant": format!("{:?}", report.variant).to_lowercase(),
        "grids": format!("{:?}", report.grids).to_lowercase(),
        "min_slope": rat_value(&report.min_slope),
        "max_slope": rat_value(&report.max_slope),
        "examined": report.examined,
        "interpolation": report.interpolation,
    });
    sink.report(config.format, &value, &table)?;
    Ok(Verdict::Clean)
}

#[derive(Args)]
pub struct DerivativeHolesArgs {
    #[command(flatten)]
    source: FunctionSource,
    /// Slope threshold the cell must exceed.
    #[arg(long, value_parser = rational)]
    p: Rational,
    /// Walk scale: cells have length 2^-(n+k).
    #[arg(long, default_value_t = 1)]
    k: u32,
    /// Interval lower endpoint.
    #[arg(long, value_parser = rational)]
    lo: Rational,
    /// Interval upper endpoint.
    #[arg(long, value_parser = rational)]
    hi: Rational,
    /// Stage to read slopes at (default: final).
    #[arg(long)]
    stage: Option<usize>,
}

fn derivative_holes(
    args: &DerivativeHolesArgs,
    config: &RunConfig,
    sink: &Sink,
) -> Result<Verdict> {
    let f = args.source.load(config)?;
    let stage = args.stage.unwrap_or(f.stage_count() - 1);
    if stage >= f.stage_count() {
        bail!("stage {stage} is out of range: the function has {} stages", f.stage_count());
    }
    let query = SlopeQuery::new(args.lo.clone(), args.hi.clone())?;
    let hole = upper_hole_finder(&f, &args.p, args.k, &query, stage)?;

    let mut table = Table::new([
        "n",
        "walk_index",
        "walk_cells",
        "cell_lo",
        "cell_lo_approx12",
        "cell_hi",
        "cell_hi_approx12",
        "slope",
        "slope_approx12",
        "interpolation",
    ]);
    let value = match &hole {
        Some(r) => {
            let [loe, loa] = rat_cells(&r.cell_lo);
            let [hie, hia] = rat_cells(&r.cell_hi);
            let [se, sa] = rat_cells(&r.slope);
            table.row([
                r.n.to_string(),
                r.u.to_string(),
                r.r.to_string(),
                loe,
                loa,
                hie,
                hia,
                se,
                sa,
                r.interpolation.to_string(),
            ]);
            json!({
                "command": "derivative holes",
                "hole": {
                    "n": r.n,
                    "walk_index": r.u,
                    "walk_cells": r.r,
                    "cell_lo": rat_value(&r.cell_lo),
                    "cell_hi": rat_value(&r.cell_hi),
                    "slope": rat_value(&r.slope),
                    "interpolation": r.interpolation,
                },
            })
        }
        None => json!({
            "command": "derivative holes",
            "hole": null,
            "note": "interval slope within the averaging margin; nothing is promised",
        }),
    };
    sink.report(config.format, &value, &table)?;
    Ok(Verdict::Clean)
}

#[derive(Args)]
pub struct DerivativeTwoGridArgs {
    #[command(flatten)]
    source: FunctionSource,
    /// Interval lower endpoint.
    #[arg(long, value_parser = rational)]
    lo: Rational,
    /// Interval upper endpoint.
    #[arg(long, value_parser = rational)]
    hi: Rational,
    /// Walk cells below this slope witness the dip.
    #[arg(long, value_parser = rational)]
    q: Rational,
    /// The capturing cell's slope must reach this floor.
    #[arg(long, value_parser = rational)]
    u: Rational,
    /// Some sibling direction must exceed this slope.
    #[arg(long, value_parser = rational)]
    v: Rational,
    /// Walk scale below the interval level.
    #[arg(long, default_value_t = 3)]
    k: u32,
    /// Coarsest admissible interval level.
    #[arg(long, default_value_t = 3)]
    n_star: usize,
    /// The point both grids try to capture.
    #[arg(long, value_parser = rational)]
    z: Rational,
}

fn derivative_two_grid(
    args: &DerivativeTwoGridArgs,
    config: &RunConfig,
    sink: &Sink,
) -> Result<Verdict> {
    let f = args.source.load(config)?;
    let query = SlopeQuery::new(args.lo.clone(), args.hi.clone())?;
    let report = lower_two_grid_analysis(
        &f,
        &query,
        &args.q,
        &args.u,
        &args.v,
        args.k,
        args.n_star,
        &args.z,
    )?;
    let mut table = Table::new([
        "case",
        "n",
        "k",
        "cell_lo",
        "cell_lo_approx12",
        "cell_hi",
        "cell_hi_approx12",
        "witness_lo",
        "witness_lo_approx12",
        "witness_hi",
        "witness_hi_approx12",
        "witness_slope",
        "witness_slope_approx12",
        "eta",
        "eta_value",
        "eta_value_approx12",
        "alpha",
        "alpha_value",
        "alpha_value_approx12",
        "beta",
        "beta_value",
        "beta_value_approx12",
        "interpolation",
    ]);
    let cell_lo = report.cell.lo();
    let cell_hi = report.cell.hi();
    let [cle, cla] = rat_cells(&cell_lo);
    let [che, cha] = rat_cells(&cell_hi);
    let [wle, wla] = rat_cells(&report.witness_lo);
    let [whe, wha] = rat_cells(&report.witness_hi);
    let [wse, wsa] = rat_cells(&report.witness_slope);
    let [ee, ea] = rat_cells(&report.eta_value);
    let [ae, aa] = rat_cells(&report.alpha_value);
    let [be, ba] = rat_cells(&report.beta_value);
    table.row([
        grid_name(report.case).to_string(),
        report.n.to_string(),
        report.k.to_string(),
        cle,
        cla,
        che,
        cha,
        wle,
        wla,
        whe,
        wha,
        wse,
        wsa,
        report.eta.to_string(),
        ee,
        ea,
        report.alpha.to_string(),
        ae,
        aa,
        report.beta.to_string(),
        be,
        ba,
        report.interpolation.to_string(),
    ]);
    let value = json!({
        "command": "derivative two-grid",
        "case": grid_name(report.case),
        "n": report.n,
        "k": report.k,
        "cell": { "lo": rat_value(&cell_lo), "hi": rat_value(&cell_hi) },
        "witness": {
            "lo": rat_value(&report.witness_lo),
            "hi": rat_value(&report.witness_hi),
            "slope": rat_value(&report.witness_slope),
        },
        "eta": report.eta.to_string(),
        "eta_value": rat_value(&report.eta_value),
        "alpha": report.alpha.to_string(),
        "alpha_value": rat_value(&report.alpha_value),
        "beta": report.beta.to_string(),
        "beta_value": rat_value(&report.beta_value),
        "interpolation": report.interpolation,
    });
    sink.report(config.format, &value, &table)?;
    Ok(Verdict::Clean)
}

#[derive(Subcommand)]
pub enum LebesgueCommand {
    /// Average trace along a path with its tail envelope.
    Probe(LebesgueProbeArgs),
    /// Build the layered threshold-crossing correction.
    BuildH(LebesgueBuildHArgs),
    /// Certify the construction's integral against the final stage.
    CheckBound(LebesgueCheckBoundArgs),
}

#[derive(Args)]
pub struct ApproxSource {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Serialized staged integral approximation instead of a scenario.
    #[arg(long, conflicts_with_all = ["scenario", "kind"])]
    approx: Option<PathBuf>,
}

impl ApproxSource {
    fn load(&self, config: &RunConfig) -> Result<IntegralTestApprox> {
        let g = if let Some(path) = &self.approx {
            load_object::<IntegralTestApprox>("approximation", path)?
        } else {
            match self.scenario.generate("gap-integral-test", config)? {
                Generated::GapIntegralTest { approx, .. } => approx,
                other => {
                    bail!("a {} scenario does not produce an integral approximation", kind_of(&other))
                }
            }
        };
        config.check_stages("the approximation", g.stage_count())?;
        config.check_depth("the approximation", g.final_stage().depth())?;
        Ok(g)
    }
}

#[derive(Args)]
pub struct LebesgueProbeArgs {
    #[command(flatten)]
    source: ApproxSource,
    /// Path to probe along.
    #[arg(long, value_parser = bits)]
    path: BitString,
    /// Trace depth (default: the path length).
    #[arg(long)]
    probe_depth: Option<usize>,
}

fn lebesgue_probe(args: &LebesgueProbeArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    let g = args.source.load(config)?;
    config.check_depth("the path", args.path.len())?;
    let depth = args.probe_depth.unwrap_or(args.path.len());
    let trace = lebesgue_point_probe(&g, &args.path, depth)?;

    let mut table = Table::new(["n", "average", "average_approx12"]);
    for (n, v) in &trace.entries {
        let [e, a] = rat_cells(v);
        table.row([n.to_string(), e, a]);
    }
    let entries: Vec<Value> =
        trace.entries.iter().map(|(n, v)| json!({ "n": n, "average": rat_value(v) })).collect();
    let value = json!({
        "command": "lebesgue probe",
        "path": trace.path.to_string(),
        "entries": entries,
        "cell_value": rat_value(&trace.cell_value),
        "stabilization": trace.stabilization,
        "tail_min": rat_value(&trace.tail_min),
        "tail_max": rat_value(&trace.tail_max),
        "discrepancy": rat_value(&trace.discrepancy),
    });
    sink.report(config.format, &value, &table)?;
    Ok(Verdict::Clean)
}

#[derive(Args)]
pub struct LebesgueBuildHArgs {
    #[command(flatten)]
    source: ApproxSource,
    /// Crossing threshold.
    #[arg(long, value_parser = rational)]
    q: Rational,
    /// Distinguished path whose component sum is reported.
    #[arg(long, value_parser = bits)]
    path: BitString,
}

fn lebesgue_build_h(
    args: &LebesgueBuildHArgs,
    config: &RunConfig,
    sink: &Sink,
) -> Result<Verdict> {
    let g = args.source.load(config)?;
    let levels = args.source.scenario.levels.unwrap_or(2);
    config.check_stages("the level count", levels)?;
    let h = build_h(&g, &args.q, &args.path, levels)?;

    let mut table = Table::new([
        "level",
        "tau",
        "entry_stage",
        "parent",
        "parent_stage",
        "coefficient",
        "coefficient_approx12",
    ]);
    let mut levels_json = Vec::new();
    for (level, pairs) in h.levels.iter().enumerate().skip(1) {
        let mut level_json = Vec::new();
        for pair in pairs {
            let [ce, ca] = rat_cells(&pair.coefficient);
            table.row([
                level.to_string(),
                pair.tau.to_string(),
                pair.t.to_string(),
                pair.parent.to_string(),
                pair.parent_stage.to_string(),
                ce,
                ca,
            ]);
            level_json.push(json!({
                "tau": pair.tau.to_string(),
                "entry_stage": pair.t,
                "parent": pair.parent.to_string(),
                "parent_stage": pair.parent_stage,
                "coefficient": rat_value(&pair.coefficient),
            }));
        }
        levels_json.push(Value::Array(level_json));
    }
    let value = json!({
        "command": "lebesgue build-h",
        "q": rat_value(&h.q),
        "path": h.z.to_string(),
        "search_depth": h.search_depth,
        "levels": levels_json,
        "path_value": rat_value(&h.path_value),
        "h": serde_json::to_value(&h.h)?,
    });
    sink.report(config.format, &value, &table)?;
    Ok(Verdict::Clean)
}

#[derive(Args)]
pub struct LebesgueCheckBoundArgs {
    #[command(flatten)]
    source: ApproxSource,
    /// Crossing threshold.
    #[arg(long, value_parser = rational)]
    q: Rational,
    /// Distinguished path for the construction.
    #[arg(long, value_parser = bits)]
    path: BitString,
}

fn lebesgue_check_bound(
    args: &LebesgueCheckBoundArgs,
    config: &RunConfig,
    sink: &Sink,
) -> Result<Verdict> {
    let g = args.source.load(config)?;
    let levels = args.source.scenario.levels.unwrap_or(2);
    config.check_stages("the level count", levels)?;
    let h = build_h(&g, &args.q, &args.path, levels)?;
    let report = telescoping_bound_check(&h, &g);

    let mut table = Table::new([
        "tau",
        "entry_stage",
        "component_integral",
        "component_integral_approx12",
        "allowance",
        "allowance_approx12",
        "holds",
    ]);
    let mut pairs_json = Vec::new();
    for pair in &report.pairs {
        let [cie, cia] = rat_cells(&pair.component_integral);
        let [ale, ala] = rat_cells(&pair.allowance);
        table.row([
            pair.tau.to_string(),
            pair.t.to_string(),
            cie,
            cia,
            ale,
            ala,
            pair.holds.to_string(),
        ]);
        pairs_json.push(json!({
            "tau": pair.tau.to_string(),
            "entry_stage": pair.t,
            "component_integral": rat_value(&pair.component_integral),
            "allowance": rat_value(&pair.allowance),
            "holds": pair.holds,
        }));
    }
    let value = json!({
        "command": "lebesgue check-bound",
        "lhs": rat_value(&report.lhs),
        "rhs": rat_value(&report.rhs),
        "holds": report.holds,
        "pairs": pairs_json,
    });
    sink.report(config.format, &value, &table)?;
    if report.holds {
        Ok(Verdict::Clean)
    } else {
        emit_bundle(
            "lebesgue check-bound",
            &format!("assembled integral {} exceeds the final integral {}", report.lhs, report.rhs),
            json!({
                "approx": g,
                "q": exact(&args.q),
                "path": args.path.to_string(),
                "levels": levels,
            }),
        );
        Ok(Verdict::Violation)
    }
}

#[derive(Subcommand)]
pub enum ErgodicCommand {
    /// Orbit average of a step function at one point.
    Average(ErgodicAverageArgs),
    /// Measure of cells whose averages exceed a threshold, against
    /// the integral bound.
    Maximal(ErgodicMaximalArgs),
    /// Per-stage gap sets of a staged approximation under averaging.
    OwTest(ErgodicOwTestArgs),
    /// Compare every cylinder's mass with the mass of its preimage.
    Preserve(ErgodicPreserveArgs),
}

#[derive(Args)]
pub struct PairSource {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Serialized step function instead of a scenario.
    #[arg(long, conflicts_with_all = ["scenario", "kind"])]
    f: Option<PathBuf>,
    /// Cell map: `shift`, `odometer`, or a rule-table JSON file.
    #[arg(long)]
    map: Option<String>,
    /// Measure: `uniform:<depth>` or a measure JSON file.
    #[arg(long)]
    measure: Option<String>,
}

struct ResolvedPair {
    f: StepFunction,
    map: CellMap,
    measure: Option<ComputableMeasure>,
    threshold: Option<Rational>,
    horizon: Option<usize>,
    depth: Option<usize>,
}

impl PairSource {
    fn load(&self, config: &RunConfig) -> Result<ResolvedPair> {
        if let Some(path) = &self.f {
            let f: StepFunction = load_object("step-function", path)?;
            config.check_depth("the step function", f.depth())?;
            let map = parse_map(self.map.as_deref().unwrap_or("shift"))?;
            let measure = self.measure.as_deref().map(parse_measure).transpose()?;
            return Ok(ResolvedPair {
                f,
                map,
                measure,
                threshold: None,
                horizon: None,
                depth: None,
            });
        }
        match self.scenario.generate("ergodic-pair", config)? {
            Generated::ErgodicPair { f, map, measure, threshold, horizon, depth } => {
                let map = match self.map.as_deref() {
                    Some(spec) => parse_map(spec)?,
                    None => map,
                };
                let measure = match self.measure.as_deref() {
                    Some(spec) => parse_measure(spec)?,
                    None => measure,
                };
                Ok(ResolvedPair {
                    f,
                    map,
                    measure: Some(measure),
                    threshold: Some(threshold),
                    horizon: Some(horizon),
                    depth: Some(depth),
                })
            }
            other => bail!("a {} scenario does not produce a function and map", kind_of(&other)),
        }
    }
}

#[derive(Args)]
pub struct ErgodicAverageArgs {
    #[command(flatten)]
    source: PairSource,
    /// Orbit start point.
    #[arg(long, value_parser = bits)]
    point: BitString,
    /// Number of orbit points averaged.
    #[arg(long, default_value_t = 1)]
    n: usize,
}

fn ergodic_average_cmd(
    args: &ErgodicAverageArgs,
    config: &RunConfig,
    sink: &Sink,
) -> Result<Verdict> {
    if args.n == 0 {
        bail!("--n must be at least 1: an average needs one orbit point");
    }
    config.check_stages("the orbit length", args.n)?;
    config.check_depth("the point", args.point.len())?;
    let pair = args.source.load(config)?;
    let average = ergodic_average(&pair.f, &pair.map, &args.point, args.n)?;

    let mut table = Table::new(["n", "point", "average", "average_approx12"]);
    let [e, a] = rat_cells(&average);
    table.row([args.n.to_string(), args.point.to_string(), e, a]);
    let value = json!({
        "command": "ergodic average",
        "n": args.n,
        "point": args.point.to_string(),
        "average": rat_value(&average),
    });
    sink.report(config.format, &value, &table)?;
    Ok(Verdict::Clean)
}

#[derive(Args)]
pub struct ErgodicMaximalArgs {
    #[command(flatten)]
    source: PairSource,
    /// Average threshold (default: the scenario's).
    #[arg(long, value_parser = rational)]
    r: Option<Rational>,
    /// Largest average horizon (default: the scenario's).
    #[arg(long)]
    max_horizon: Option<usize>,
    /// Depth of the enumerated cells (default: the scenario's).
    #[arg(long)]
    eval_depth: Option<usize>,
}

fn ergodic_maximal(args: &ErgodicMaximalArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    let pair = args.source.load(config)?;
    let r = match (&args.r, &pair.threshold) {
        (Some(r), _) => r.clone(),
        (None, Some(r)) => r.clone(),
        (None, None) => bail!("--r is required when --f supplies the function"),
    };
    let horizon = match (args.max_horizon, pair.horizon) {
        (Some(h), _) => h,
        (None, Some(h)) => h,
        (None, None) => bail!("--max-horizon is required when --f supplies the function"),
    };
    let depth = match (args.eval_depth, pair.depth) {
        (Some(d), _) => d,
        (None, Some(d)) => d,
        (None, None) => bail!("--eval-depth is required when --f supplies the function"),
    };
    if horizon == 0 {
        bail!("--max-horizon must be at least 1");
    }
    config.check_stages("the horizon", horizon)?;
    config.check_depth("the evaluation depth", depth)?;
    let measure = match pair.measure {
        Some(m) => m,
        None => ComputableMeasure::uniform(depth),
    };
    let report = maximal_ergodic_check(&pair.f, &pair.map, &measure, &r, horizon, depth)?;

    let mut table = Table::new([
        "measured",
        "measured_approx12",
        "bound",
        "bound_approx12",
        "threshold",
        "threshold_approx12",
        "horizon",
        "depth",
        "holds",
    ]);
    let [me, ma] = rat_cells(&report.measured);
    let [be, ba] = rat_cells(&report.bound);
    let [re, ra] = rat_cells(&r);
    table.row([
        me,
        ma,
        be,
        ba,
        re,
        ra,
        horizon.to_string(),
        depth.to_string(),
        report.holds.to_string(),
    ]);
    let value = json!({
        "command": "ergodic maximal",
        "measured": rat_value(&report.measured),
        "bound": rat_value(&report.bound),
        "threshold": rat_value(&r),
        "horizon": horizon,
        "depth": depth,
        "holds": report.holds,
    });
    sink.report(config.format, &value, &table)?;
    if report.holds {
        Ok(Verdict::Clean)
    } else {
        emit_bundle(
            "ergodic maximal",
            &format!("measured {} exceeds the bound {}", report.measured, report.bound),
            json!({
                "f": pair.f,
                "map": pair.map,
                "measure": measure,
                "threshold": exact(&r),
                "horizon": horizon,
                "depth": depth,
            }),
        );
        Ok(Verdict::Violation)
    }
}

#[derive(Args)]
pub struct ErgodicOwTestArgs {
    #[command(flatten)]
    source: ApproxSource,
    /// Cell map: `shift`, `odometer`, or a rule-table JSON file.
    #[arg(long, default_value = "shift")]
    map: String,
    /// Measure: `uniform:<depth>` or a measure JSON file (default:
    /// uniform at the evaluation depth).
    #[arg(long)]
    measure: Option<String>,
    /// Lower gap endpoint.
    #[arg(long, value_parser = rational, default_value = "0")]
    a: Rational,
    /// Upper gap endpoint (default: the scenario's threshold).
    #[arg(long, value_parser = rational)]
    b: Option<Rational>,
    /// Largest average horizon.
    #[arg(long, default_value_t = 3)]
    max_horizon: usize,
    /// Depth of the enumerated cells (default: stage depth plus the
    /// map cost per orbit step).
    #[arg(long)]
    eval_depth: Option<usize>,
    /// Single stage to test (default: every stage).
    #[arg(long)]
    stage: Option<usize>,
}

fn ergodic_ow_test(args: &ErgodicOwTestArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    let (g, scenario_threshold) = if let Some(path) = &args.source.approx {
        (load_object::<IntegralTestApprox>("approximation", path)?, None)
    } else {
        match args.source.scenario.generate("gap-integral-test", config)? {
            Generated::GapIntegralTest { approx, threshold, .. } => (approx, Some(threshold)),
            other => {
                bail!("a {} scenario does not produce an integral approximation", kind_of(&other))
            }
        }
    };
    config.check_stages("the approximation", g.stage_count())?;
    config.check_depth("the approximation", g.final_stage().depth())?;
    let b = match (&args.b, scenario_threshold) {
        (Some(b), _) => b.clone(),
        (None, Some(t)) => t,
        (None, None) => bail!("--b is required when --approx supplies the stages"),
    };
    if args.max_horizon == 0 {
        bail!("--max-horizon must be at least 1");
    }
    config.check_stages("the horizon", args.max_horizon)?;
    let map = parse_map(&args.map)?;
    let depth = args
        .eval_depth
        .unwrap_or_else(|| g.final_stage().depth() + map.cost() * args.max_horizon);
    config.check_depth("the evaluation depth", depth)?;
    let measure = match &args.measure {
        Some(spec) => parse_measure(spec)?,
        None => ComputableMeasure::uniform(depth),
    };
    let stages: Vec<usize> = match args.stage {
        Some(s) if s >= g.stage_count() => {
            bail!("stage {s} is out of range: the approximation has {} stages", g.stage_count())
        }
        Some(s) => vec![s],
        None => (0..g.stage_count()).collect(),
    };

    let mut table = Table::new([
        "stage",
        "measure",
        "measure_approx12",
        "bound",
        "bound_approx12",
        "set_cylinders",
        "holds",
    ]);
    let mut rows = Vec::new();
    let mut failing = Vec::new();
    for s in stages {
        let report = step_gap_test(&g, &map, &measure, &args.a, &b, s, args.max_horizon, depth)?;
        let [me, ma] = rat_cells(&report.measure);
        let [be2, ba2] = rat_cells(&report.bound);
        table.row([
            report.stage.to_string(),
            me,
            ma,
            be2,
            ba2,
            report.set.generators().len().to_string(),
            report.holds.to_string(),
        ]);
        if !report.holds {
            failing.push(report.stage);
        }
        rows.push(json!({
            "stage": report.stage,
            "measure": rat_value(&report.measure),
            "bound": rat_value(&report.bound),
            "set": serde_json::to_value(&report.set)?,
            "holds": report.holds,
        }));
    }
    let all_hold = failing.is_empty();
    let value = json!({
        "command": "ergodic ow-test",
        "a": exact(&args.a),
        "b": exact(&b),
        "horizon": args.max_horizon,
        "depth": depth,
        "stages": rows,
        "holds": all_hold,
    });
    sink.report(config.format, &value, &table)?;
    if all_hold {
        Ok(Verdict::Clean)
    } else {
        emit_bundle(
            "ergodic ow-test",
            &format!("gap-set measure exceeds its bound at stage(s) {failing:?}"),
            json!({
                "approx": g,
                "map": map,
                "measure": measure,
                "a": exact(&args.a),
                "b": exact(&b),
                "horizon": args.max_horizon,
                "depth": depth,
            }),
        );
        Ok(Verdict::Violation)
    }
}

#[derive(Args)]
pub struct ErgodicPreserveArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Cell map: `shift`, `odometer`, or a rule-table JSON file
    /// (default: the scenario's map).
    #[arg(long)]
    map: Option<String>,
    /// Measure: `uniform:<depth>` or a measure JSON file (default:
    /// the scenario's measure).
    #[arg(long)]
    measure: Option<String>,
    /// Depth of the compared cylinders (default: the measure's).
    #[arg(long)]
    eval_depth: Option<usize>,
}

fn ergodic_preserve(
    args: &ErgodicPreserveArgs,
    config: &RunConfig,
    sink: &Sink,
) -> Result<Verdict> {
    let (map, measure) = if args.map.is_some() && args.measure.is_some() {
        (
            parse_map(args.map.as_deref().unwrap())?,
            parse_measure(args.measure.as_deref().unwrap())?,
        )
    } else {
        match args.scenario.generate("ergodic-pair", config)? {
            Generated::ErgodicPair { map, measure, .. } => {
                let map = match args.map.as_deref() {
                    Some(spec) => parse_map(spec)?,
                    None => map,
                };
                let measure = match args.measure.as_deref() {
                    Some(spec) => parse_measure(spec)?,
                    None => measure,
                };
                (map, measure)
            }
            other => bail!("a {} scenario does not carry a map and measure", kind_of(&other)),
        }
    };
    let depth = args.eval_depth.unwrap_or_else(|| measure.depth());
    config.check_depth("the evaluation depth", depth)?;
    let report = preservation_check(&map, &measure, depth)?;

    let mut table =
        Table::new(["cost", "checked_depth", "cells_checked", "first_violation", "holds"]);
    let violation_text = report
        .first_violation
        .as_ref()
        .map(|v| {
            format!(
                "cell {} has mass {} but its preimage has mass {}",
                v.sigma, v.cell_mass, v.preimage_mass
            )
        })
        .unwrap_or_default();
    table.row([
        report.cost.to_string(),
        report.checked_depth.to_string(),
        report.cells_checked.to_string(),
        violation_text.clone(),
        report.holds.to_string(),
    ]);
    let value = json!({
        "command": "ergodic preserve",
        "cost": report.cost,
        "checked_depth": report.checked_depth,
        "cells_checked": report.cells_checked,
        "first_violation": report.first_violation.as_ref().map(|v| json!({
            "cell": v.sigma.to_string(),
            "cell_mass": rat_value(&v.cell_mass),
            "preimage_mass": rat_value(&v.preimage_mass),
        })),
        "holds": report.holds,
    });
    sink.report(config.format, &value, &table)?;
    if report.holds {
        Ok(Verdict::Clean)
    } else {
        emit_bundle(
            "ergodic preserve",
            &violation_text,
            json!({ "map": map, "measure": measure, "depth": depth }),
        );
        Ok(Verdict::Violation)
    }
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of consecutive seeds generated and checked.
    #[arg(long, default_value_t = 16)]
    seeds: u64,
}

fn sweep_cmd(args: &SweepArgs, config: &RunConfig, sink: &Sink) -> Result<Verdict> {
    if args.scenario.scenario.is_none() && args.scenario.kind.is_none() {
        bail!("sweep needs --kind or --scenario");
    }
    let scenario = args.scenario.resolve("")?;
    crate::source::check_params(&scenario.params, config)?;
    let report = sweep(&scenario.params, args.seeds)?;

    let mut table = Table::new(["kind", "runs", "checks", "failures", "all_hold"]);
    table.row([
        report.kind.clone(),
        report.runs.to_string(),
        report.checks.to_string(),
        report.failures.len().to_string(),
        report.all_hold.to_string(),
    ]);
    let value = json!({
        "command": "sweep",
        "report": serde_json::to_value(&report)?,
    });
    sink.report(config.format, &value, &table)?;
    if report.all_hold {
        Ok(Verdict::Clean)
    } else {
        emit_bundle(
            "sweep",
            &format!("{} failed check(s) out of {}", report.failures.len(), report.checks),
            json!({ "failures": report.failures }),
        );
        Ok(Verdict::Violation)
    }
}
