//! Input plumbing: run limits, scenario resolution (file or inline
//! parameters), and typed object files.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cantorlab_core::{generate, CellMap, ComputableMeasure, Generated, Scenario, ScenarioParams};
use clap::Args;
use serde::de::DeserializeOwned;

/// Hard ceiling on the working depth: every exhaustive check walks the
/// `2^depth` cells of that level, so this caps a single enumeration at
/// around sixteen million nodes.
pub const MAX_DEPTH_LIMIT: usize = 24;

/// Ceiling on `depth_limit * stage_limit`, since staged checks repeat
/// the level walk once per stage.
pub const MAX_DEPTH_STAGE_PRODUCT: usize = 768;

/// Run-wide limits and output selection, shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Largest working depth any loaded or generated object may have.
    #[arg(long, global = true, default_value_t = cantorlab_core::DEFAULT_DEPTH_LIMIT)]
    pub depth_limit: usize,
    /// Largest stage or iteration count any staged object may have.
    #[arg(long, global = true, default_value_t = 32)]
    pub stage_limit: usize,
    /// Report and trace format. Object-emitting commands always write
    /// JSON so their output re-parses.
    #[arg(long, global = true, value_enum, default_value_t = crate::output::Format::Json)]
    pub format: crate::output::Format,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Refuses configurations beyond the documented enumeration budget.
    pub fn validate(&self) -> Result<()> {
        if self.depth_limit > MAX_DEPTH_LIMIT {
            bail!(
                "depth limit {} exceeds the enumeration budget (max {MAX_DEPTH_LIMIT}; \
                 level walks touch 2^depth cells)",
                self.depth_limit
            );
        }
        let product = self.depth_limit.saturating_mul(self.stage_limit);
        if product > MAX_DEPTH_STAGE_PRODUCT {
            bail!(
                "depth limit {} x stage limit {} = {product} exceeds the enumeration \
                 budget (max {MAX_DEPTH_STAGE_PRODUCT})",
                self.depth_limit,
                self.stage_limit
            );
        }
        Ok(())
    }

    pub fn check_depth(&self, what: &str, depth: usize) -> Result<()> {
        if depth > self.depth_limit {
            bail!(
                "{what} has depth {depth}, over the configured limit {} \
                 (raise --depth-limit up to {MAX_DEPTH_LIMIT})",
                self.depth_limit
            );
        }
        Ok(())
    }

    pub fn check_stages(&self, what: &str, stages: usize) -> Result<()> {
        if stages > self.stage_limit {
            bail!(
                "{what} has {stages} stages, over the configured limit {} \
                 (raise --stage-limit within the budget)",
                self.stage_limit
            );
        }
        Ok(())
    }
}

/// Scenario source shared by generating commands: either a scenario
/// file in the versioned JSON schema, or inline parameters.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario file (versioned JSON schema; see the README).
    #[arg(long, conflicts_with = "kind")]
    pub scenario: Option<PathBuf>,
    /// Inline scenario kind: omega-interval, porous-class, mass-cdf,
    /// oscillator, gap-integral-test, or ergodic-pair.
    #[arg(long)]
    pub kind: Option<String>,
    /// Working depth for inline scenarios.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Stage count for inline omega-interval, mass-cdf, and
    /// gap-integral-test scenarios.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Band crossings for inline oscillator scenarios (default 1).
    #[arg(long)]
    pub swings: Option<usize>,
    /// Construction levels: gap-integral-test scenarios and the
    /// layered lebesgue builds (default 2 there).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Average horizon for inline ergodic-pair scenarios.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Seed for inline scenarios.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ScenarioArgs {
    fn need(&self, field: &str, value: Option<usize>, kind: &str) -> Result<usize> {
        value.ok_or_else(|| anyhow!("inline {kind} scenarios need --{field}"))
    }

    /// Builds the scenario, from the file when given, otherwise from
    /// the inline parameters with `default_kind` filling a missing
    /// `--kind`.
    pub fn resolve(&self, default_kind: &str) -> Result<Scenario> {
        if let Some(path) = &self.scenario {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read scenario file {}", path.display()))?;
            let scenario: Scenario = serde_json::from_str(&text)
                .with_context(|| format!("malformed scenario file {}", path.display()))?;
            return Ok(scenario);
        }
        let kind = self.kind.as_deref().unwrap_or(default_kind);
        let params = match kind {
            "omega-interval" => ScenarioParams::OmegaInterval {
                depth: self.need("depth", self.depth, kind)?,
                stages: self.need("stages", self.stages, kind)?,
            },
            "porous-class" => {
                ScenarioParams::PorousClass { depth: self.need("depth", self.depth, kind)? }
            }
            "mass-cdf" => ScenarioParams::MassCdf {
                depth: self.need("depth", self.depth, kind)?,
                stages: self.need("stages", self.stages, kind)?,
            },
            "oscillator" => ScenarioParams::Oscillator {
                depth: self.need("depth", self.depth, kind)?,
                swings: self.swings.unwrap_or(1),
            },
            "gap-integral-test" => ScenarioParams::GapIntegralTest {
                depth: self.need("depth", self.depth, kind)?,
                stages: self.need("stages", self.stages, kind)?,
                levels: self.need("levels", self.levels, kind)?,
            },
            "ergodic-pair" => ScenarioParams::ErgodicPair {
                depth: self.need("depth", self.depth, kind)?,
                horizon: self.need("horizon", self.horizon, kind)?,
            },
            other => bail!(
                "unknown scenario kind {other:?} (expected omega-interval, porous-class, \
                 mass-cdf, oscillator, gap-integral-test, or ergodic-pair)"
            ),
        };
        Ok(Scenario::new(format!("cli-{kind}-{}", self.seed), params, self.seed))
    }

    /// Resolves and generates under the run limits.
    pub fn generate(&self, default_kind: &str, config: &RunConfig) -> Result<Generated> {
        let scenario = self.resolve(default_kind)?;
        check_params(&scenario.params, config)?;
        generate(&scenario).context("generating the scenario")
    }
}

pub fn check_params(params: &ScenarioParams, config: &RunConfig) -> Result<()> {
    let (depth, stages) = match params {
        ScenarioParams::OmegaInterval { depth, stages } => (*depth, *stages),
        ScenarioParams::PorousClass { depth } => (*depth, 1),
        ScenarioParams::MassCdf { depth, stages } => (*depth, *stages),
        ScenarioParams::Oscillator { depth, swings } => (*depth, *swings),
        ScenarioParams::GapIntegralTest { depth, stages, levels } => {
            (*depth, (*stages).max(*levels))
        }
        ScenarioParams::ErgodicPair { depth, horizon } => (*depth, *horizon),
    };
    config.check_depth("the scenario", depth)?;
    config.check_stages("the scenario", stages)
}

/// Loads a serialized object from a JSON file.
pub fn load_object<T: DeserializeOwned>(what: &str, path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {what} file {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("malformed {what} file {}", path.display()))
}

/// Parses `shift`, `odometer`, or a rule-table JSON file path.
pub fn parse_map(spec: &str) -> Result<CellMap> {
    match spec {
        "shift" => Ok(CellMap::Shift),
        "odometer" => Ok(CellMap::Odometer),
        path => load_object("cell-map", Path::new(path)),
    }
}

/// Parses `uniform:<depth>` or a measure JSON file path.
pub fn parse_measure(spec: &str) -> Result<ComputableMeasure> {
    if let Some(depth) = spec.strip_prefix("uniform:") {
        let depth: usize = depth
            .parse()
            .map_err(|_| anyhow!("malformed measure spec {spec:?}: depth must be an integer"))?;
        return Ok(ComputableMeasure::uniform(depth));
    }
    load_object("measure", Path::new(spec))
}
