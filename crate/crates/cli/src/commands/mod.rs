mod bounds;
mod plotdata;
mod presets;
mod stability;
mod train;

use std::time::Instant;

use homeadam::bounds::{bound_preconditions, theorem_bound_value, AnalysisConstants, Regime, Theorem};
use homeadam::optim::OptimizerKind;
use homeadam::problems::GradStats;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::RunDir;

pub use bounds::cmd_bounds;
pub use plotdata::{cmd_plotdata, PLOTDATA_HEADER};
pub use presets::presets_table;
pub use stability::cmd_stability;
pub use train::cmd_train;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Violated,
    PreconditionViolated,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, outcome: Outcome, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            outcome,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsSummary {
    pub g_hat: f64,
    pub l_hat: f64,
    pub sigma_hat: f64,
}

impl From<GradStats> for ConstantsSummary {
    fn from(s: GradStats) -> Self {
        Self {
            g_hat: s.g_hat,
            l_hat: s.l_hat,
            sigma_hat: s.sigma_hat,
        }
    }
}

/// What every command writes to `summary.json`. Everything except
/// `wall_time_s` is a function of the resolved config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub command: String,
    pub kinds: Vec<String>,
    pub final_risk: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub min_rho: Option<f64>,
    pub mean_rho: Option<f64>,
    pub switch_events: u64,
    pub blow_up_step: Option<u64>,
    pub wall_time_s: f64,
    pub constants: Option<ConstantsSummary>,
    pub verdicts: Vec<Verdict>,
    /// Command-specific results.
    pub details: serde_json::Value,
}

impl RunSummary {
    fn new(cfg: &ExperimentConfig, command: &str) -> Self {
        Self {
            name: cfg.name.clone(),
            command: command.to_string(),
            kinds: cfg.optimizer.kinds.iter().map(|k| k.name().to_string()).collect(),
            final_risk: None,
            final_grad_norm: None,
            min_rho: None,
            mean_rho: None,
            switch_events: 0,
            blow_up_step: None,
            wall_time_s: 0.0,
            constants: None,
            verdicts: Vec::new(),
            details: serde_json::Value::Null,
        }
    }
}

/// Creates the run directory and echoes the resolved config into it.
fn open_run_dir(cfg: &ExperimentConfig) -> Result<RunDir, CliError> {
    let dir = RunDir::create(&cfg.output.dir, cfg.output.csv, cfg.output.json)?;
    dir.write_text("config.resolved", &cfg.to_text())?;
    Ok(dir)
}

fn finish(dir: &RunDir, mut summary: RunSummary, started: Instant) -> Result<RunSummary, CliError> {
    summary.wall_time_s = started.elapsed().as_secs_f64();
    dir.write_json("summary.json", &summary)?;
    Ok(summary)
}

/// The convergence bound matching an optimizer, if one applies.
pub fn theorem_for(kind: OptimizerKind) -> Option<Theorem> {
    use OptimizerKind::*;
    match kind {
        AdamSrf | AdamWSrf => Some(Theorem::Thm3Srf),
        HomeAdam | HomeAdamW => Some(Theorem::Thm4Home),
        HomeAdamEw | HomeAdamWEw => Some(Theorem::AppFEw),
        _ => None,
    }
}

/// The divergence recursion matching an optimizer: the home form needs
/// `τ ≥ 1`, the srf form covers the remaining adaptive srf kinds.
pub fn regime_for(kind: OptimizerKind, tau: f64) -> Option<Regime> {
    if kind.is_home() && tau >= 1.0 {
        Some(Regime::Home)
    } else if kind.is_srf() || kind.is_home() {
        Some(Regime::Srf)
    } else {
        None
    }
}

/// `measured ≤ rhs`, or the violated conditions verbatim.
pub fn bound_verdict(which: Theorem, k: &AnalysisConstants, measured: f64) -> Verdict {
    let name = format!("{}_T{}", which.name(), k.horizon);
    let bad = bound_preconditions(which, k);
    if !bad.is_empty() {
        return Verdict::new(
            name,
            Outcome::PreconditionViolated,
            format!("precondition violated: {}: {}", which.name(), bad.join("; ")),
        );
    }
    match theorem_bound_value(which, k) {
        Ok(rhs) if measured <= rhs => Verdict::new(name, Outcome::Holds, format!("{measured:e} <= {rhs:e}")),
        Ok(rhs) => Verdict::new(name, Outcome::Violated, format!("{measured:e} > {rhs:e}")),
        Err(e) => Verdict::new(name, Outcome::Unavailable, e.to_string()),
    }
}
