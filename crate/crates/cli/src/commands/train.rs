use std::time::Instant;

use homeadam::bounds::{constants_from_run, Theorem};
use homeadam::numkit::RngStream;
use homeadam::problems::{empirical_risk, streams};
use homeadam::stability::{train, TrainConfig};
use serde_json::json;

use super::{bound_verdict, finish, open_run_dir, theorem_for, Outcome, RunSummary, Verdict};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{Csv, Cell};

pub const TRACE_HEADER: [&str; 6] = ["t", "loss", "grad_norm", "rho_t", "switched_home", "step_norm"];

/// One trajectory: `trace.csv` with per-step diagnostics and a summary
/// with measured constants and the matching convergence-bound verdict.
///
/// A blow-up still writes both files, then returns [`CliError::BlowUp`].
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let kind = cfg.single_kind()?;
    let hp = cfg.hyper_params(kind)?;
    let gen = cfg.generator()?;
    let dir = open_run_dir(cfg)?;

    let p = gen.problem();
    let data = gen.dataset(cfg.problem.n)?;
    let theta0 = gen.theta0();
    let tcfg = TrainConfig {
        batch: cfg.run.batch,
        snapshot_every: Some((cfg.run.horizon / cfg.bounds.probes).max(1)),
        ..TrainConfig::new(kind, hp, cfg.run.horizon, RngStream::new(cfg.problem.seed, streams::INDEX))
    };
    let out = train(p, &data, &theta0, &tcfg)?;

    let mut csv = Csv::new(&TRACE_HEADER);
    for s in &out.steps {
        csv.push(vec![
            Cell::from(s.t),
            s.loss.into(),
            s.grad_norm.into(),
            s.rho_t.into(),
            s.switched_home.into(),
            s.step_norm.into(),
        ]);
    }
    dir.write_csv("trace.csv", &csv)?;

    let mut summary = RunSummary::new(cfg, "train");
    summary.blow_up_step = out.blow_up;
    summary.final_risk = out.steps.last().map(|s| s.loss);
    summary.final_grad_norm = out.steps.last().map(|s| s.grad_norm);
    if !out.steps.is_empty() {
        let rhos = out.steps.iter().map(|s| s.rho_t);
        summary.min_rho = Some(rhos.clone().fold(f64::INFINITY, f64::min));
        summary.mean_rho = Some(rhos.sum::<f64>() / out.steps.len() as f64);
    }
    summary.switch_events = out.steps.iter().filter(|s| s.switched_home > 0.0).count() as u64;
    let mean_grad_norm = out.mean_grad_norm();
    summary.details = json!({
        "initial_risk": empirical_risk(p, &theta0, &data)?,
        "mean_grad_norm": mean_grad_norm,
        "steps": out.steps.len(),
    });

    if let Some(step) = out.blow_up {
        summary.verdicts.push(Verdict::new(
            "run",
            Outcome::Violated,
            format!("non-finite iterate at step {step}"),
        ));
        finish(&dir, summary, started)?;
        return Err(CliError::BlowUp {
            step,
            context: format!("{kind} training"),
        });
    }

    match constants_from_run(p, &data, &hp, &theta0, &out) {
        Ok(mut m) => {
            summary.constants = Some(m.stats.into());
            if let Some(which) = theorem_for(kind) {
                if which == Theorem::AppFEw {
                    m.constants.theta0_norm = Some(theta0.linf_norm());
                }
                summary.verdicts.push(bound_verdict(which, &m.constants, mean_grad_norm));
            }
        }
        Err(e) => summary
            .verdicts
            .push(Verdict::new("constants", Outcome::Unavailable, e.to_string())),
    }
    finish(&dir, summary, started)
}
