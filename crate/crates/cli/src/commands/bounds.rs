use std::time::Instant;

use homeadam::bounds::{
    measure_constants, theorem_bound_rhs, theorem_bound_value, trace_recursion_partial,
    AnalysisConstants, Regime, Theorem,
};
use homeadam::numkit::RngStream;
use homeadam::problems::streams;
use homeadam::Error;
use serde::Serialize;
use serde_json::json;

use super::{finish, open_run_dir, ConstantsSummary, Outcome, RunSummary, Verdict};
use crate::config::{ConstantSource, EtaSchedule, ExperimentConfig};
use crate::error::CliError;
use crate::output::{Cell, Csv};

#[derive(Debug, Clone, Serialize)]
struct RecursionDetail {
    regime: String,
    lambda_index: usize,
    lambda: f64,
    rows: usize,
    overflow_step: Option<u64>,
    skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct BoundRow {
    theorem: String,
    horizon: f64,
    eta: f64,
    value: Option<f64>,
    status: String,
    message: Option<String>,
}

fn constants(cfg: &ExperimentConfig) -> Result<(AnalysisConstants, Option<ConstantsSummary>), CliError> {
    let kind = cfg.optimizer.kinds[0];
    let hp = cfg.hyper_params(kind)?;
    let gen = cfg.generator()?;
    match cfg.bounds.source {
        ConstantSource::Measured => {
            let data = gen.dataset(cfg.problem.n)?;
            let m = measure_constants(
                gen.problem(),
                &data,
                kind,
                &hp,
                &gen.theta0(),
                cfg.run.horizon,
                RngStream::new(cfg.problem.seed, streams::INDEX),
                cfg.bounds.probes,
            )?;
            Ok((m.constants, Some(m.stats.into())))
        }
        ConstantSource::Given => {
            let b = &cfg.bounds;
            let k = AnalysisConstants {
                g: b.g,
                l: b.l,
                sigma: b.sigma,
                rho: b.rho,
                eps: hp.eps,
                tau: cfg.optimizer.tau,
                beta1: hp.beta1,
                beta2: hp.beta2,
                eta: hp.eta,
                lam: hp.lambda,
                n: cfg.problem.n as f64,
                horizon: b.horizon as f64,
                c: (1.0 - hp.beta1) / hp.eta,
                gamma: b.gamma,
                f0_minus_fstar: b.f0_gap,
                dim: gen.problem().dim(),
                theta0_norm: Some(gen.theta0().l2_norm()),
            };
            Ok((k, None))
        }
    }
}

/// Divergence recursions for both regimes over `bounds.lambdas`, and the
/// convergence bounds across `bounds.t_grid`.
pub fn cmd_bounds(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let (mut base, stats) = constants(cfg)?;
    base.gamma = cfg.bounds.gamma;
    let dir = open_run_dir(cfg)?;
    let mut summary = RunSummary::new(cfg, "bounds");
    summary.constants = stats;
    summary.min_rho = Some(base.rho);

    let mut recursions = Vec::new();
    let lambdas = &cfg.bounds.lambdas;
    let base_lambda = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    for regime in [Regime::Srf, Regime::Home] {
        let mut varphi_by_lambda: Vec<(f64, Vec<f64>)> = Vec::new();
        for (k, &lam) in lambdas.iter().enumerate() {
            let kc = AnalysisConstants { lam, ..base };
            let mut detail = RecursionDetail {
                regime: regime.name().to_string(),
                lambda_index: k,
                lambda: lam,
                rows: 0,
                overflow_step: None,
                skipped: None,
            };
            match trace_recursion_partial(&kc, regime, cfg.bounds.horizon) {
                Ok(tr) => {
                    let mut csv = Csv::new(&["t", "phi", "psi", "varphi"]);
                    for s in &tr.states {
                        csv.push(vec![Cell::from(s.t), s.phi.into(), s.psi.into(), s.varphi.into()]);
                    }
                    dir.write_csv(&format!("recursion_{}_lam{k}.csv", regime.name()), &csv)?;
                    detail.rows = tr.states.len();
                    detail.overflow_step = tr.overflow_step;
                    if let Some(step) = tr.overflow_step {
                        summary.verdicts.push(Verdict::new(
                            format!("overflow_{}_lam{k}", regime.name()),
                            Outcome::Violated,
                            format!("recursion overflowed f64 range at step {step}"),
                        ));
                    }
                    varphi_by_lambda.push((lam, tr.states.iter().map(|s| s.varphi).collect()));
                }
                Err(e) => detail.skipped = Some(e.to_string()),
            }
            recursions.push(detail);
        }
        // Decay never increases the parameter divergence.
        if let Some((_, reference)) = varphi_by_lambda.iter().find(|(l, _)| *l == base_lambda) {
            for (lam, phi) in varphi_by_lambda.iter().filter(|(l, _)| *l > base_lambda) {
                let rows = phi.len().min(reference.len());
                let holds = (0..rows).all(|t| phi[t] <= reference[t]);
                summary.verdicts.push(Verdict::new(
                    format!("decay_ordering_{}_lambda{lam:e}", regime.name()),
                    if holds { Outcome::Holds } else { Outcome::Violated },
                    format!("varphi(lambda={lam:e}) <= varphi(lambda={base_lambda:e}) on {rows} rows"),
                ));
            }
        }
    }

    let mut bound_csv = Csv::new(&["theorem", "T", "eta", "value", "status"]);
    let mut bound_rows = Vec::new();
    for &t in &cfg.bounds.t_grid {
        let eta = match cfg.bounds.eta_schedule {
            EtaSchedule::Fixed => base.eta,
            EtaSchedule::InvSqrt => 1.0 / t.sqrt(),
        };
        let k = AnalysisConstants {
            horizon: t,
            eta,
            c: cfg.bounds.c.unwrap_or((1.0 - base.beta1) / eta),
            ..base
        };
        for which in Theorem::ALL {
            let (value, status, message) = match theorem_bound_rhs(which, &k) {
                Ok(v) => (Some(v), "ok", None),
                Err(Error::Precondition(msg)) => {
                    eprintln!("precondition violated: {msg}");
                    (
                        theorem_bound_value(which, &k).ok(),
                        "precondition_violated",
                        Some(format!("precondition violated: {msg}")),
                    )
                }
                Err(e) => (None, "error", Some(e.to_string())),
            };
            bound_csv.push(vec![
                which.name().into(),
                t.into(),
                eta.into(),
                value.map_or(Cell::from(""), Cell::from),
                status.into(),
            ]);
            bound_rows.push(BoundRow {
                theorem: which.name().to_string(),
                horizon: t,
                eta,
                value,
                status: status.to_string(),
                message,
            });
        }
    }
    dir.write_csv("bound_rhs.csv", &bound_csv)?;

    summary.details = json!({
        "constants": base,
        "recursions": recursions,
        "bounds": bound_rows,
    });
    finish(&dir, summary, started)
}
