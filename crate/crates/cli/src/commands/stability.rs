use std::time::Instant;

use homeadam::bounds::{compare_trace_to_bound, measure_constants, trace_recursion_partial, BoundComparison};
use homeadam::numkit::RngStream;
use homeadam::optim::OptimizerKind;
use homeadam::problems::streams;
use homeadam::stability::{stability_sweep, SweepConfig, SweepTable};
use serde::Serialize;
use serde_json::json;

use super::{finish, open_run_dir, regime_for, Outcome, RunSummary, Verdict};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{Cell, Csv};

#[derive(Debug, Clone, Serialize)]
struct RowDetail {
    kind: String,
    n: usize,
    mean_final_div: f64,
    eps_hat: f64,
    gap_hat: f64,
    n_finite: usize,
    n_blowups: usize,
    min_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
struct BoundDetail {
    kind: String,
    n: usize,
    regime: Option<String>,
    comparison: Option<BoundComparison>,
    overflow_step: Option<u64>,
    note: Option<String>,
}

/// The predicted mean divergence `ϕ_t/N` for one sweep row, padded with
/// `+∞` past a recursion overflow.
fn predicted_divergence(
    cfg: &ExperimentConfig,
    kind: OptimizerKind,
    n: usize,
) -> Result<(homeadam::bounds::Regime, Vec<f64>, Option<u64>), String> {
    let hp = cfg.hyper_params(kind).map_err(|e| e.to_string())?;
    let regime = regime_for(kind, cfg.optimizer.tau)
        .ok_or_else(|| format!("no divergence recursion for {kind}"))?;
    let gen = cfg.generator().map_err(|e| e.to_string())?;
    let data = gen.dataset(n).map_err(|e| e.to_string())?;
    let measured = measure_constants(
        gen.problem(),
        &data,
        kind,
        &hp,
        &gen.theta0(),
        cfg.run.horizon,
        RngStream::new(cfg.problem.seed, streams::INDEX),
        cfg.bounds.probes,
    )
    .map_err(|e| format!("constants unavailable: {e}"))?;
    let tr = trace_recursion_partial(&measured.constants, regime, cfg.run.horizon)
        .map_err(|e| e.to_string())?;
    let mut pred: Vec<f64> = tr.states.iter().map(|s| s.varphi).collect();
    pred.resize(cfg.run.horizon as usize, f64::INFINITY);
    Ok((regime, pred, tr.overflow_step))
}

/// Twin-run sweeps over `run.ns` for every configured kind, plus per-N
/// checks of the mean divergence against the recursion bound.
pub fn cmd_stability(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let gen = cfg.generator()?;
    let kinds = cfg.optimizer.kinds.clone();
    let mut tables: Vec<(OptimizerKind, SweepTable)> = Vec::new();
    for &kind in &kinds {
        let sc = SweepConfig {
            probe_size: cfg.run.probe_size,
            heldout_size: cfg.run.heldout_size,
            ..SweepConfig::new(
                kind,
                cfg.hyper_params(kind)?,
                gen.clone(),
                cfg.run.ns.clone(),
                cfg.run.horizon,
                cfg.run.n_pairs,
                cfg.problem.seed,
            )
        };
        tables.push((kind, stability_sweep(&sc)?));
    }
    let dir = open_run_dir(cfg)?;

    for (kind, table) in &tables {
        for r in &table.replicates {
            let rel = format!("sweep/{}/N{}/pair{}/trace.csv", kind.name(), r.n, r.pair);
            if cfg.output.csv {
                dir.write_text(&rel, &r.trace.to_csv())?;
            }
        }
    }

    let mut sweep = Csv::new(&[
        "kind", "n", "mean_final_div", "eps_hat", "gap_hat", "n_finite", "n_blowups", "min_rho",
    ]);
    let mut rows = Vec::new();
    for (kind, table) in &tables {
        for r in &table.rows {
            sweep.push(vec![
                kind.name().into(),
                r.n.into(),
                r.mean_final_div.into(),
                r.eps_hat.into(),
                r.gap_hat.into(),
                r.n_finite.into(),
                r.n_blowups.into(),
                r.min_rho.into(),
            ]);
            rows.push(RowDetail {
                kind: kind.name().to_string(),
                n: r.n,
                mean_final_div: r.mean_final_div,
                eps_hat: r.eps_hat,
                gap_hat: r.gap_hat,
                n_finite: r.n_finite,
                n_blowups: r.n_blowups,
                min_rho: r.min_rho,
            });
        }
    }
    dir.write_csv("sweep.csv", &sweep)?;

    // Side-by-side columns per kind, in canonical kind order.
    let mut header = vec!["n".to_string()];
    for (kind, _) in &tables {
        header.push(format!("{}_eps_hat", kind.name()));
        header.push(format!("{}_mean_final_div", kind.name()));
    }
    let mut paired = Csv::new(&header);
    for (i, &n) in cfg.run.ns.iter().enumerate() {
        let mut row = vec![Cell::from(n)];
        for (_, table) in &tables {
            row.push(table.rows[i].eps_hat.into());
            row.push(table.rows[i].mean_final_div.into());
        }
        paired.push(row);
    }
    dir.write_csv("comparison.csv", &paired)?;

    let mut summary = RunSummary::new(cfg, "stability");
    let mut bound_details = Vec::new();
    let mut mean_header = vec!["t".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut compare = Csv::new(&["kind", "n", "regime", "all_hold", "max_violation_ratio", "vacuous_from"]);
    for (kind, table) in &tables {
        for row in &table.rows {
            let label = format!("{}_N{}", kind.name(), row.n);
            mean_header.push(format!("{label}_div"));
            columns.push(row.mean_div_trace.clone());
            let mut detail = BoundDetail {
                kind: kind.name().to_string(),
                n: row.n,
                regime: None,
                comparison: None,
                overflow_step: None,
                note: None,
            };
            match predicted_divergence(cfg, *kind, row.n) {
                Ok((regime, pred, overflow)) => {
                    let scaled: Vec<f64> = pred.iter().map(|p| p / row.n as f64).collect();
                    mean_header.push(format!("{label}_bound"));
                    columns.push(scaled);
                    let cmp = compare_trace_to_bound(&row.mean_div_trace, &pred, row.n as f64)?;
                    compare.push(vec![
                        kind.name().into(),
                        row.n.into(),
                        regime.name().into(),
                        cmp.all_hold.into(),
                        cmp.max_violation_ratio.into(),
                        cmp.vacuous_from.map_or(Cell::from(""), Cell::from),
                    ]);
                    let outcome = if cmp.all_hold { Outcome::Holds } else { Outcome::Violated };
                    let mut text = format!(
                        "mean div_l2 vs phi_t/N ({} regime), max ratio {:e}",
                        regime.name(),
                        cmp.max_violation_ratio
                    );
                    if let Some(s) = overflow {
                        text.push_str(&format!("; recursion overflows at step {s}"));
                    }
                    summary.verdicts.push(Verdict::new(format!("divergence_{label}"), outcome, text));
                    detail.regime = Some(regime.name().to_string());
                    detail.comparison = Some(cmp);
                    detail.overflow_step = overflow;
                }
                Err(note) => {
                    summary.verdicts.push(Verdict::new(
                        format!("divergence_{label}"),
                        Outcome::Unavailable,
                        note.clone(),
                    ));
                    detail.note = Some(note);
                }
            }
            bound_details.push(detail);
        }
    }
    dir.write_csv("bound_compare.csv", &compare)?;
    let mut mean = Csv::new(&mean_header);
    for t in 0..cfg.run.horizon as usize {
        let mut row = vec![Cell::from(t as u64 + 1)];
        row.extend(columns.iter().map(|c| Cell::from(c[t])));
        mean.push(row);
    }
    dir.write_csv("mean_div.csv", &mean)?;

    let all_rhos: Vec<f64> = tables
        .iter()
        .flat_map(|(_, t)| t.replicates.iter())
        .flat_map(|r| r.trace.records.iter().map(|x| x.rho_t))
        .collect();
    if !all_rhos.is_empty() {
        summary.min_rho = Some(all_rhos.iter().cloned().fold(f64::INFINITY, f64::min));
        summary.mean_rho = Some(all_rhos.iter().sum::<f64>() / all_rhos.len() as f64);
    }
    summary.switch_events = tables
        .iter()
        .flat_map(|(_, t)| t.replicates.iter())
        .flat_map(|r| r.trace.records.iter())
        .filter(|x| x.switched_home > 0.0)
        .count() as u64;
    summary.blow_up_step = tables
        .iter()
        .flat_map(|(_, t)| t.replicates.iter())
        .filter_map(|r| r.blow_up)
        .min();
    let slopes: serde_json::Map<String, serde_json::Value> = tables
        .iter()
        .map(|(k, t)| (k.name().to_string(), json!(t.slope)))
        .collect();
    summary.details = json!({
        "rows": rows,
        "slopes": slopes,
        "bounds": bound_details,
    });
    finish(&dir, summary, started)
}
