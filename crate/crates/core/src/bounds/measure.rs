use serde::{Deserialize, Serialize};

use super::AnalysisConstants;
use crate::error::{Error, Result};
use crate::numkit::{RngStream, Vec64};
use crate::optim::{HyperParams, OptimizerKind};
use crate::problems::{empirical_risk, grad_stats, Dataset, GradStats, Problem};
use crate::stability::{train, TrainConfig, TrainOutcome};

/// Constants read off one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub constants: AnalysisConstants,
    pub stats: GradStats,
    /// Realized `ρ_t` for `t = 1..=T`.
    pub rho_trace: Vec<f64>,
    pub probes: usize,
}

/// Trains `kind` for `horizon` steps, then measures `Ĝ`, `L̂`, `σ̂` at
/// `θ_0` and `n_probes` evenly spaced iterates, and `ρ` as the smallest
/// realized `ρ_t`.
///
/// `F(θ_0) − F*` is taken as `F_S(θ_0)`, an upper bound for the
/// nonnegative losses used here. `c` defaults to `(1 − β1)/η` so that
/// `β1 = 1 − cη` holds exactly; `τ` falls back to 1 for non-switching kinds.
/// `ρ` is `+∞` when the run records no `ρ_t`.
#[allow(clippy::too_many_arguments)]
pub fn measure_constants(
    p: &Problem,
    data: &Dataset,
    kind: OptimizerKind,
    hp: &HyperParams,
    theta0: &Vec64,
    horizon: u64,
    index_stream: RngStream,
    n_probes: u64,
) -> Result<Measured> {
    if horizon == 0 || n_probes == 0 {
        return Err(Error::InvalidArgument(
            "measuring constants needs T >= 1 and at least one probe".into(),
        ));
    }
    let cfg = TrainConfig {
        snapshot_every: Some((horizon / n_probes).max(1)),
        ..TrainConfig::new(kind, *hp, horizon, index_stream)
    };
    let out = train(p, data, theta0, &cfg)?;
    constants_from_run(p, data, hp, theta0, &out)
}

/// Constants from a finished run whose snapshots serve as probe points.
pub fn constants_from_run(
    p: &Problem,
    data: &Dataset,
    hp: &HyperParams,
    theta0: &Vec64,
    out: &TrainOutcome,
) -> Result<Measured> {
    if let Some(step) = out.blow_up {
        return Err(Error::TrainBlowUp { step });
    }
    let stats = grad_stats(p, data, &out.snapshots)?;
    let rho_trace: Vec<f64> = out.steps.iter().map(|s| s.rho_t).collect();
    let rho = rho_trace.iter().cloned().fold(f64::INFINITY, f64::min);
    let horizon = out.steps.len() as u64;
    let constants = AnalysisConstants {
        g: stats.g_hat,
        l: stats.l_hat,
        sigma: stats.sigma_hat,
        rho,
        eps: hp.eps,
        tau: hp.tau.unwrap_or(1.0),
        beta1: hp.beta1,
        beta2: hp.beta2,
        eta: hp.eta,
        lam: hp.lambda,
        n: data.n() as f64,
        horizon: horizon as f64,
        c: hp.c.unwrap_or((1.0 - hp.beta1) / hp.eta),
        gamma: hp.gamma.unwrap_or(0.75),
        f0_minus_fstar: empirical_risk(p, theta0, data)?,
        dim: p.dim(),
        theta0_norm: Some(theta0.l2_norm()),
    };
    Ok(Measured {
        constants,
        stats,
        rho_trace,
        probes: out.snapshots.len(),
    })
}
