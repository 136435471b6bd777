use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisConstants;
use crate::error::{Error, Result};
use crate::numkit::{draw_index, RngStream, Vec64};
use crate::optim::{pow_t, step, HyperParams, OptState, OptimizerKind};
use crate::problems::{streams, Dataset, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Bound on the gap between two srf directions `m̂/(v̂ + ε)` built from
/// momentum states `(m, v)` and `(m_i, v_i)` at step `t`.
///
/// `ρ_t` is the smallest bias-corrected second moment over both states.
pub fn check_lemma1(
    m: &Vec64,
    m_i: &Vec64,
    v: &Vec64,
    v_i: &Vec64,
    k: &AnalysisConstants,
    t: u64,
) -> Result<Lemma1Check> {
    let d = m.dim();
    for other in [m_i, v, v_i] {
        if other.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: other.dim(),
            });
        }
    }
    if t == 0 {
        return Err(Error::InvalidArgument("t must be >= 1".into()));
    }
    if !(k.beta1 > 0.0 && k.beta1 < 1.0 && k.beta2 > 0.0 && k.beta2 < 1.0) {
        return Err(Error::InvalidArgument("betas must lie in (0, 1)".into()));
    }
    let g = k.g;
    let slack = 1.0 + 1e-12;
    if m.l2_norm() > g * slack || m_i.l2_norm() > g * slack {
        return Err(Error::Precondition("momentum norms must be <= G".into()));
    }
    let g2 = g * g * slack;
    if v.iter().chain(v_i).any(|&x| !(x >= 0.0 && x <= g2)) {
        return Err(Error::Precondition(
            "second moments must lie in [0, G^2]".into(),
        ));
    }
    let bc1 = 1.0 - pow_t(k.beta1, t);
    let bc2 = 1.0 - pow_t(k.beta2, t);
    let v_hat = v.scale(1.0 / bc2);
    let v_hat_i = v_i.scale(1.0 / bc2);
    let rho = v_hat.min_elem().min(v_hat_i.min_elem());
    let rho_hat = rho + k.eps;
    if !(rho_hat > 0.0) {
        return Err(Error::Precondition("rho_t + eps must be > 0".into()));
    }
    let dir = |m: &Vec64, vh: &Vec64| -> Vec64 {
        Vec64::new(
            m.iter()
                .zip(vh)
                .map(|(&mj, &vj)| (mj / bc1) / (vj + k.eps))
                .collect(),
        )
        .expect("non-empty")
    };
    let lhs = dir(m, &v_hat).dist(&dir(m_i, &v_hat_i))?;
    let sqrt_d = (d as f64).sqrt();
    let rhs = sqrt_d / (rho_hat * bc1) * m.dist(m_i)?
        + g * sqrt_d / (bc1 * bc2 * rho_hat * rho_hat) * v.dist(v_i)?;
    Ok(Lemma1Check {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-12 * rhs,
    })
}

/// One trajectory's quantities for the momentum-error recursion:
/// `full_grads[t] = ∇F(θ_t)` and `theta[t] = θ_t` for `t = 0..=T`, and
/// `m[t] = m_t` for `t = 0..=T+1` (raw, not bias-corrected).
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma2Path {
    pub full_grads: Vec<Vec64>,
    pub theta: Vec<Vec64>,
    pub m: Vec<Vec64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Row {
    pub t: u64,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    pub holds: bool,
}

const MIN_SEEDS: usize = 30;

/// Monte-Carlo form of
/// `E‖∇F(θ_t) − m_{t+1}‖² ≤ (1 − cη) E‖∇F(θ_{t−1}) − m_t‖²
///   + (2/(cη)) L² E‖θ_t − θ_{t−1}‖² + c²η²σ²`
/// for `t = 1..=T`, with a `3/√n` sampling allowance on the comparison.
pub fn lemma2_from_paths(
    paths: &[Lemma2Path],
    c: f64,
    eta: f64,
    l_hat: f64,
    sigma_hat: f64,
) -> Result<Vec<Lemma2Row>> {
    let n = paths.len();
    if n < MIN_SEEDS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_SEEDS} trajectories needed, got {n}"
        )));
    }
    let horizon = paths[0].theta.len().saturating_sub(1);
    for p in paths {
        if p.theta.len() != horizon + 1
            || p.full_grads.len() != horizon + 1
            || p.m.len() != horizon + 2
        {
            return Err(Error::InvalidArgument("trajectory lengths disagree".into()));
        }
    }
    let ce = c * eta;
    if !(ce > 0.0 && ce < 1.0) {
        return Err(Error::Precondition("need 0 < c*eta < 1".into()));
    }
    let slack = 1.0 + 3.0 / (n as f64).sqrt();
    let sq = |a: &Vec64, b: &Vec64| a.dist(b).map(|d| d * d);
    let mut rows = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let (mut lhs, mut err_prev, mut moved) = (0.0, 0.0, 0.0);
        for p in paths {
            lhs += sq(&p.full_grads[t], &p.m[t + 1])?;
            err_prev += sq(&p.full_grads[t - 1], &p.m[t])?;
            moved += sq(&p.theta[t], &p.theta[t - 1])?;
        }
        let k = n as f64;
        let (lhs, err_prev, moved) = (lhs / k, err_prev / k, moved / k);
        let rhs = (1.0 - ce) * err_prev
            + 2.0 / ce * l_hat * l_hat * moved
            + ce * ce * sigma_hat * sigma_hat;
        rows.push(Lemma2Row {
            t: t as u64,
            lhs_mean: lhs,
            rhs_mean: rhs,
            holds: lhs <= rhs * slack,
        });
    }
    Ok(rows)
}

/// Runs `n_seeds` independent trajectories of `kind` on `data` (one sample
/// per step) and audits the momentum-error recursion along them.
///
/// `c` defaults to `(1 − β1)/η`; if `hp.c` is set it must reproduce `β1`.
#[allow(clippy::too_many_arguments)]
pub fn check_lemma2_mc(
    p: &Problem,
    data: &Dataset,
    kind: OptimizerKind,
    hp: &HyperParams,
    theta0: &Vec64,
    horizon: u64,
    n_seeds: usize,
    seed: u64,
    l_hat: f64,
    sigma_hat: f64,
) -> Result<Vec<Lemma2Row>> {
    if n_seeds < MIN_SEEDS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_SEEDS} seeds needed, got {n_seeds}"
        )));
    }
    hp.validate_for(kind)?;
    let c = match hp.c {
        Some(c) => {
            if ((1.0 - c * hp.eta) - hp.beta1).abs() > 1e-12 {
                return Err(Error::Precondition("beta1 must equal 1 - c*eta".into()));
            }
            c
        }
        None => (1.0 - hp.beta1) / hp.eta,
    };
    let root = RngStream::new(seed, streams::REPLICATE);
    let paths = (0..n_seeds)
        .into_par_iter()
        .map(|s| {
            let stream = RngStream::new(root.derive_seed(s as u64), streams::INDEX);
            lemma2_path(p, data, kind, hp, theta0, horizon, &stream)
        })
        .collect::<Result<Vec<_>>>()?;
    lemma2_from_paths(&paths, c, hp.eta, l_hat, sigma_hat)
}

fn lemma2_path(
    p: &Problem,
    data: &Dataset,
    kind: OptimizerKind,
    hp: &HyperParams,
    theta0: &Vec64,
    horizon: u64,
    stream: &RngStream,
) -> Result<Lemma2Path> {
    let mut theta = theta0.clone();
    let mut state = OptState::new(p.dim());
    let mut path = Lemma2Path {
        full_grads: Vec::new(),
        theta: Vec::new(),
        m: vec![state.m.clone()],
    };
    // The last step is taken only for its momentum m_{T+1}.
    for t in 0..=horizon {
        path.full_grads.push(p.full_grad(&theta, data)?);
        path.theta.push(theta.clone());
        let j = draw_index(stream, t + 1, data.n())?;
        let (_, g) = p.loss_grad(&theta, data.get(j)?)?;
        let out = step(kind, hp, &state, &theta, &g)?;
        path.m.push(out.state.m.clone());
        theta = out.theta;
        state = out.state;
    }
    Ok(path)
}
