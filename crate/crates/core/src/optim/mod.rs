//! One-step update rules for the square-root-free Adam family, the switching
//! HomeAdam(W) variants and the SGD/SGDM/Adam/AdamW baselines.
//!
//! Every rule shares the same moment bookkeeping:
//!
//! ```text
//! m_t = β1 m_{t-1} + (1 - β1) g_t        m̂_t = m_t / (1 - β1^t)
//! v_t = β2 v_{t-1} + (1 - β2) g_t²       v̂_t = v_t / (1 - β2^t)
//! ```
//!
//! and differs only in the stepsize function `R(v̂)` applied to `m̂`:
//! `1/(v̂ + ε)` for the srf variants, `1/(√v̂ + ε)` for Adam(W) and `1` for the
//! momentum fallback. The Home variants pick between the first and the last
//! depending on whether `v̂` clears the threshold `τ` (globally or per
//! coordinate).

mod presets;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Vec64;

pub use presets::{preset, preset_batch_size, PRESET_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Sgdm,
    SgdmBc,
    Adam,
    AdamW,
    AdamSrf,
    AdamWSrf,
    HomeAdam,
    HomeAdamW,
    HomeAdamEw,
    HomeAdamWEw,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 11] = [
        OptimizerKind::Sgd,
        OptimizerKind::Sgdm,
        OptimizerKind::SgdmBc,
        OptimizerKind::Adam,
        OptimizerKind::AdamW,
        OptimizerKind::AdamSrf,
        OptimizerKind::AdamWSrf,
        OptimizerKind::HomeAdam,
        OptimizerKind::HomeAdamW,
        OptimizerKind::HomeAdamEw,
        OptimizerKind::HomeAdamWEw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "SGD",
            OptimizerKind::Sgdm => "SGDM",
            OptimizerKind::SgdmBc => "SGDM_BC",
            OptimizerKind::Adam => "Adam",
            OptimizerKind::AdamW => "AdamW",
            OptimizerKind::AdamSrf => "AdamSrf",
            OptimizerKind::AdamWSrf => "AdamWSrf",
            OptimizerKind::HomeAdam => "HomeAdam",
            OptimizerKind::HomeAdamW => "HomeAdamW",
            OptimizerKind::HomeAdamEw => "HomeAdamEw",
            OptimizerKind::HomeAdamWEw => "HomeAdamWEw",
        }
    }

    pub fn is_home(self) -> bool {
        matches!(
            self,
            OptimizerKind::HomeAdam
                | OptimizerKind::HomeAdamW
                | OptimizerKind::HomeAdamEw
                | OptimizerKind::HomeAdamWEw
        )
    }

    pub fn is_elementwise(self) -> bool {
        matches!(self, OptimizerKind::HomeAdamEw | OptimizerKind::HomeAdamWEw)
    }

    pub fn is_srf(self) -> bool {
        matches!(self, OptimizerKind::AdamSrf | OptimizerKind::AdamWSrf)
    }

    /// Kinds that require `λ > 0` (decoupled weight decay family).
    pub fn is_decoupled(self) -> bool {
        matches!(
            self,
            OptimizerKind::AdamW
                | OptimizerKind::AdamWSrf
                | OptimizerKind::HomeAdamW
                | OptimizerKind::HomeAdamWEw
        )
    }

    /// Kinds whose update has no `λθ` term at all.
    pub fn forbids_decay(self) -> bool {
        matches!(
            self,
            OptimizerKind::Sgd
                | OptimizerKind::Sgdm
                | OptimizerKind::Adam
                | OptimizerKind::AdamSrf
                | OptimizerKind::HomeAdam
                | OptimizerKind::HomeAdamEw
        )
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    /// Case-insensitive; `_` and `-` are ignored, so `home_adam_w` parses.
    fn from_str(s: &str) -> Result<Self> {
        let squash = |x: &str| {
            x.chars()
                .filter(|c| !matches!(c, '_' | '-'))
                .collect::<String>()
                .to_ascii_lowercase()
        };
        let wanted = squash(s.trim());
        OptimizerKind::ALL
            .into_iter()
            .find(|k| squash(k.name()) == wanted)
            .ok_or_else(|| Error::UnknownName {
                what: "optimizer kind",
                name: s.to_string(),
                valid: OptimizerKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            })
    }
}

/// Optimizer knobs plus the analysis constants `c` (with `β1 = 1 − cη`) and
/// `γ` used by the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lambda: f64,
    /// Switch threshold; `Some(f64::INFINITY)` pins the Home variants to the
    /// momentum branch.
    pub tau: Option<f64>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
}

impl HyperParams {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lambda: 0.0,
            tau: None,
            c: None,
            gamma: None,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| Err(Error::InvalidHyperParams {
            field,
            reason: reason.to_string(),
        });
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta", "must be finite and > 0");
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(field, "must lie in (0, 1)");
            }
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad("eps", "must be finite and >= 0");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be finite and >= 0");
        }
        if self.lambda * self.eta >= 1.0 {
            return bad("lambda", "must satisfy lambda < 1/eta");
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0) {
                return bad("tau", "must be > 0 (+inf allowed)");
            }
        }
        if let Some(c) = self.c {
            if !(c > 0.0 && c.is_finite()) {
                return bad("c", "must be finite and > 0");
            }
        }
        if let Some(g) = self.gamma {
            if !g.is_finite() {
                return bad("gamma", "must be finite");
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, kind: OptimizerKind) -> Result<()> {
        self.validate()?;
        let mismatch = |reason: &str| Err(Error::KindMismatch {
            kind: kind.name().to_string(),
            reason: reason.to_string(),
        });
        if kind.is_home() && self.tau.is_none() {
            return mismatch("tau must be set for Home variants");
        }
        if kind.is_decoupled() && self.lambda <= 0.0 {
            return mismatch("decoupled weight-decay kinds require lambda > 0");
        }
        if kind.forbids_decay() && self.lambda != 0.0 {
            return mismatch("this kind has no weight-decay term; lambda must be 0");
        }
        Ok(())
    }

    /// Threshold for the Home switch (`+∞` when unset).
    pub fn tau_or_inf(&self) -> f64 {
        self.tau.unwrap_or(f64::INFINITY)
    }
}

/// Step counter and raw moments. All-zero at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub t: u64,
    pub m: Vec64,
    pub v: Vec64,
}

impl OptState {
    pub fn new(dim: usize) -> Self {
        Self {
            t: 0,
            m: Vec64::zeros(dim),
            v: Vec64::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// `min_j (v̂_t)_j`.
    pub rho_t: f64,
    /// Fraction of coordinates that took the momentum (SGDM) branch. For the
    /// global Home switch this is 0 or 1; non-Home kinds report 0.
    pub switched_home: f64,
    /// `‖θ_t − θ_{t−1}‖`.
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m_hat: Vec64,
    pub v_hat: Vec64,
    pub state: OptState,
}

pub fn update_moments(state: &OptState, g: &Vec64, hp: &HyperParams) -> Result<Moments> {
    if g.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: g.dim(),
        });
    }
    if let Some(j) = g.first_non_finite() {
        return Err(Error::NonFinite {
            context: "gradient",
            coordinate: Some(j),
        });
    }
    let t = state.t + 1;
    let (b1, b2) = (hp.beta1, hp.beta2);
    let m: Vec<f64> = state
        .m
        .iter()
        .zip(g)
        .map(|(&m, &g)| b1 * m + (1.0 - b1) * g)
        .collect();
    let v: Vec<f64> = state
        .v
        .iter()
        .zip(g)
        .map(|(&v, &g)| b2 * v + (1.0 - b2) * (g * g))
        .collect();
    let bc1 = 1.0 - pow_t(b1, t);
    let bc2 = 1.0 - pow_t(b2, t);
    let m_hat = m.iter().map(|&m| m / bc1).collect();
    let v_hat = v.iter().map(|&v| v / bc2).collect();
    Ok(Moments {
        m_hat: Vec64::new(m_hat)?,
        v_hat: Vec64::new(v_hat)?,
        state: OptState {
            t,
            m: Vec64::new(m)?,
            v: Vec64::new(v)?,
        },
    })
}

/// `β^t` for a step counter, via `pow` (correctly rounded in practice;
/// repeated multiplication drifts by a few ulps, which `1 − β^t` amplifies).
pub(crate) fn pow_t(beta: f64, t: u64) -> f64 {
    beta.powf(t as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub theta: Vec64,
    pub state: OptState,
    pub record: StepRecord,
}

/// One update `θ_{t-1} → θ_t` for `kind` from gradient `g = ∇f(θ_{t-1}; z_t)`.
pub fn step(
    kind: OptimizerKind,
    hp: &HyperParams,
    state: &OptState,
    theta: &Vec64,
    g: &Vec64,
) -> Result<StepOutput> {
    hp.validate_for(kind)?;
    if theta.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: theta.dim(),
        });
    }
    let Moments {
        m_hat,
        v_hat,
        state,
    } = update_moments(state, g, hp)?;
    let (eta, eps, lambda) = (hp.eta, hp.eps, hp.lambda);
    let tau = hp.tau_or_inf();
    let rho_t = v_hat.min_elem();
    let th = theta.as_slice();
    let mh = m_hat.as_slice();
    let vh = v_hat.as_slice();

    let srf = |j: usize| th[j] - eta * (mh[j] / (vh[j] + eps) + lambda * th[j]);
    let momentum = |j: usize| th[j] - eta * (mh[j] + lambda * th[j]);

    let d = theta.dim();
    let mut switched = 0.0;
    let next: Vec<f64> = match kind {
        OptimizerKind::Sgd => (0..d).map(|j| th[j] - eta * g[j]).collect(),
        OptimizerKind::Sgdm => (0..d).map(|j| th[j] - eta * state.m[j]).collect(),
        OptimizerKind::SgdmBc => (0..d).map(momentum).collect(),
        OptimizerKind::Adam | OptimizerKind::AdamW => (0..d)
            .map(|j| th[j] - eta * (mh[j] / (vh[j].sqrt() + eps) + lambda * th[j]))
            .collect(),
        OptimizerKind::AdamSrf | OptimizerKind::AdamWSrf => (0..d).map(srf).collect(),
        OptimizerKind::HomeAdam | OptimizerKind::HomeAdamW => {
            if rho_t >= tau {
                (0..d).map(srf).collect()
            } else {
                switched = 1.0;
                (0..d).map(momentum).collect()
            }
        }
        OptimizerKind::HomeAdamEw | OptimizerKind::HomeAdamWEw => {
            let mut fallback = 0usize;
            let next = (0..d)
                .map(|j| {
                    if vh[j] >= tau {
                        srf(j)
                    } else {
                        fallback += 1;
                        momentum(j)
                    }
                })
                .collect();
            switched = fallback as f64 / d as f64;
            next
        }
    };
    let next = Vec64::new(next)?;
    if let Some(j) = next.first_non_finite() {
        return Err(Error::NonFinite {
            context: "parameter update",
            coordinate: Some(j),
        });
    }
    let step_norm = next.dist(theta)?;
    Ok(StepOutput {
        theta: next,
        state,
        record: StepRecord {
            rho_t,
            switched_home: switched,
            step_norm,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepsizeMode {
    /// `1 / (v̂ + ε)`
    Srf,
    /// `1 / (√v̂ + ε)`
    Sqrt,
    /// all ones (SGD / SGDM)
    Identity,
    /// `1 / (v̂ + ε)` when `min_j v̂_j ≥ τ`, else all ones
    Home,
}

/// The stepsize function `R(v̂)` that multiplies `m̂` in each rule.
pub fn stepsize_function(v_hat: &Vec64, mode: StepsizeMode, tau: f64, eps: f64) -> Result<Vec64> {
    if let Some(j) = v_hat.iter().position(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "v_hat must be nonnegative (coordinate {j})"
        )));
    }
    let zero_denominator = || {
        if eps == 0.0 {
            if let Some(index) = v_hat.iter().position(|&x| x == 0.0) {
                return Err(Error::DivisionByZero { index });
            }
        }
        Ok(())
    };
    match mode {
        StepsizeMode::Srf => {
            zero_denominator()?;
            Ok(v_hat.map(|x| 1.0 / (x + eps)))
        }
        StepsizeMode::Sqrt => {
            zero_denominator()?;
            Ok(v_hat.map(|x| 1.0 / (x.sqrt() + eps)))
        }
        StepsizeMode::Identity => Ok(Vec64::filled(v_hat.dim(), 1.0)),
        StepsizeMode::Home => {
            if v_hat.min_elem() >= tau {
                Ok(v_hat.map(|x| 1.0 / (x + eps)))
            } else {
                Ok(Vec64::filled(v_hat.dim(), 1.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vec64 {
        Vec64::from_slice(x).unwrap()
    }

    #[test]
    fn first_step_bias_correction_recovers_gradient() {
        let hp = HyperParams::new(0.1).with_betas(0.9, 0.99);
        let out = update_moments(&OptState::new(2), &v(&[1.0, -1.0]), &hp).unwrap();
        assert!((out.state.m[0] - 0.1).abs() < 1e-15 && (out.state.m[1] + 0.1).abs() < 1e-15);
        assert!((out.state.v[0] - 0.01).abs() < 1e-15);
        assert_eq!(out.m_hat, v(&[1.0, -1.0]));
        assert_eq!(out.v_hat, v(&[1.0, 1.0]));
        assert_eq!(out.state.t, 1);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let hp = HyperParams::new(0.1).with_betas(0.8, 0.7);
        let state = OptState {
            t: 4,
            m: v(&[1.0, -2.0]),
            v: v(&[0.5, 3.0]),
        };
        let out = update_moments(&state, &Vec64::zeros(2), &hp).unwrap();
        assert_eq!(out.state.m, state.m.scale(0.8));
        assert_eq!(out.state.v, state.v.scale(0.7));
    }

    #[test]
    fn two_step_recursion() {
        // m1 = 0.5*2 = 1, m2 = 0.5*1 + 0.5*2 = 1.5, m̂2 = 1.5 / 0.75 = 2
        let hp = HyperParams::new(0.1).with_betas(0.5, 0.5);
        let s1 = update_moments(&OptState::new(1), &v(&[2.0]), &hp).unwrap().state;
        let out = update_moments(&s1, &v(&[2.0]), &hp).unwrap();
        assert_eq!(out.state.m, v(&[1.5]));
        assert_eq!(out.m_hat, v(&[2.0]));
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let hp = HyperParams::new(0.1);
        let r = update_moments(&OptState::new(2), &v(&[1.0, f64::NAN]), &hp);
        assert!(matches!(r, Err(Error::NonFinite { coordinate: Some(1), .. })));
    }

    #[test]
    fn srf_first_step_example() {
        let hp = HyperParams::new(1e-2).with_eps(1e-7);
        let out = step(
            OptimizerKind::AdamSrf,
            &hp,
            &OptState::new(2),
            &Vec64::zeros(2),
            &v(&[1.0, 1.0]),
        )
        .unwrap();
        let expected = -0.01 / (1.0 + 1e-7);
        assert_eq!(out.theta, v(&[expected, expected]));
        assert_eq!(out.record.rho_t, 1.0);
        assert_eq!(out.record.switched_home, 0.0);
    }

    #[test]
    fn kind_hp_mismatches() {
        let hp = HyperParams::new(0.1);
        let s = OptState::new(1);
        let th = Vec64::zeros(1);
        let g = v(&[1.0]);
        assert!(matches!(
            step(OptimizerKind::HomeAdam, &hp, &s, &th, &g),
            Err(Error::KindMismatch { .. })
        ));
        assert!(step(OptimizerKind::AdamW, &hp, &s, &th, &g).is_err());
        assert!(step(OptimizerKind::AdamSrf, &hp.with_lambda(0.1), &s, &th, &g).is_err());
        assert!(step(OptimizerKind::SgdmBc, &hp.with_lambda(0.1), &s, &th, &g).is_ok());
        assert!(matches!(
            HyperParams::new(0.5).with_lambda(2.0).validate(),
            Err(Error::InvalidHyperParams { field: "lambda", .. })
        ));
        assert!(HyperParams::new(0.1).with_betas(1.0, 0.9).validate().is_err());
        assert!(HyperParams::new(0.1).with_tau(0.0).validate().is_err());
        assert!(HyperParams::new(0.1).with_tau(f64::INFINITY).validate().is_ok());
    }

    #[test]
    fn zero_eps_with_zero_second_moment_is_an_error() {
        let hp = HyperParams::new(0.1).with_eps(0.0);
        let r = step(
            OptimizerKind::AdamSrf,
            &hp,
            &OptState::new(2),
            &Vec64::zeros(2),
            &v(&[1.0, 0.0]),
        );
        assert!(matches!(r, Err(Error::NonFinite { coordinate: Some(1), .. })));
    }

    #[test]
    fn home_switch_tie_takes_adaptive_branch() {
        // v̂_1 = g² = 4 exactly, τ = 4.
        let hp = HyperParams::new(0.1).with_eps(0.0).with_tau(4.0);
        let out = step(
            OptimizerKind::HomeAdam,
            &hp,
            &OptState::new(1),
            &Vec64::zeros(1),
            &v(&[2.0]),
        )
        .unwrap();
        assert_eq!(out.record.switched_home, 0.0);
        assert_eq!(out.theta, v(&[-0.1 * 2.0 / 4.0]));
    }

    #[test]
    fn elementwise_reports_fraction() {
        let hp = HyperParams::new(0.1).with_tau(1.0);
        let out = step(
            OptimizerKind::HomeAdamEw,
            &hp,
            &OptState::new(4),
            &Vec64::zeros(4),
            &v(&[2.0, 0.5, 3.0, 0.1]),
        )
        .unwrap();
        assert_eq!(out.record.switched_home, 0.5);
        assert_eq!(out.theta[1], -0.1 * 0.5);
        assert_eq!(out.theta[0], -0.1 * (2.0 / (4.0 + 1e-8)));
    }

    #[test]
    fn stepsize_function_modes() {
        let r = stepsize_function(&v(&[2.0, 3.0]), StepsizeMode::Home, 1.0, 0.0).unwrap();
        assert_eq!(r, v(&[0.5, 1.0 / 3.0]));
        let r = stepsize_function(&v(&[0.5, 3.0]), StepsizeMode::Home, 1.0, 0.0).unwrap();
        assert_eq!(r, v(&[1.0, 1.0]));
        let r = stepsize_function(&v(&[7.0, 0.0]), StepsizeMode::Identity, 1.0, 0.0).unwrap();
        assert_eq!(r, v(&[1.0, 1.0]));
        let r = stepsize_function(&v(&[4.0]), StepsizeMode::Sqrt, 1.0, 0.0).unwrap();
        assert_eq!(r, v(&[0.5]));
        let r = stepsize_function(&v(&[4.0]), StepsizeMode::Srf, 1.0, 0.0).unwrap();
        assert_eq!(r, v(&[0.25]));
        assert!(matches!(
            stepsize_function(&v(&[1.0, 0.0]), StepsizeMode::Srf, 1.0, 0.0),
            Err(Error::DivisionByZero { index: 1 })
        ));
        assert!(stepsize_function(&v(&[1.0, 0.0]), StepsizeMode::Sqrt, 1.0, 0.0).is_err());
        assert!(stepsize_function(&v(&[1.0, 0.0]), StepsizeMode::Srf, 1.0, 1e-8).is_ok());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.name().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!(matches!(
            "Lion".parse::<OptimizerKind>(),
            Err(Error::UnknownName { .. })
        ));
    }
}
