//! Divergence recursions, lemma checkers and convergence-bound evaluators.
//!
//! The recursions bound the twin-run gaps: with `N` samples,
//! `E‖m_t − m_t^(i)‖ ≤ φ_t/N`, `E‖v_t − v_t^(i)‖ ≤ ψ_t/N` and
//! `E‖θ_t − θ_t^(i)‖ ≤ ϕ_t/N`.

mod lemmas;
mod measure;
mod theorems;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::pow_t;

pub use lemmas::{
    check_lemma1, check_lemma2_mc, lemma2_from_paths, Lemma1Check, Lemma2Path, Lemma2Row,
};
pub use measure::{constants_from_run, measure_constants, Measured};
pub use theorems::{bound_preconditions, theorem_bound_rhs, theorem_bound_value, Theorem};

/// Problem and optimizer constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    /// Gradient bound.
    pub g: f64,
    /// Smoothness.
    pub l: f64,
    /// Gradient-noise bound.
    pub sigma: f64,
    /// `min_t min_j (v̂_t)_j`.
    pub rho: f64,
    pub eps: f64,
    pub tau: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eta: f64,
    pub lam: f64,
    pub n: f64,
    pub horizon: f64,
    pub c: f64,
    pub gamma: f64,
    /// `F(θ_0) − F*`.
    pub f0_minus_fstar: f64,
    /// Parameter dimension `d`.
    pub dim: usize,
    /// `‖θ_0‖` (ℓ∞ norm for the element-wise theorem); checked when set.
    pub theta0_norm: Option<f64>,
}

impl Default for AnalysisConstants {
    fn default() -> Self {
        Self {
            g: 1.0,
            l: 1.0,
            sigma: 1.0,
            rho: 0.0,
            eps: 1e-8,
            tau: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eta: 1e-3,
            lam: 0.0,
            n: 1.0,
            horizon: 1.0,
            c: 100.0,
            gamma: 0.75,
            f0_minus_fstar: 1.0,
            dim: 1,
            theta0_norm: None,
        }
    }
}

impl AnalysisConstants {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("G", self.g),
            ("L", self.l),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("eps", self.eps),
            ("tau", self.tau),
            ("eta", self.eta),
            ("lambda", self.lam),
            ("N", self.n),
            ("T", self.horizon),
            ("c", self.c),
            ("F0 - F*", self.f0_minus_fstar),
        ];
        for (name, x) in nonneg {
            if !(x >= 0.0) || x.is_nan() {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {x}")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be finite".into()));
        }
        Ok(())
    }

    /// `ρ̂ = ρ + ε`.
    pub fn rho_hat(&self) -> f64 {
        self.rho + self.eps
    }

    /// `ρ̆ = (1 − β1)(ρ + (1 − β2)ε)`.
    pub fn rho_breve(&self) -> f64 {
        (1.0 - self.beta1) * (self.rho + (1.0 - self.beta2) * self.eps)
    }

    /// `Ĝ = (G² + ε)/(1 − β2)`.
    pub fn g_hat(&self) -> f64 {
        (self.g * self.g + self.eps) / (1.0 - self.beta2)
    }

    /// `Ḡ = G/((1 − β1)(ρ + ε))`.
    pub fn g_bar(&self) -> f64 {
        self.g / ((1.0 - self.beta1) * self.rho_hat())
    }

    /// `τ̂ = (1 − β1)(τ + (1 − β2)ε)`.
    pub fn tau_hat(&self) -> f64 {
        (1.0 - self.beta1) * (self.tau + (1.0 - self.beta2) * self.eps)
    }

    /// `τ̆ = min(1 − β1, τ̂)`.
    pub fn tau_breve(&self) -> f64 {
        (1.0 - self.beta1).min(self.tau_hat())
    }

    /// `Ğ = max(1, Ĝ)`.
    pub fn g_breve(&self) -> f64 {
        self.g_hat().max(1.0)
    }

    /// `G̃ = max(G/((1 − β1)(τ + (1 − β2)ε)), G/(1 − β1))`.
    pub fn g_tilde(&self) -> f64 {
        let a = self.g / ((1.0 - self.beta1) * (self.tau + (1.0 - self.beta2) * self.eps));
        a.max(self.g / (1.0 - self.beta1))
    }

    /// `ν = min(1 − β1, (τ + ε)(1 − β1))`.
    pub fn nu(&self) -> f64 {
        (1.0 - self.beta1).min((self.tau + self.eps) * (1.0 - self.beta1))
    }

    /// `r = max(1, G² + ε)`.
    pub fn r(&self) -> f64 {
        (self.g * self.g + self.eps).max(1.0)
    }

    /// `Δ = F(θ_0) − F* + (σ² + β1²G²)/L`.
    pub fn delta(&self) -> f64 {
        self.f0_minus_fstar
            + (self.sigma * self.sigma + self.beta1 * self.beta1 * self.g * self.g) / self.l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Square-root-free adaptive steps, denominators `ρ + ε`.
    Srf,
    /// Switching rule with `τ ≥ 1`, unit denominators.
    Home,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Srf => "srf",
            Regime::Home => "home",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "srf" => Ok(Regime::Srf),
            "home" => Ok(Regime::Home),
            _ => Err(Error::UnknownName {
                what: "regime",
                name: s.to_string(),
                valid: vec!["srf".into(), "home".into()],
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionState {
    pub t: u64,
    pub phi: f64,
    pub psi: f64,
    pub varphi: f64,
}

/// Recursion values up to the first overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionTrace {
    pub states: Vec<RecursionState>,
    /// First step whose values left the `f64` range.
    pub overflow_step: Option<u64>,
}

struct Coefficients {
    d1: f64,
    d2: f64,
    sqrt_d: f64,
}

fn coefficients(k: &AnalysisConstants, regime: Regime) -> Result<Coefficients> {
    k.validate()?;
    let (d1, d2) = match regime {
        Regime::Srf => {
            let rh = k.rho_hat();
            if !(rh > 0.0) {
                return Err(Error::Precondition(
                    "srf regime requires rho + eps > 0".into(),
                ));
            }
            (rh, rh * rh)
        }
        Regime::Home => {
            if !(k.tau >= 1.0) {
                return Err(Error::Precondition("home regime requires tau >= 1".into()));
            }
            (1.0, 1.0)
        }
    };
    Ok(Coefficients {
        d1,
        d2,
        sqrt_d: (k.dim as f64).sqrt(),
    })
}

fn initial_state(k: &AnalysisConstants, c: &Coefficients) -> RecursionState {
    let (b1, b2) = (k.beta1, k.beta2);
    let g3 = k.g * k.g * k.g;
    RecursionState {
        t: 1,
        phi: 2.0 * (1.0 - b1) * k.sigma,
        psi: 2.0 * (1.0 - b2) * k.g * k.g,
        varphi: 2.0 * k.eta * c.sqrt_d * k.sigma / c.d1
            + 2.0 * k.eta * c.sqrt_d * g3 / ((1.0 - b1) * c.d2),
    }
}

/// One step of the affine recursion. `unit` scales the inhomogeneous terms,
/// which lets the log-domain tracer keep the state normalized.
fn advance(
    k: &AnalysisConstants,
    c: &Coefficients,
    s: &RecursionState,
    unit: f64,
) -> RecursionState {
    let (b1, b2) = (k.beta1, k.beta2);
    let t1 = s.t + 1;
    let phi = b1 * s.phi + unit * 2.0 * (1.0 - b1) * k.sigma + (1.0 - b1) * k.l * s.varphi;
    let psi = b2 * s.psi
        + unit * 4.0 * (1.0 - b2) * k.g * k.sigma
        + 2.0 * (1.0 - b2) * k.g * k.l * s.varphi;
    let bc1 = 1.0 - pow_t(b1, t1);
    let bc2 = 1.0 - pow_t(b2, t1);
    let varphi = (1.0 - k.eta * k.lam) * s.varphi
        + k.eta * c.sqrt_d * phi / (bc1 * c.d1)
        + k.eta * k.g * c.sqrt_d * psi / (bc1 * bc2 * c.d2);
    RecursionState {
        t: t1,
        phi,
        psi,
        varphi,
    }
}

fn finite(s: &RecursionState) -> bool {
    s.phi.is_finite() && s.psi.is_finite() && s.varphi.is_finite()
}

/// States `t = 1..=horizon`, stopping at the first overflow.
pub fn trace_recursion_partial(
    k: &AnalysisConstants,
    regime: Regime,
    horizon: u64,
) -> Result<RecursionTrace> {
    let c = coefficients(k, regime)?;
    let mut states = Vec::with_capacity(horizon as usize);
    if horizon == 0 {
        return Ok(RecursionTrace {
            states,
            overflow_step: None,
        });
    }
    let mut s = initial_state(k, &c);
    loop {
        if !finite(&s) {
            return Ok(RecursionTrace {
                states,
                overflow_step: Some(s.t),
            });
        }
        states.push(s);
        if s.t >= horizon {
            break;
        }
        s = advance(k, &c, &s, 1.0);
    }
    Ok(RecursionTrace {
        states,
        overflow_step: None,
    })
}

/// States `t = 1..=horizon`; overflow is an error naming the step.
pub fn trace_recursion(
    k: &AnalysisConstants,
    regime: Regime,
    horizon: u64,
) -> Result<Vec<RecursionState>> {
    let tr = trace_recursion_partial(k, regime, horizon)?;
    match tr.overflow_step {
        Some(step) => Err(Error::RecursionOverflow { step }),
        None => Ok(tr.states),
    }
}

/// Natural logs of `(φ_t, ψ_t, ϕ_t)`; `-inf` encodes an exact zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecursionState {
    pub t: u64,
    pub ln_phi: f64,
    pub ln_psi: f64,
    pub ln_varphi: f64,
}

/// The same recursion evaluated with a running scale factor, so values far
/// beyond the `f64` range can still be compared through their logarithms.
pub fn trace_recursion_log(
    k: &AnalysisConstants,
    regime: Regime,
    horizon: u64,
) -> Result<Vec<LogRecursionState>> {
    let c = coefficients(k, regime)?;
    let mut out = Vec::with_capacity(horizon as usize);
    if horizon == 0 {
        return Ok(out);
    }
    let mut s = initial_state(k, &c);
    let mut ln_scale = 0.0;
    loop {
        let m = s.phi.max(s.psi).max(s.varphi);
        if m > 0.0 {
            s.phi /= m;
            s.psi /= m;
            s.varphi /= m;
            ln_scale += m.ln();
        }
        out.push(LogRecursionState {
            t: s.t,
            ln_phi: s.phi.ln() + ln_scale,
            ln_psi: s.psi.ln() + ln_scale,
            ln_varphi: s.varphi.ln() + ln_scale,
        });
        if s.t >= horizon {
            break;
        }
        s = advance(k, &c, &s, (-ln_scale).exp());
    }
    Ok(out)
}

/// Outcome of comparing an empirical trace with a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    /// `empirical_t ≤ predicted_t / divisor` for each aligned step.
    pub holds: Vec<bool>,
    pub all_hold: bool,
    /// `max_t empirical_t / (predicted_t / divisor)` over finite predictions.
    pub max_violation_ratio: f64,
    /// First index (1-based) where the prediction is non-finite; the bound is
    /// vacuous from there on.
    pub vacuous_from: Option<u64>,
}

/// Step-by-step check of `empirical ≤ predicted / divisor`, e.g. a mean twin
/// divergence against `ϕ_t / N` (divisor `N`) or gradient norms against a
/// theorem right-hand side (divisor 1).
pub fn compare_trace_to_bound(
    empirical: &[f64],
    predicted: &[f64],
    divisor: f64,
) -> Result<BoundComparison> {
    if empirical.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "misaligned horizons: {} empirical vs {} predicted",
            empirical.len(),
            predicted.len()
        )));
    }
    if !(divisor > 0.0) {
        return Err(Error::InvalidArgument("divisor must be > 0".into()));
    }
    let mut holds = Vec::with_capacity(empirical.len());
    let mut max_ratio: f64 = 0.0;
    let mut vacuous_from = None;
    for (k, (&e, &p)) in empirical.iter().zip(predicted).enumerate() {
        if !p.is_finite() {
            vacuous_from.get_or_insert(k as u64 + 1);
            holds.push(true);
            continue;
        }
        let bound = p / divisor;
        holds.push(e <= bound);
        let ratio = if bound > 0.0 {
            e / bound
        } else if e > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_ratio = max_ratio.max(ratio);
    }
    Ok(BoundComparison {
        all_hold: holds.iter().all(|&h| h),
        holds,
        max_violation_ratio: max_ratio,
        vacuous_from,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> AnalysisConstants {
        AnalysisConstants {
            g: 1.0,
            l: 1.0,
            sigma: 0.5,
            rho: 0.05,
            eps: 0.05,
            tau: 1.0,
            eta: 1e-2,
            dim: 4,
            ..AnalysisConstants::default()
        }
    }

    #[test]
    fn zero_noise_zero_gradient_is_zero() {
        let k = AnalysisConstants {
            g: 0.0,
            sigma: 0.0,
            ..base()
        };
        for regime in [Regime::Srf, Regime::Home] {
            for s in trace_recursion(&k, regime, 30).unwrap() {
                assert_eq!((s.phi, s.psi, s.varphi), (0.0, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn second_step_by_hand() {
        let k = base();
        let tr = trace_recursion(&k, Regime::Home, 2).unwrap();
        let (b1, b2) = (k.beta1, k.beta2);
        let phi1 = 2.0 * (1.0 - b1) * 0.5;
        let psi1 = 2.0 * (1.0 - b2);
        let vp1 = 2.0 * 1e-2 * 2.0 * 0.5 + 2.0 * 1e-2 * 2.0 / (1.0 - b1);
        assert_eq!((tr[0].phi, tr[0].psi, tr[0].varphi), (phi1, psi1, vp1));
        let phi2 = b1 * phi1 + 2.0 * (1.0 - b1) * 0.5 + (1.0 - b1) * vp1;
        let psi2 = b2 * psi1 + 4.0 * (1.0 - b2) * 0.5 + 2.0 * (1.0 - b2) * vp1;
        let vp2 = vp1
            + 1e-2 * 2.0 * phi2 / (1.0 - b1 * b1)
            + 1e-2 * 2.0 * psi2 / ((1.0 - b1 * b1) * (1.0 - b2 * b2));
        assert!((tr[1].phi - phi2).abs() <= 1e-15 * phi2);
        assert!((tr[1].psi - psi2).abs() <= 1e-15 * psi2);
        assert!((tr[1].varphi - vp2).abs() <= 1e-15 * vp2);
    }

    #[test]
    fn regime_preconditions() {
        let k = AnalysisConstants {
            rho: 0.0,
            eps: 0.0,
            ..base()
        };
        assert!(matches!(
            trace_recursion(&k, Regime::Srf, 3),
            Err(Error::Precondition(_))
        ));
        let k = AnalysisConstants { tau: 0.5, ..base() };
        assert!(trace_recursion(&k, Regime::Home, 3).is_err());
    }

    #[test]
    fn srf_overflow_is_reported() {
        let k = AnalysisConstants {
            rho: 0.0,
            eps: 1e-3,
            eta: 1.0,
            ..base()
        };
        match trace_recursion(&k, Regime::Srf, 10_000) {
            Err(Error::RecursionOverflow { step }) => assert!(step > 1 && step < 10_000),
            other => panic!("expected overflow, got {other:?}"),
        }
        let partial = trace_recursion_partial(&k, Regime::Srf, 10_000).unwrap();
        let step = partial.overflow_step.unwrap();
        assert_eq!(partial.states.len() as u64, step - 1);
    }

    #[test]
    fn log_trace_matches_direct_trace() {
        let k = base();
        let direct = trace_recursion(&k, Regime::Srf, 200).unwrap();
        let logged = trace_recursion_log(&k, Regime::Srf, 200).unwrap();
        for (a, b) in direct.iter().zip(&logged) {
            assert!((a.varphi.ln() - b.ln_varphi).abs() < 1e-10);
            assert!((a.psi.ln() - b.ln_psi).abs() < 1e-10);
        }
        // Continues past the point where direct evaluation overflows.
        let k = AnalysisConstants { eta: 1.0, rho: 0.0, eps: 1e-3, ..base() };
        let logged = trace_recursion_log(&k, Regime::Srf, 5000).unwrap();
        assert_eq!(logged.len(), 5000);
        assert!(logged.last().unwrap().ln_varphi > 709.0);
    }

    #[test]
    fn comparison_report() {
        let cmp = compare_trace_to_bound(&[0.0, 0.1, 0.3], &[1.0, 1.0, f64::INFINITY], 2.0).unwrap();
        assert!(cmp.all_hold);
        assert_eq!(cmp.vacuous_from, Some(3));
        assert!((cmp.max_violation_ratio - 0.2).abs() < 1e-15);
        let cmp = compare_trace_to_bound(&[0.6], &[1.0], 1.0).unwrap();
        assert!(cmp.all_hold);
        let cmp = compare_trace_to_bound(&[1.5], &[1.0], 1.0).unwrap();
        assert!(!cmp.all_hold);
        assert!(compare_trace_to_bound(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }
}
