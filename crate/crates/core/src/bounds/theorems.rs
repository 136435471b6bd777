use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AnalysisConstants;
use crate::error::{Error, Result};

/// Convergence bounds on `(1/(T+1)) Σ_t E‖∇F(θ_t)‖`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    /// Adam(W)-srf, rate governed by `ρ̆`.
    Thm3Srf,
    /// HomeAdam(W), rate governed by `τ̆`.
    Thm4Home,
    /// Element-wise HomeAdam(W)-ew, rate governed by `ν`.
    AppFEw,
}

impl Theorem {
    pub const ALL: [Theorem; 3] = [Theorem::Thm3Srf, Theorem::Thm4Home, Theorem::AppFEw];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::Thm3Srf => "thm3_srf",
            Theorem::Thm4Home => "thm4_home",
            Theorem::AppFEw => "appF_ew",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownName {
                what: "theorem",
                name: s.to_string(),
                valid: Theorem::ALL.iter().map(|t| t.name().to_string()).collect(),
            })
    }
}

/// Every stated step-size / momentum / decay condition that `k` violates.
pub fn bound_preconditions(which: Theorem, k: &AnalysisConstants) -> Vec<String> {
    let mut bad = Vec::new();
    let mut need = |ok: bool, what: String| {
        if !ok {
            bad.push(what);
        }
    };
    let (l, eta, t, gamma) = (k.l, k.eta, k.horizon, k.gamma);
    let ce = k.c * eta;
    need(
        ce > 0.0 && ce < 1.0 && (k.beta1 - (1.0 - ce)).abs() <= 1e-9,
        format!(
            "beta1 = 1 - c*eta in (0,1) (beta1 = {}, 1 - c*eta = {})",
            k.beta1,
            1.0 - ce
        ),
    );
    let t_gamma = t.powf(gamma);
    match which {
        Theorem::Thm3Srf => {
            let rb = k.rho_breve();
            need(k.c >= 16.0 * l / rb, format!("c >= 16L/rho_breve ({} < {})", k.c, 16.0 * l / rb));
            need(
                eta > 0.0 && eta <= rb / (4.0 * l),
                format!("0 < eta <= rho_breve/(4L) ({} > {})", eta, rb / (4.0 * l)),
            );
            let lam_max = (1.0 / eta).min(1.0 / (eta * t_gamma * k.g_bar() * k.g_hat()));
            need(
                k.lam < lam_max,
                format!("lambda < min(1/eta, 1/(eta T^gamma Gbar Ghat)) ({} >= {})", k.lam, lam_max),
            );
            if let Some(n0) = k.theta0_norm {
                let cap = eta * k.g_bar();
                need(n0 <= cap, format!("||theta0|| <= eta*Gbar ({n0} > {cap})"));
            }
        }
        Theorem::Thm4Home => {
            let tb = k.tau_breve();
            need(k.tau > 0.0, "tau > 0".to_string());
            need(k.c >= 32.0 * l / tb, format!("c >= 32L/tau_breve ({} < {})", k.c, 32.0 * l / tb));
            let th = k.tau_hat();
            need(
                eta > 0.0 && eta <= th / (4.0 * l),
                format!("0 < eta <= tau_hat/(4L) ({} > {})", eta, th / (4.0 * l)),
            );
            let lam_max = (1.0 / eta).min(1.0 / (eta * t_gamma * k.g_tilde() * k.g_hat()));
            need(
                k.lam < lam_max,
                format!("lambda < min(1/eta, 1/(eta T^gamma Gtilde Ghat)) ({} >= {})", k.lam, lam_max),
            );
            if let Some(n0) = k.theta0_norm {
                let cap = eta * k.g_tilde();
                need(n0 <= cap, format!("||theta0|| <= eta*Gtilde ({n0} > {cap})"));
            }
        }
        Theorem::AppFEw => {
            let nu = k.nu();
            need(k.c >= 16.0 * l / nu, format!("c >= 16L/nu ({} < {})", k.c, 16.0 * l / nu));
            need(
                eta > 0.0 && eta <= nu / (4.0 * l),
                format!("0 < eta <= nu/(4L) ({} > {})", eta, nu / (4.0 * l)),
            );
            let a = k.g / (1.0 - k.beta1);
            let b = k.g / ((1.0 - k.beta1) * (k.tau + k.eps));
            let (g_max, g_min) = (a.max(b), a.min(b));
            let sqrt_d = (k.dim as f64).sqrt();
            let lam_max = (1.0 / eta).min(1.0 / (eta * t_gamma * sqrt_d * k.r() * g_max));
            need(
                k.lam < lam_max,
                format!("lambda < min(1/eta, 1/(eta T^gamma sqrt(d) r Ghat)) ({} >= {})", k.lam, lam_max),
            );
            if let Some(n0) = k.theta0_norm {
                let cap = eta * g_min;
                need(n0 <= cap, format!("||theta0||_inf <= eta*Gbreve ({n0} > {cap})"));
            }
        }
    }
    bad
}

/// The closed-form right-hand side, evaluated without checking the
/// theorem's conditions.
///
/// The `γ` terms decay like `T^{−(1−γ)}`, which yields the `O(T^{−1/4})`
/// rate at `γ = 3/4`.
pub fn theorem_bound_value(which: Theorem, k: &AnalysisConstants) -> Result<f64> {
    k.validate()?;
    if !(k.l > 0.0 && k.eta > 0.0 && k.horizon > 0.0) {
        return Err(Error::InvalidArgument("bounds need L, eta, T > 0".into()));
    }
    let (t, eta, l, c, sigma) = (k.horizon, k.eta, k.l, k.c, k.sigma);
    let decay = t.powf(1.0 - k.gamma);
    let delta = k.delta();
    let sqrt2 = std::f64::consts::SQRT_2;
    let value = match which {
        Theorem::Thm3Srf => {
            let (gh, rb) = (k.g_hat(), k.rho_breve());
            if !(rb > 0.0) {
                return Err(Error::InvalidArgument("rho_breve must be > 0".into()));
            }
            4.0 * (2.0 * delta).sqrt() * gh / (t * eta * rb).sqrt()
                + 4.0 * sqrt2 * gh / (decay * rb)
                + 4.0 * c * sigma * eta.sqrt() * gh / (l * rb).sqrt()
                + 1.0 / decay
        }
        Theorem::Thm4Home => {
            let (gb, gh, tb) = (k.g_breve(), k.g_hat(), k.tau_breve());
            if !(tb > 0.0) {
                return Err(Error::InvalidArgument("tau_breve must be > 0".into()));
            }
            8.0 * delta.sqrt() * gb / (t * eta * tb).sqrt()
                + 8.0 * gb / (tb * decay)
                + 4.0 * (2.0 * eta).sqrt() * c * sigma * gb / (l * tb).sqrt()
                + gb / (gh * decay)
        }
        Theorem::AppFEw => {
            let (r, nu) = (k.r(), k.nu());
            if !(nu > 0.0) {
                return Err(Error::InvalidArgument("nu must be > 0".into()));
            }
            r * (4.0 * (2.0 * delta).sqrt() / (t * eta * nu).sqrt()
                + 4.0 * sqrt2 / (decay * nu)
                + 4.0 * c * sigma * eta.sqrt() / (l * nu).sqrt())
                + 1.0 / decay
        }
    };
    Ok(value)
}

/// The right-hand side, or a precondition error listing every violated
/// inequality.
pub fn theorem_bound_rhs(which: Theorem, k: &AnalysisConstants) -> Result<f64> {
    let bad = bound_preconditions(which, k);
    if !bad.is_empty() {
        return Err(Error::Precondition(format!("{}: {}", which.name(), bad.join("; "))));
    }
    theorem_bound_value(which, k)
}
