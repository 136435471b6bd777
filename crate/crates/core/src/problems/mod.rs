//! Desk-scale test problems `f(θ; z)`, synthetic data generators and the
//! empirical risk `F_S(θ) = (1/N) Σ f(θ; z_i)`.

mod dataset;
mod generator;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Vec64;

pub use dataset::{Dataset, Sample};
pub use generator::{make_dataset, streams, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    Quadratic,
    Rosenbrock,
    Logistic,
    TinyMlp,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::Quadratic,
        ProblemKind::Rosenbrock,
        ProblemKind::Logistic,
        ProblemKind::TinyMlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Rosenbrock => "rosenbrock",
            ProblemKind::Logistic => "logistic",
            ProblemKind::TinyMlp => "tiny_mlp",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == key || (key == "tinymlp" && *k == ProblemKind::TinyMlp))
            .ok_or_else(|| Error::UnknownName {
                what: "problem kind",
                name: s.to_string(),
                valid: ProblemKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            })
    }
}

/// A per-sample loss family.
///
/// * `Quadratic`: `f(θ; x) = ½ Σ_j κ_j (θ_j − x_j)²` with curvature `κ > 0`.
/// * `Logistic`: `f(θ; x, y) = log(1 + e^{θ·x}) − y θ·x`, labels in {0, 1}.
/// * `Rosenbrock`: the generalized Rosenbrock function; the sample is ignored.
/// * `TinyMlp`: `½(w2·tanh(W1 x + b1) + b2 − y)²`, parameters packed as
///   `[W1 (row-major, hidden × input), b1, w2, b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    kind: ProblemKind,
    input_dim: usize,
    hidden: usize,
    curvature: Option<Vec64>,
    rosen_a: f64,
    rosen_b: f64,
}

impl Problem {
    pub const DEFAULT_HIDDEN: usize = 8;

    /// `input_dim` is the feature dimension; it equals the parameter
    /// dimension for every kind except `TinyMlp`.
    pub fn new(kind: ProblemKind, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if kind == ProblemKind::Rosenbrock && input_dim < 2 {
            return Err(Error::InvalidArgument(
                "rosenbrock needs dimension >= 2".into(),
            ));
        }
        Ok(Self {
            kind,
            input_dim,
            hidden: Self::DEFAULT_HIDDEN,
            curvature: None,
            rosen_a: 1.0,
            rosen_b: 100.0,
        })
    }

    /// Diagonal curvature for `Quadratic` (defaults to all ones).
    pub fn with_curvature(mut self, curvature: Vec64) -> Result<Self> {
        if self.kind != ProblemKind::Quadratic {
            return Err(Error::InvalidArgument(
                "curvature only applies to quadratic problems".into(),
            ));
        }
        if curvature.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: curvature.dim(),
            });
        }
        if curvature.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return Err(Error::InvalidArgument("curvature must be positive".into()));
        }
        self.curvature = Some(curvature);
        Ok(self)
    }

    pub fn with_hidden(mut self, hidden: usize) -> Result<Self> {
        if self.kind != ProblemKind::TinyMlp || hidden == 0 {
            return Err(Error::InvalidArgument(
                "hidden width applies to tiny_mlp and must be >= 1".into(),
            ));
        }
        self.hidden = hidden;
        Ok(self)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn curvature(&self) -> Option<&Vec64> {
        self.curvature.as_ref()
    }

    /// Parameter dimension `d`.
    pub fn dim(&self) -> usize {
        match self.kind {
            ProblemKind::TinyMlp => self.hidden * (self.input_dim + 2) + 1,
            _ => self.input_dim,
        }
    }

    fn kappa(&self, j: usize) -> f64 {
        self.curvature.as_ref().map_or(1.0, |k| k[j])
    }

    /// Exact smoothness constant when it is known in closed form.
    pub fn known_smoothness(&self) -> Option<f64> {
        match self.kind {
            ProblemKind::Quadratic => {
                Some(self.curvature.as_ref().map_or(1.0, |k| k.max_elem()))
            }
            _ => None,
        }
    }

    fn check(&self, theta: &Vec64, z: &Sample) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.dim(),
            });
        }
        if z.x.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: z.x.dim(),
            });
        }
        Ok(())
    }

    /// Per-sample loss and its analytic gradient.
    pub fn loss_grad(&self, theta: &Vec64, z: &Sample) -> Result<(f64, Vec64)> {
        self.check(theta, z)?;
        let th = theta.as_slice();
        let x = z.x.as_slice();
        let (loss, grad) = match self.kind {
            ProblemKind::Quadratic => {
                let mut loss = 0.0;
                let grad = (0..th.len())
                    .map(|j| {
                        let r = th[j] - x[j];
                        let k = self.kappa(j);
                        loss += 0.5 * k * r * r;
                        k * r
                    })
                    .collect::<Vec<_>>();
                (loss, grad)
            }
            ProblemKind::Logistic => {
                let s: f64 = th.iter().zip(x).map(|(a, b)| a * b).sum();
                let loss = softplus(s) - z.y * s;
                let r = sigmoid(s) - z.y;
                (loss, x.iter().map(|&xi| r * xi).collect())
            }
            ProblemKind::Rosenbrock => {
                let (a, b) = (self.rosen_a, self.rosen_b);
                let mut loss = 0.0;
                let mut grad = vec![0.0; th.len()];
                for j in 0..th.len() - 1 {
                    let t1 = th[j + 1] - th[j] * th[j];
                    let t2 = a - th[j];
                    loss += b * t1 * t1 + t2 * t2;
                    grad[j] += -4.0 * b * th[j] * t1 - 2.0 * t2;
                    grad[j + 1] += 2.0 * b * t1;
                }
                (loss, grad)
            }
            ProblemKind::TinyMlp => self.mlp_loss_grad(th, x, z.y),
        };
        let grad = Vec64::new(grad)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "loss",
                coordinate: None,
            });
        }
        if let Some(j) = grad.first_non_finite() {
            return Err(Error::NonFinite {
                context: "gradient",
                coordinate: Some(j),
            });
        }
        Ok((loss, grad))
    }

    fn mlp_loss_grad(&self, th: &[f64], x: &[f64], y: f64) -> (f64, Vec<f64>) {
        let (h, n_in) = (self.hidden, self.input_dim);
        let (w1, rest) = th.split_at(h * n_in);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let act: Vec<f64> = (0..h)
            .map(|k| {
                let pre: f64 = w1[k * n_in..(k + 1) * n_in]
                    .iter()
                    .zip(x)
                    .map(|(w, xi)| w * xi)
                    .sum::<f64>()
                    + b1[k];
                pre.tanh()
            })
            .collect();
        let out: f64 = act.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>() + b2[0];
        let r = out - y;
        let mut grad = vec![0.0; th.len()];
        for k in 0..h {
            let back = r * w2[k] * (1.0 - act[k] * act[k]);
            for i in 0..n_in {
                grad[k * n_in + i] = back * x[i];
            }
            grad[h * n_in + k] = back;
            grad[h * n_in + h + k] = r * act[k];
        }
        grad[h * (n_in + 2)] = r;
        (0.5 * r * r, grad)
    }

    pub fn loss(&self, theta: &Vec64, z: &Sample) -> Result<f64> {
        Ok(self.loss_grad(theta, z)?.0)
    }

    /// Full-batch gradient `∇F_S(θ)`.
    pub fn full_grad(&self, theta: &Vec64, data: &Dataset) -> Result<Vec64> {
        self.mean_grad(theta, data, 0..data.n())
    }

    /// Mean gradient over the listed sample indices.
    pub fn mean_grad(
        &self,
        theta: &Vec64,
        data: &Dataset,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<Vec64> {
        let mut acc = vec![0.0; self.dim()];
        let mut count = 0usize;
        for i in indices {
            let (_, g) = self.loss_grad(theta, data.get(i)?)?;
            for (a, gi) in acc.iter_mut().zip(&g) {
                *a += gi;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidArgument("no samples to average".into()));
        }
        Ok(Vec64::new(acc)?.scale(1.0 / count as f64))
    }
}

/// `log(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `F_S(θ)`, the mean per-sample loss.
pub fn empirical_risk(p: &Problem, theta: &Vec64, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for z in data.samples() {
        total += p.loss(theta, z)?;
    }
    Ok(total / data.n() as f64)
}

pub fn loss_grad(p: &Problem, theta: &Vec64, z: &Sample) -> Result<(f64, Vec64)> {
    p.loss_grad(theta, z)
}

/// Measured gradient constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradStats {
    /// Largest per-sample gradient norm seen at any probe.
    pub g_hat: f64,
    /// Largest secant `‖∇F(θ_a) − ∇F(θ_b)‖ / ‖θ_a − θ_b‖` over probe pairs.
    pub l_hat: f64,
    /// Largest `sqrt(mean_i ‖∇f_i − ∇F‖²)` over probes.
    pub sigma_hat: f64,
}

pub fn grad_stats(p: &Problem, data: &Dataset, probes: &[Vec64]) -> Result<GradStats> {
    if probes.len() < 2 {
        return Err(Error::InvalidArgument(
            "grad_stats needs at least 2 probe points".into(),
        ));
    }
    let mut g_hat: f64 = 0.0;
    let mut sigma_hat: f64 = 0.0;
    let mut full = Vec::with_capacity(probes.len());
    for theta in probes {
        let per_sample = data
            .samples()
            .iter()
            .map(|z| p.loss_grad(theta, z).map(|(_, g)| g))
            .collect::<Result<Vec<_>>>()?;
        let mut mean = vec![0.0; p.dim()];
        for g in &per_sample {
            g_hat = g_hat.max(g.l2_norm());
            for (m, gi) in mean.iter_mut().zip(g) {
                *m += gi;
            }
        }
        let mean = Vec64::new(mean)?.scale(1.0 / per_sample.len() as f64);
        let var = per_sample
            .iter()
            .map(|g| g.dist(&mean).map(|d| d * d))
            .sum::<Result<f64>>()?
            / per_sample.len() as f64;
        sigma_hat = sigma_hat.max(var.sqrt());
        full.push(mean);
    }
    let mut l_hat: Option<f64> = None;
    for a in 0..probes.len() {
        for b in a + 1..probes.len() {
            let dtheta = probes[a].dist(&probes[b])?;
            if dtheta == 0.0 {
                continue;
            }
            let secant = full[a].dist(&full[b])? / dtheta;
            l_hat = Some(l_hat.map_or(secant, |l| l.max(secant)));
        }
    }
    let l_hat = l_hat.ok_or_else(|| {
        Error::InvalidArgument("all probe points coincide; smoothness undefined".into())
    })?;
    Ok(GradStats {
        g_hat,
        l_hat,
        sigma_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vec64 {
        Vec64::from_slice(x).unwrap()
    }

    #[test]
    fn quadratic_minimizer_and_two_sample_risk() {
        let p = Problem::new(ProblemKind::Quadratic, 2).unwrap();
        let z = Sample::new(v(&[1.0, -2.0]), 0.0);
        let (loss, g) = p.loss_grad(&v(&[1.0, -2.0]), &z).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g, Vec64::zeros(2));

        let p = Problem::new(ProblemKind::Quadratic, 1).unwrap();
        let data = Dataset::new(vec![
            Sample::new(v(&[0.0]), 0.0),
            Sample::new(v(&[2.0]), 0.0),
        ])
        .unwrap();
        assert_eq!(empirical_risk(&p, &v(&[1.0]), &data).unwrap(), 0.5);
    }

    #[test]
    fn logistic_at_origin() {
        let p = Problem::new(ProblemKind::Logistic, 3).unwrap();
        let x = v(&[0.3, -1.0, 2.0]);
        let (loss, g) = p.loss_grad(&Vec64::zeros(3), &Sample::new(x.clone(), 1.0)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, x.scale(-0.5));
    }

    #[test]
    fn logistic_extreme_margin_stays_finite() {
        let p = Problem::new(ProblemKind::Logistic, 1).unwrap();
        let (loss, g) = p
            .loss_grad(&v(&[1e3]), &Sample::new(v(&[1.0]), 0.0))
            .unwrap();
        assert!((loss - 1e3).abs() < 1e-9);
        assert!((g[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rosenbrock_minimum() {
        let p = Problem::new(ProblemKind::Rosenbrock, 3).unwrap();
        let z = Sample::new(Vec64::zeros(3), 0.0);
        let (loss, g) = p.loss_grad(&v(&[1.0, 1.0, 1.0]), &z).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g, Vec64::zeros(3));
        assert!(Problem::new(ProblemKind::Rosenbrock, 1).is_err());
    }

    #[test]
    fn mlp_layout() {
        let p = Problem::new(ProblemKind::TinyMlp, 5).unwrap();
        assert_eq!(p.dim(), 57);
        // All-zero parameters: output 0, only the bias gradient is nonzero.
        let z = Sample::new(Vec64::filled(5, 1.0), 2.0);
        let (loss, g) = p.loss_grad(&Vec64::zeros(57), &z).unwrap();
        assert_eq!(loss, 2.0);
        assert_eq!(g[56], -2.0);
        assert_eq!(g.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn dimension_errors() {
        let p = Problem::new(ProblemKind::Logistic, 3).unwrap();
        let z = Sample::new(Vec64::zeros(2), 1.0);
        assert!(matches!(
            p.loss_grad(&Vec64::zeros(3), &z),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn grad_stats_quadratic() {
        let p = Problem::new(ProblemKind::Quadratic, 2).unwrap();
        let data = Dataset::new(vec![Sample::new(v(&[1.0, 1.0]), 0.0)]).unwrap();
        let probes = [v(&[0.0, 0.0]), v(&[3.0, -1.0]), v(&[0.5, 2.0])];
        let s = grad_stats(&p, &data, &probes).unwrap();
        assert!((s.l_hat - 1.0).abs() < 1e-15);
        assert_eq!(s.sigma_hat, 0.0);
        assert!(s.l_hat <= p.known_smoothness().unwrap() + 1e-12);
        assert!(grad_stats(&p, &data, &[v(&[1.0, 1.0]), v(&[1.0, 1.0])]).is_err());
        assert!(grad_stats(&p, &data, &[v(&[1.0, 1.0])]).is_err());
    }

    #[test]
    fn kind_names() {
        for k in ProblemKind::ALL {
            assert_eq!(k.name().parse::<ProblemKind>().unwrap(), k);
        }
        assert_eq!("TinyMlp".parse::<ProblemKind>().unwrap(), ProblemKind::TinyMlp);
        assert!("svm".parse::<ProblemKind>().is_err());
    }
}
