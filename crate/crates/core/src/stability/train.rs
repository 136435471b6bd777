use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{draw_indices, RngStream, Vec64};
use crate::optim::{step, HyperParams, OptState, OptimizerKind};
use crate::problems::{empirical_risk, Dataset, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: OptimizerKind,
    pub hp: HyperParams,
    pub horizon: u64,
    /// Samples averaged per stochastic gradient (1 = the analysed setting).
    pub batch: usize,
    pub index_stream: RngStream,
    /// Keep `θ_0` and every `k`-th iterate in [`TrainOutcome::snapshots`].
    pub snapshot_every: Option<u64>,
}

impl TrainConfig {
    pub fn new(kind: OptimizerKind, hp: HyperParams, horizon: u64, index_stream: RngStream) -> Self {
        Self {
            kind,
            hp,
            horizon,
            batch: 1,
            index_stream,
            snapshot_every: None,
        }
    }
}

/// Per-step diagnostics, all evaluated at the post-step iterate `θ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub t: u64,
    /// `F_S(θ_t)`
    pub loss: f64,
    /// `‖∇F_S(θ_t)‖`
    pub grad_norm: f64,
    pub rho_t: f64,
    pub switched_home: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub theta: Vec64,
    pub state: OptState,
    pub steps: Vec<TrainStep>,
    /// Step at which the iterate became non-finite, if it did.
    pub blow_up: Option<u64>,
    pub snapshots: Vec<Vec64>,
}

impl TrainOutcome {
    /// `(1/T) Σ_t ‖∇F_S(θ_t)‖` over the recorded steps.
    pub fn mean_grad_norm(&self) -> f64 {
        if self.steps.is_empty() {
            return f64::NAN;
        }
        self.steps.iter().map(|s| s.grad_norm).sum::<f64>() / self.steps.len() as f64
    }
}

/// Runs `cfg.horizon` steps from `theta0`; the sample(s) for step `t` come
/// from `cfg.index_stream` at counter `t`.
pub fn train(
    problem: &Problem,
    data: &Dataset,
    theta0: &Vec64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.hp.validate_for(cfg.kind)?;
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let mut theta = theta0.clone();
    let mut state = OptState::new(problem.dim());
    let mut steps = Vec::with_capacity(cfg.horizon as usize);
    let every = match cfg.snapshot_every {
        Some(0) => return Err(Error::InvalidArgument("snapshot interval must be >= 1".into())),
        other => other,
    };
    let mut snapshots = Vec::new();
    if every.is_some() {
        snapshots.push(theta.clone());
    }
    for t in 1..=cfg.horizon {
        let idx = draw_indices(&cfg.index_stream, t, data.n(), cfg.batch)?;
        let g = match problem.mean_grad(&theta, data, idx) {
            Ok(g) => g,
            Err(Error::NonFinite { .. }) => return Ok(blown(theta, state, steps, snapshots, t)),
            Err(e) => return Err(e),
        };
        let out = match step(cfg.kind, &cfg.hp, &state, &theta, &g) {
            Ok(out) => out,
            Err(Error::NonFinite { .. }) => return Ok(blown(theta, state, steps, snapshots, t)),
            Err(e) => return Err(e),
        };
        theta = out.theta;
        state = out.state;
        if every.is_some_and(|k| t % k == 0) {
            snapshots.push(theta.clone());
        }
        let eval = empirical_risk(problem, &theta, data)
            .and_then(|loss| Ok((loss, problem.full_grad(&theta, data)?.l2_norm())));
        let (loss, grad_norm) = match eval {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return Ok(blown(theta, state, steps, snapshots, t)),
            Err(e) => return Err(e),
        };
        steps.push(TrainStep {
            t,
            loss,
            grad_norm,
            rho_t: out.record.rho_t,
            switched_home: out.record.switched_home,
            step_norm: out.record.step_norm,
        });
    }
    Ok(TrainOutcome {
        theta,
        state,
        steps,
        blow_up: None,
        snapshots,
    })
}

fn blown(
    theta: Vec64,
    state: OptState,
    steps: Vec<TrainStep>,
    snapshots: Vec<Vec64>,
    t: u64,
) -> TrainOutcome {
    TrainOutcome {
        theta,
        state,
        steps,
        blow_up: Some(t),
        snapshots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Generator, ProblemKind};

    fn quadratic() -> (Problem, Dataset, Vec64) {
        let gen = Generator::new(Problem::new(ProblemKind::Quadratic, 3).unwrap(), 1).unwrap();
        let data = gen.dataset(20).unwrap();
        (gen.problem().clone(), data, gen.theta0())
    }

    #[test]
    fn gradient_descent_on_a_quadratic_decreases_the_loss() {
        let (p, data, theta0) = quadratic();
        // Full batch via sampling with replacement is still noisy, so use
        // a single-sample dataset, where every step is exact gradient descent.
        let one = Dataset::new(vec![data.samples()[0].clone()]).unwrap();
        let cfg = TrainConfig::new(OptimizerKind::Sgd, HyperParams::new(0.5), 50, RngStream::new(1, 7));
        let out = train(&p, &one, &theta0, &cfg).unwrap();
        let start = empirical_risk(&p, &theta0, &one).unwrap();
        assert!(out.steps[0].loss < start);
        for w in out.steps.windows(2) {
            assert!(w[1].loss < w[0].loss);
        }
    }

    #[test]
    fn snapshots_and_blow_up() {
        let (p, data, theta0) = quadratic();
        let cfg = TrainConfig {
            snapshot_every: Some(10),
            ..TrainConfig::new(OptimizerKind::HomeAdam, HyperParams::new(0.01).with_tau(1.0), 35, RngStream::new(2, 7))
        };
        let out = train(&p, &data, &theta0, &cfg).unwrap();
        assert_eq!(out.snapshots.len(), 4);
        assert_eq!(out.snapshots[0], theta0);
        assert_eq!(out.steps.len(), 35);
        assert!(out.blow_up.is_none());

        let cfg = TrainConfig::new(OptimizerKind::Sgd, HyperParams::new(1e150), 20, RngStream::new(2, 7));
        let out = train(&p, &data, &theta0, &cfg).unwrap();
        let t = out.blow_up.expect("huge step overflows");
        assert_eq!(out.steps.len() as u64, t - 1);
    }

    #[test]
    fn batches_average_gradients() {
        let (p, data, theta0) = quadratic();
        let cfg = TrainConfig {
            batch: 4,
            ..TrainConfig::new(OptimizerKind::Sgd, HyperParams::new(0.1), 1, RngStream::new(3, 7))
        };
        let out = train(&p, &data, &theta0, &cfg).unwrap();
        let idx = draw_indices(&cfg.index_stream, 1, data.n(), 4).unwrap();
        let g = p.mean_grad(&theta0, &data, idx).unwrap();
        assert_eq!(out.theta, theta0.sub(&g.scale(0.1)).unwrap());
    }
}
