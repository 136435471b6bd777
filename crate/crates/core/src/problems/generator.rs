use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Problem, ProblemKind, Sample};
use crate::error::{Error, Result};
use crate::numkit::{RngStream, Vec64};

/// Stream ids. Each purpose gets its own stream so that, e.g., drawing more
/// training samples never shifts the held-out set.
pub mod streams {
    pub const PLANT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const TWIN: u64 = 3;
    pub const HELDOUT: u64 = 4;
    pub const PROBE: u64 = 5;
    pub const INIT: u64 = 6;
    pub const INDEX: u64 = 7;
    pub const REPLICATE: u64 = 8;
}

/// A data distribution `D` with its planted ground truth.
///
/// Sample `k` of a dataset drawn with `data_seed` comes from
/// `RngStream(data_seed, DATA, k)`, so smaller datasets are prefixes of
/// larger ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    problem: Problem,
    seed: u64,
    noise: f64,
    feature_scale: f64,
    flip_rate: f64,
    planted: Vec64,
}

impl Generator {
    pub const DEFAULT_FLIP_RATE: f64 = 0.05;

    pub fn new(problem: Problem, seed: u64) -> Result<Self> {
        let noise = match problem.kind() {
            ProblemKind::Quadratic => 1.0,
            _ => 0.0,
        };
        let planted = plant(&problem, &mut RngStream::new(seed, streams::PLANT).rng())?;
        Ok(Self {
            problem,
            seed,
            noise,
            feature_scale: 1.0,
            flip_rate: Self::DEFAULT_FLIP_RATE,
            planted,
        })
    }

    /// Spread of quadratic centres around the planted optimum, or additive
    /// target noise for the MLP teacher.
    pub fn with_noise(mut self, noise: f64) -> Result<Self> {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidArgument("noise must be finite and >= 0".into()));
        }
        self.noise = noise;
        Ok(self)
    }

    /// Multiplier on logistic features (small values give small gradients and
    /// hence small second moments).
    pub fn with_feature_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument("feature scale must be > 0".into()));
        }
        self.feature_scale = scale;
        Ok(self)
    }

    pub fn with_flip_rate(mut self, rate: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&rate) {
            return Err(Error::InvalidArgument("flip rate must lie in [0, 0.5]".into()));
        }
        self.flip_rate = rate;
        Ok(self)
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn feature_scale(&self) -> f64 {
        self.feature_scale
    }

    pub fn flip_rate(&self) -> f64 {
        self.flip_rate
    }

    /// Planted optimum (quadratic), unit separator (logistic), global
    /// minimizer (Rosenbrock) or teacher parameters (MLP).
    pub fn planted(&self) -> &Vec64 {
        &self.planted
    }

    pub fn draw(&self, stream: RngStream) -> Sample {
        let mut rng = stream.rng();
        let d = self.problem.input_dim();
        match self.problem.kind() {
            ProblemKind::Quadratic => {
                let x = self
                    .planted
                    .iter()
                    .map(|&c| c + self.noise * normal(&mut rng))
                    .collect();
                Sample::new(Vec64::new(x).expect("non-empty"), 0.0)
            }
            ProblemKind::Logistic => {
                let x = Vec64::new(
                    (0..d)
                        .map(|_| self.feature_scale * normal(&mut rng))
                        .collect(),
                )
                .expect("non-empty");
                let margin = x.dot(&self.planted).expect("dims match");
                let mut y = if margin > 0.0 { 1.0 } else { 0.0 };
                if rng.random::<f64>() < self.flip_rate {
                    y = 1.0 - y;
                }
                Sample::new(x, y)
            }
            ProblemKind::Rosenbrock => Sample::new(Vec64::zeros(d), 0.0),
            ProblemKind::TinyMlp => {
                let x = Vec64::new((0..d).map(|_| normal(&mut rng)).collect())
                    .expect("non-empty");
                let probe = Sample::new(x.clone(), 0.0);
                let out = teacher_output(&self.problem, &self.planted, &probe);
                Sample::new(x, out + self.noise * normal(&mut rng))
            }
        }
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
        }
        if self.problem.kind() == ProblemKind::Rosenbrock && n != 1 {
            return Err(Error::InvalidArgument(
                "rosenbrock is a single-sample problem (n must be 1)".into(),
            ));
        }
        Ok(())
    }

    fn draw_many(&self, stream: RngStream, n: usize) -> Result<Dataset> {
        self.check_n(n)?;
        Dataset::new((0..n as u64).map(|k| self.draw(stream.at(k))).collect())
    }

    pub fn dataset(&self, n: usize) -> Result<Dataset> {
        self.dataset_with_seed(n, self.seed)
    }

    /// Training set drawn with its own seed (the distribution stays fixed).
    pub fn dataset_with_seed(&self, n: usize, data_seed: u64) -> Result<Dataset> {
        self.draw_many(RngStream::new(data_seed, streams::DATA), n)
    }

    /// Held-out set for the training set drawn with `data_seed`.
    pub fn held_out(&self, n: usize, data_seed: u64) -> Result<Dataset> {
        if self.problem.kind() == ProblemKind::Rosenbrock {
            return self.draw_many(RngStream::new(data_seed, streams::HELDOUT), 1);
        }
        self.draw_many(RngStream::new(data_seed, streams::HELDOUT), n)
    }

    /// Fixed probe points `z` for the finite sup in the stability estimate.
    pub fn probe_set(&self, n: usize) -> Result<Dataset> {
        if self.problem.kind() == ProblemKind::Rosenbrock {
            return self.draw_many(RngStream::new(self.seed, streams::PROBE), 1);
        }
        self.draw_many(RngStream::new(self.seed, streams::PROBE), n)
    }

    /// Independent replacement sample `z̃_i`.
    pub fn fresh_sample(&self, perturb_seed: u64, i: usize) -> Sample {
        self.draw(RngStream::new(perturb_seed, streams::TWIN).at(i as u64))
    }

    /// Default starting point: zero for the convex problems, `(−1.2, 1, …)`
    /// for Rosenbrock, a seeded small random init for the MLP.
    pub fn theta0(&self) -> Vec64 {
        let d = self.problem.dim();
        match self.problem.kind() {
            ProblemKind::Quadratic | ProblemKind::Logistic => Vec64::zeros(d),
            ProblemKind::Rosenbrock => Vec64::new(
                (0..d)
                    .map(|j| if j % 2 == 0 { -1.2 } else { 1.0 })
                    .collect(),
            )
            .expect("non-empty"),
            ProblemKind::TinyMlp => {
                let mut rng = RngStream::new(self.seed, streams::INIT).rng();
                mlp_params(&self.problem, &mut rng)
            }
        }
    }
}

pub fn make_dataset(kind: ProblemKind, n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    Generator::new(Problem::new(kind, dim)?, seed)?.dataset(n)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn plant(problem: &Problem, rng: &mut ChaCha8Rng) -> Result<Vec64> {
    let d = problem.input_dim();
    match problem.kind() {
        ProblemKind::Quadratic => Vec64::new((0..d).map(|_| normal(rng)).collect()),
        ProblemKind::Logistic => {
            let w = Vec64::new((0..d).map(|_| normal(rng)).collect())?;
            let norm = w.l2_norm();
            Ok(w.scale(1.0 / norm))
        }
        ProblemKind::Rosenbrock => Ok(Vec64::filled(d, 1.0)),
        ProblemKind::TinyMlp => Ok(mlp_params(problem, rng)),
    }
}

/// Weights scaled by fan-in, zero biases.
fn mlp_params(problem: &Problem, rng: &mut ChaCha8Rng) -> Vec64 {
    let (h, n_in) = (problem.hidden(), problem.input_dim());
    let mut p = Vec::with_capacity(problem.dim());
    let s1 = 1.0 / (n_in as f64).sqrt();
    p.extend((0..h * n_in).map(|_| s1 * normal(rng)));
    p.extend(std::iter::repeat_n(0.0, h));
    let s2 = 1.0 / (h as f64).sqrt();
    p.extend((0..h).map(|_| s2 * normal(rng)));
    p.push(0.0);
    Vec64::new(p).expect("non-empty")
}

fn teacher_output(problem: &Problem, teacher: &Vec64, z: &Sample) -> f64 {
    // With target 0 the loss is ½ŷ², and ∂loss/∂b2 = ŷ.
    let (_, g) = problem
        .loss_grad(teacher, z)
        .expect("teacher evaluation on finite input");
    g[problem.dim() - 1]
}
