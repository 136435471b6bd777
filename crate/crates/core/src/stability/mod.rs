//! Twin-trajectory stability probe.
//!
//! Two runs of the same optimizer, one on `S` and one on `S^(i)` (sample `i`
//! replaced), consume the same index stream. Their parameter gap
//! `‖θ_t − θ_t^(i)‖` is the empirical counterpart of uniform stability.

mod sweep;
mod train;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{draw_index, fmt_f64, RngStream, Vec64};
use crate::optim::{step, HyperParams, OptState, OptimizerKind};
use crate::problems::{empirical_risk, Dataset, Generator, Problem};

pub use sweep::{
    fit_loglog_slope, stability_sweep, ReplicateResult, SweepConfig, SweepRow, SweepTable,
};
pub use train::{train, TrainConfig, TrainOutcome, TrainStep};

/// `S^(i)`: `S` with sample `i` replaced by a fresh draw from `gen`.
pub fn make_twin(gen: &Generator, data: &Dataset, i: usize, perturb_seed: u64) -> Result<Dataset> {
    if i >= data.n() {
        return Err(Error::InvalidArgument(format!(
            "replaced index {i} out of range (n = {})",
            data.n()
        )));
    }
    data.replaced(i, gen.fresh_sample(perturb_seed, i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinRun {
    pub problem: Problem,
    pub base: Dataset,
    pub perturbed: Dataset,
    pub replaced_index: usize,
    pub index_stream: RngStream,
    pub kind: OptimizerKind,
    pub hp: HyperParams,
    pub horizon: u64,
    pub theta0: Vec64,
}

impl TwinRun {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate_for(self.kind)?;
        if self.base.n() != self.perturbed.n() {
            return Err(Error::InvalidArgument(
                "twin datasets must have equal size".into(),
            ));
        }
        if self.replaced_index >= self.base.n() {
            return Err(Error::InvalidArgument("replaced index out of range".into()));
        }
        let others_differ = self
            .base
            .samples()
            .iter()
            .zip(self.perturbed.samples())
            .enumerate()
            .any(|(k, (a, b))| k != self.replaced_index && a != b);
        if others_differ {
            return Err(Error::InvalidArgument(
                "twin datasets may differ only at the replaced index".into(),
            ));
        }
        if self.theta0.dim() != self.problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.problem.dim(),
                found: self.theta0.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRecord {
    pub t: u64,
    pub div_l2: f64,
    pub div_m: f64,
    pub div_v: f64,
    /// `min_j (v̂_t)_j` of the base run.
    pub rho_t: f64,
    /// Whether `j_t` was the replaced index.
    pub hit_replaced: bool,
    /// Base run's switch diagnostic.
    pub switched_home: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DivergenceTrace {
    pub records: Vec<DivergenceRecord>,
}

impl DivergenceTrace {
    pub const CSV_HEADER: &'static str = "t,div_l2,div_m,div_v,rho_t,hit_replaced,switched_home";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_div_l2(&self) -> Option<f64> {
        self.records.last().map(|r| r.div_l2)
    }

    pub fn first_hit(&self) -> Option<u64> {
        self.records.iter().find(|r| r.hit_replaced).map(|r| r.t)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t,
                fmt_f64(r.div_l2),
                fmt_f64(r.div_m),
                fmt_f64(r.div_v),
                fmt_f64(r.rho_t),
                u8::from(r.hit_replaced),
                fmt_f64(r.switched_home)
            );
        }
        out
    }
}

/// Final iterates of both runs alongside the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinOutcome {
    pub trace: DivergenceTrace,
    pub theta: Vec64,
    pub theta_twin: Vec64,
}

pub fn run_twin(cfg: &TwinRun) -> Result<DivergenceTrace> {
    Ok(run_twin_full(cfg)?.trace)
}

pub fn run_twin_full(cfg: &TwinRun) -> Result<TwinOutcome> {
    cfg.validate()?;
    let p = &cfg.problem;
    let mut theta = cfg.theta0.clone();
    let mut theta_i = cfg.theta0.clone();
    let mut state = OptState::new(p.dim());
    let mut state_i = OptState::new(p.dim());
    let mut trace = DivergenceTrace::default();
    for t in 1..=cfg.horizon {
        let j = draw_index(&cfg.index_stream, t, cfg.base.n())?;
        let advanced = (|| {
            let (_, g) = p.loss_grad(&theta, cfg.base.get(j)?)?;
            let (_, g_i) = p.loss_grad(&theta_i, cfg.perturbed.get(j)?)?;
            let a = step(cfg.kind, &cfg.hp, &state, &theta, &g)?;
            let b = step(cfg.kind, &cfg.hp, &state_i, &theta_i, &g_i)?;
            Ok::<_, Error>((a, b))
        })();
        let (a, b) = match advanced {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                return Err(Error::TwinBlowUp {
                    step: t,
                    trace: Box::new(trace),
                })
            }
            Err(e) => return Err(e),
        };
        let record = DivergenceRecord {
            t,
            div_l2: a.theta.dist(&b.theta)?,
            div_m: a.state.m.dist(&b.state.m)?,
            div_v: a.state.v.dist(&b.state.v)?,
            rho_t: a.record.rho_t,
            hit_replaced: j == cfg.replaced_index,
            switched_home: a.record.switched_home,
        };
        let finite = [record.div_l2, record.div_m, record.div_v]
            .iter()
            .all(|x| x.is_finite());
        trace.records.push(record);
        if !finite {
            return Err(Error::TwinBlowUp {
                step: t,
                trace: Box::new(trace),
            });
        }
        (theta, state) = (a.theta, a.state);
        (theta_i, state_i) = (b.theta, b.state);
    }
    Ok(TwinOutcome {
        trace,
        theta,
        theta_twin: theta_i,
    })
}

/// `|F_heldout(θ) − F_S(θ)|`.
pub fn generalization_gap(
    p: &Problem,
    theta: &Vec64,
    train_set: &Dataset,
    held_out: &Dataset,
) -> Result<f64> {
    Ok((empirical_risk(p, theta, held_out)? - empirical_risk(p, theta, train_set)?).abs())
}

/// `max_z |f(θ; z) − f(θ'; z)|` over a probe set.
pub fn probe_loss_gap(p: &Problem, theta: &Vec64, theta_twin: &Vec64, probes: &Dataset) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for z in probes.samples() {
        worst = worst.max((p.loss(theta, z)? - p.loss(theta_twin, z)?).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{ProblemKind, Sample};

    fn logistic_twin(kind: OptimizerKind, hp: HyperParams, horizon: u64) -> TwinRun {
        let gen = Generator::new(Problem::new(ProblemKind::Logistic, 3).unwrap(), 5).unwrap();
        let base = gen.dataset(10).unwrap();
        let perturbed = make_twin(&gen, &base, 4, 77).unwrap();
        TwinRun {
            problem: gen.problem().clone(),
            base,
            perturbed,
            replaced_index: 4,
            index_stream: RngStream::new(5, 100),
            kind,
            hp,
            horizon,
            theta0: gen.theta0(),
        }
    }

    #[test]
    fn twin_differs_in_one_place() {
        let gen = Generator::new(Problem::new(ProblemKind::Logistic, 3).unwrap(), 1).unwrap();
        let s = gen.dataset(6).unwrap();
        let t = make_twin(&gen, &s, 2, 9).unwrap();
        let diffs: Vec<usize> = (0..6).filter(|&k| s.samples()[k] != t.samples()[k]).collect();
        assert_eq!(diffs, vec![2]);
        assert_eq!(make_twin(&gen, &s, 2, 9).unwrap(), t);
        assert!(make_twin(&gen, &s, 6, 9).is_err());
        let one = gen.dataset(1).unwrap();
        assert_ne!(make_twin(&gen, &one, 0, 3).unwrap().samples()[0], one.samples()[0]);
    }

    #[test]
    fn zero_until_first_hit() {
        let cfg = logistic_twin(OptimizerKind::Adam, HyperParams::new(0.05), 200);
        let trace = run_twin(&cfg).unwrap();
        let hit = trace.first_hit().expect("200 draws from 10 samples hit index 4");
        for r in &trace.records {
            if r.t < hit {
                assert_eq!((r.div_l2, r.div_m, r.div_v), (0.0, 0.0, 0.0));
            }
        }
        assert!(trace.records[hit as usize - 1].div_l2 > 0.0);
    }

    #[test]
    fn sgd_one_hit_jump() {
        let p = Problem::new(ProblemKind::Quadratic, 2).unwrap();
        let z = |a: f64, b: f64| Sample::new(Vec64::from_slice(&[a, b]).unwrap(), 0.0);
        let base = Dataset::new(vec![z(1.0, 2.0)]).unwrap();
        let perturbed = Dataset::new(vec![z(-1.0, 0.5)]).unwrap();
        let eta = 0.1;
        let cfg = TwinRun {
            problem: p,
            base,
            perturbed,
            replaced_index: 0,
            index_stream: RngStream::new(0, 0),
            kind: OptimizerKind::Sgd,
            hp: HyperParams::new(eta),
            horizon: 1,
            theta0: Vec64::zeros(2),
        };
        let trace = run_twin(&cfg).unwrap();
        // ∇f(0; z) − ∇f(0; z̃) = z̃ − z = (−2, −1.5)
        let expected = eta * (4.0f64 + 2.25).sqrt();
        assert!((trace.records[0].div_l2 - expected).abs() < 1e-15);
        assert!(trace.records[0].hit_replaced);
    }

    #[test]
    fn csv_layout() {
        let cfg = logistic_twin(OptimizerKind::Sgd, HyperParams::new(0.1), 3);
        let csv = run_twin(&cfg).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], DivergenceTrace::CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 7);
    }

    #[test]
    fn blow_up_carries_partial_trace() {
        // Gradient descent with η far above 2/L diverges geometrically.
        let p = Problem::new(ProblemKind::Quadratic, 1).unwrap();
        let base = Dataset::new(vec![Sample::new(Vec64::filled(1, 1.0), 0.0)]).unwrap();
        let cfg = TwinRun {
            problem: p,
            perturbed: base.clone(),
            base,
            replaced_index: 0,
            index_stream: RngStream::new(0, 0),
            kind: OptimizerKind::Sgd,
            hp: HyperParams::new(1e150),
            horizon: 50,
            theta0: Vec64::zeros(1),
        };
        match run_twin(&cfg) {
            Err(Error::TwinBlowUp { step, trace }) => {
                assert!(step > 1);
                assert_eq!(trace.len() as u64, step - 1);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn gap_of_identical_sets_is_zero() {
        let gen = Generator::new(Problem::new(ProblemKind::Logistic, 3).unwrap(), 2).unwrap();
        let s = gen.dataset(20).unwrap();
        let th = Vec64::from_slice(&[0.3, -0.2, 1.0]).unwrap();
        assert_eq!(generalization_gap(gen.problem(), &th, &s, &s).unwrap(), 0.0);
    }
}
