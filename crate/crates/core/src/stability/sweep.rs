use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generalization_gap, make_twin, probe_loss_gap, run_twin_full, DivergenceTrace, TwinRun};
use crate::error::{Error, Result};
use crate::numkit::{draw_index, RngStream};
use crate::optim::{HyperParams, OptimizerKind};
use crate::problems::{streams, Dataset, Generator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: OptimizerKind,
    pub hp: HyperParams,
    pub generator: Generator,
    pub ns: Vec<usize>,
    pub horizon: u64,
    pub n_pairs: usize,
    pub seed: u64,
    /// Size of the fixed probe set standing in for `sup_z`.
    pub probe_size: usize,
    pub heldout_size: usize,
}

impl SweepConfig {
    pub fn new(
        kind: OptimizerKind,
        hp: HyperParams,
        generator: Generator,
        ns: Vec<usize>,
        horizon: u64,
        n_pairs: usize,
        seed: u64,
    ) -> Self {
        Self {
            kind,
            hp,
            generator,
            ns,
            horizon,
            n_pairs,
            seed,
            probe_size: 100,
            heldout_size: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub n: usize,
    pub pair: usize,
    pub replaced_index: usize,
    pub trace: DivergenceTrace,
    /// `None` when the twin run blew up.
    pub eps: Option<f64>,
    pub gap: Option<f64>,
    pub blow_up: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub mean_final_div: f64,
    pub eps_hat: f64,
    pub gap_hat: f64,
    pub n_finite: usize,
    pub n_blowups: usize,
    /// Mean of `div_l2(t)` over finite replicates, indexed by `t − 1`.
    pub mean_div_trace: Vec<f64>,
    /// Smallest `rho_t` seen in any finite replicate's base run.
    pub min_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln eps_hat` against `ln N`.
    pub slope: Option<f64>,
    pub replicates: Vec<ReplicateResult>,
}

/// Replicate streams depend only on `(seed, pair)`, so the same pair index
/// sees the same data prefix, replaced index stream and sample order at
/// every `N`.
struct ReplicateSeeds {
    data_seed: u64,
    perturb_seed: u64,
    choice: RngStream,
    index_stream: RngStream,
}

fn replicate_seeds(seed: u64, pair: usize) -> ReplicateSeeds {
    let rep = RngStream::new(seed, streams::REPLICATE).derive_seed(pair as u64);
    let local = RngStream::new(rep, streams::REPLICATE);
    ReplicateSeeds {
        data_seed: rep,
        perturb_seed: local.derive_seed(1),
        choice: local.at(2),
        index_stream: RngStream::new(rep, streams::INDEX),
    }
}

pub fn stability_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.hp.validate_for(cfg.kind)?;
    if cfg.ns.is_empty() || cfg.ns.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument("every N must be >= 2".into()));
    }
    if cfg.n_pairs < 10 {
        return Err(Error::InvalidArgument("n_pairs must be >= 10".into()));
    }
    let gen = &cfg.generator;
    let probes = gen.probe_set(cfg.probe_size)?;
    let jobs: Vec<(usize, usize)> = cfg
        .ns
        .iter()
        .flat_map(|&n| (0..cfg.n_pairs).map(move |p| (n, p)))
        .collect();
    let replicates = jobs
        .par_iter()
        .map(|&(n, pair)| run_replicate(cfg, &probes, n, pair))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<SweepRow> = cfg
        .ns
        .iter()
        .map(|&n| summarize(n, cfg.horizon, replicates.iter().filter(|r| r.n == n)))
        .collect();
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.eps_hat > 0.0 && r.eps_hat.is_finite())
        .map(|r| (r.n as f64, r.eps_hat))
        .collect();
    Ok(SweepTable {
        slope: fit_loglog_slope(&points),
        rows,
        replicates,
    })
}

fn run_replicate(cfg: &SweepConfig, probes: &Dataset, n: usize, pair: usize) -> Result<ReplicateResult> {
    let gen = &cfg.generator;
    let seeds = replicate_seeds(cfg.seed, pair);
    let base = gen.dataset_with_seed(n, seeds.data_seed)?;
    let i = draw_index(&seeds.choice, 0, n)?;
    let perturbed = make_twin(gen, &base, i, seeds.perturb_seed)?;
    let twin = TwinRun {
        problem: gen.problem().clone(),
        base,
        perturbed,
        replaced_index: i,
        index_stream: seeds.index_stream,
        kind: cfg.kind,
        hp: cfg.hp,
        horizon: cfg.horizon,
        theta0: gen.theta0(),
    };
    match run_twin_full(&twin) {
        Ok(out) => {
            let p = gen.problem();
            let eps = probe_loss_gap(p, &out.theta, &out.theta_twin, probes)?;
            let held = gen.held_out(cfg.heldout_size, seeds.data_seed)?;
            let gap = generalization_gap(p, &out.theta, &twin.base, &held)?;
            Ok(ReplicateResult {
                n,
                pair,
                replaced_index: i,
                trace: out.trace,
                eps: Some(eps),
                gap: Some(gap),
                blow_up: None,
            })
        }
        Err(Error::TwinBlowUp { step, trace }) => Ok(ReplicateResult {
            n,
            pair,
            replaced_index: i,
            trace: *trace,
            eps: None,
            gap: None,
            blow_up: Some(step),
        }),
        Err(e) => Err(e),
    }
}

fn summarize<'a>(n: usize, horizon: u64, reps: impl Iterator<Item = &'a ReplicateResult>) -> SweepRow {
    let mut finite = Vec::new();
    let mut n_blowups = 0;
    for r in reps {
        if r.blow_up.is_some() {
            n_blowups += 1;
        } else {
            finite.push(r);
        }
    }
    let k = finite.len() as f64;
    let mean = |f: &dyn Fn(&ReplicateResult) -> f64| {
        if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().map(|r| f(r)).sum::<f64>() / k
        }
    };
    let mut mean_div_trace = vec![0.0; horizon as usize];
    for r in &finite {
        for (acc, rec) in mean_div_trace.iter_mut().zip(&r.trace.records) {
            *acc += rec.div_l2 / k;
        }
    }
    let min_rho = finite
        .iter()
        .flat_map(|r| r.trace.records.iter().map(|x| x.rho_t))
        .fold(f64::INFINITY, f64::min);
    SweepRow {
        n,
        mean_final_div: mean(&|r| r.trace.final_div_l2().unwrap_or(0.0)),
        eps_hat: mean(&|r| r.eps.unwrap_or(f64::NAN)),
        gap_hat: mean(&|r| r.gap.unwrap_or(f64::NAN)),
        n_finite: finite.len(),
        n_blowups,
        mean_div_trace,
        min_rho,
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`; `None` with fewer
/// than two distinct `x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}
