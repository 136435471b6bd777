//! Flat `section.key = value` experiment configuration.
//!
//! Every key has a default; the resolved form written by [`ExperimentConfig::to_text`]
//! lists all of them, so a run directory always carries the exact settings
//! that produced it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use homeadam::optim::{preset, HyperParams, OptimizerKind, PRESET_NAMES};
use homeadam::problems::{Generator, Problem, ProblemKind};
use homeadam::Vec64;

use crate::error::CliError;

/// Where the analysis constants for `bounds` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantSource {
    /// Measured along a training run of the configured problem and optimizer.
    Measured,
    /// Taken from the `bounds.g`, `bounds.l`, `bounds.sigma`, `bounds.rho` keys.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaSchedule {
    Fixed,
    /// `η = T^{-1/2}` at each grid point.
    InvSqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemBlock {
    pub kind: ProblemKind,
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    pub noise: f64,
    pub feature_scale: f64,
    pub flip_rate: f64,
    pub hidden: usize,
    pub curvature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerBlock {
    /// Canonically ordered, without duplicates.
    pub kinds: Vec<OptimizerKind>,
    pub preset: Option<String>,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lambda: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunBlock {
    pub horizon: u64,
    pub batch: usize,
    pub ns: Vec<usize>,
    pub n_pairs: usize,
    pub probe_size: usize,
    pub heldout_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsBlock {
    pub source: ConstantSource,
    pub g: f64,
    pub l: f64,
    pub sigma: f64,
    pub rho: f64,
    /// `F(θ_0) − F*` for given constants.
    pub f0_gap: f64,
    pub horizon: u64,
    pub lambdas: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub eta_schedule: EtaSchedule,
    pub gamma: f64,
    /// `None` means `(1 − β1)/η`.
    pub c: Option<f64>,
    pub probes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemBlock,
    pub optimizer: OptimizerBlock,
    pub run: RunBlock,
    pub bounds: BoundsBlock,
    pub output: OutputBlock,
}

const KEYS: &[&str] = &[
    "name",
    "problem.kind",
    "problem.n",
    "problem.dim",
    "problem.seed",
    "problem.noise",
    "problem.feature_scale",
    "problem.flip_rate",
    "problem.hidden",
    "problem.curvature",
    "optimizer.kind",
    "optimizer.preset",
    "optimizer.eta",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.eps",
    "optimizer.lambda",
    "optimizer.tau",
    "run.horizon",
    "run.batch",
    "run.ns",
    "run.n_pairs",
    "run.probe_size",
    "run.heldout_size",
    "bounds.source",
    "bounds.g",
    "bounds.l",
    "bounds.sigma",
    "bounds.rho",
    "bounds.f0_gap",
    "bounds.horizon",
    "bounds.lambdas",
    "bounds.t_grid",
    "bounds.eta_schedule",
    "bounds.gamma",
    "bounds.c",
    "bounds.probes",
    "output.dir",
    "output.formats",
];

struct Entry {
    value: String,
    line: usize,
}

/// Raw key/value pairs with their line numbers.
struct Raw(BTreeMap<String, Entry>);

fn config_err(key: &str, line: usize, reason: impl std::fmt::Display) -> CliError {
    if line == 0 {
        CliError::Config(format!("{key}: {reason}"))
    } else {
        CliError::Config(format!("{key}: {reason} (line {line})"))
    }
}

impl Raw {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (k, raw_line) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {line}: expected `section.key = value`, got `{content}`"))
            })?;
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(config_err(&key, line, "unknown key"));
            }
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(config_err(&key, line, "empty value"));
            }
            if let Some(prev) = map.insert(key.clone(), Entry { value, line }) {
                return Err(config_err(&key, line, format!("duplicate key (first set on line {})", prev.line)));
            }
        }
        Ok(Raw(map))
    }

    fn get<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, CliError> {
        match self.0.get(key) {
            None => Ok(default),
            Some(e) => parse(&e.value).map_err(|r| config_err(key, e.line, r)),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |e| e.line)
    }
}

fn p_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("expected a number, got `{s}`"))
}

fn p_u64(s: &str) -> Result<u64, String> {
    s.parse::<u64>().map_err(|_| format!("expected a nonnegative integer, got `{s}`"))
}

fn p_usize(s: &str) -> Result<usize, String> {
    s.parse::<usize>().map_err(|_| format!("expected a nonnegative integer, got `{s}`"))
}

fn p_list<T>(s: &str, item: fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    s.split(',').map(|x| item(x.trim())).collect()
}

fn p_opt_f64(s: &str) -> Result<Option<f64>, String> {
    if s == "none" || s == "auto" {
        Ok(None)
    } else {
        p_f64(s).map(Some)
    }
}

fn fmt_list<T: std::fmt::Debug>(xs: &[T]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let raw = Raw::parse(text)?;
        let name = raw.get("name", "experiment".to_string(), |s| Ok(s.to_string()))?;
        if name.contains(['/', '\\', ',']) {
            return Err(config_err("name", raw.line("name"), "must not contain `/`, `\\` or `,`"));
        }

        let kind = raw.get("problem.kind", ProblemKind::Logistic, |s| {
            s.parse::<ProblemKind>().map_err(|e| e.to_string())
        })?;
        let default_dim = if kind == ProblemKind::Rosenbrock { 2 } else { 5 };
        let default_n = if kind == ProblemKind::Rosenbrock { 1 } else { 100 };
        let default_noise = if kind == ProblemKind::Quadratic { 1.0 } else { 0.0 };
        let problem = ProblemBlock {
            kind,
            n: raw.get("problem.n", default_n, p_usize)?,
            dim: raw.get("problem.dim", default_dim, p_usize)?,
            seed: raw.get("problem.seed", 0, p_u64)?,
            noise: raw.get("problem.noise", default_noise, p_f64)?,
            feature_scale: raw.get("problem.feature_scale", 1.0, p_f64)?,
            flip_rate: raw.get("problem.flip_rate", Generator::DEFAULT_FLIP_RATE, p_f64)?,
            hidden: raw.get("problem.hidden", Problem::DEFAULT_HIDDEN, p_usize)?,
            curvature: raw.get("problem.curvature", None, |s| {
                if s == "none" {
                    Ok(None)
                } else {
                    p_list(s, p_f64).map(Some)
                }
            })?,
        };

        let mut kinds = raw.get("optimizer.kind", vec![OptimizerKind::HomeAdam], |s| {
            p_list(s, |x| x.parse::<OptimizerKind>().map_err(|e| e.to_string()))
        })?;
        kinds.sort_by_key(|k| OptimizerKind::ALL.iter().position(|a| a == k));
        kinds.dedup();
        let preset_name = raw.get("optimizer.preset", None, |s| {
            if s == "none" {
                Ok(None)
            } else if PRESET_NAMES.contains(&s) {
                Ok(Some(s.to_string()))
            } else {
                Err(format!("unknown preset `{s}` (valid: none, {})", PRESET_NAMES.join(", ")))
            }
        })?;
        let base = match &preset_name {
            Some(p) => preset(p, kinds[0]).map_err(|e| config_err("optimizer.preset", raw.line("optimizer.preset"), e))?,
            None => HyperParams::new(1e-2).with_tau(1.0),
        };
        let optimizer = OptimizerBlock {
            preset: preset_name,
            eta: raw.get("optimizer.eta", base.eta, p_f64)?,
            beta1: raw.get("optimizer.beta1", base.beta1, p_f64)?,
            beta2: raw.get("optimizer.beta2", base.beta2, p_f64)?,
            eps: raw.get("optimizer.eps", base.eps, p_f64)?,
            lambda: raw.get("optimizer.lambda", base.lambda, p_f64)?,
            tau: raw.get("optimizer.tau", base.tau.unwrap_or(1.0), p_f64)?,
            kinds,
        };

        let run = RunBlock {
            horizon: raw.get("run.horizon", 1000, p_u64)?,
            batch: raw.get("run.batch", 1, p_usize)?,
            ns: raw.get("run.ns", vec![100, 200, 400], |s| p_list(s, p_usize))?,
            n_pairs: raw.get("run.n_pairs", 50, p_usize)?,
            probe_size: raw.get("run.probe_size", 100, p_usize)?,
            heldout_size: raw.get("run.heldout_size", 2000, p_usize)?,
        };

        let bounds = BoundsBlock {
            source: raw.get("bounds.source", ConstantSource::Measured, |s| match s {
                "measured" => Ok(ConstantSource::Measured),
                "given" => Ok(ConstantSource::Given),
                _ => Err(format!("expected `measured` or `given`, got `{s}`")),
            })?,
            g: raw.get("bounds.g", 1.0, p_f64)?,
            l: raw.get("bounds.l", 1.0, p_f64)?,
            sigma: raw.get("bounds.sigma", 1.0, p_f64)?,
            rho: raw.get("bounds.rho", 0.1, p_f64)?,
            f0_gap: raw.get("bounds.f0_gap", 1.0, p_f64)?,
            horizon: raw.get("bounds.horizon", 200, p_u64)?,
            lambdas: raw.get("bounds.lambdas", vec![0.0, 1e-5], |s| p_list(s, p_f64))?,
            t_grid: raw.get("bounds.t_grid", vec![256.0, 1024.0, 4096.0], |s| p_list(s, p_f64))?,
            eta_schedule: raw.get("bounds.eta_schedule", EtaSchedule::Fixed, |s| match s {
                "fixed" => Ok(EtaSchedule::Fixed),
                "inv_sqrt" => Ok(EtaSchedule::InvSqrt),
                _ => Err(format!("expected `fixed` or `inv_sqrt`, got `{s}`")),
            })?,
            gamma: raw.get("bounds.gamma", 0.75, p_f64)?,
            c: raw.get("bounds.c", None, p_opt_f64)?,
            probes: raw.get("bounds.probes", 20, p_u64)?,
        };

        let formats = raw.get("output.formats", vec!["csv".to_string(), "json".to_string()], |s| {
            s.split(',')
                .map(|f| match f.trim() {
                    f @ ("csv" | "json") => Ok(f.to_string()),
                    other => Err(format!("unknown format `{other}` (valid: csv, json)")),
                })
                .collect()
        })?;
        let output = OutputBlock {
            dir: raw.get("output.dir", PathBuf::from("out"), |s| Ok(PathBuf::from(s)))?,
            csv: formats.iter().any(|f| f == "csv"),
            json: formats.iter().any(|f| f == "json"),
        };

        let cfg = ExperimentConfig {
            name,
            problem,
            optimizer,
            run,
            bounds,
            output,
        };
        cfg.validate(&raw)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_text(&text)
    }

    fn validate(&self, raw: &Raw) -> Result<(), CliError> {
        let check = |ok: bool, key: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(config_err(key, raw.line(key), reason))
            }
        };
        let p = &self.problem;
        check(p.n >= 1, "problem.n", "must be >= 1")?;
        check(p.dim >= 1, "problem.dim", "must be >= 1")?;
        check(
            p.kind != ProblemKind::Rosenbrock || p.n == 1,
            "problem.n",
            "rosenbrock is deterministic and takes n = 1",
        )?;
        check(p.noise >= 0.0 && p.noise.is_finite(), "problem.noise", "must be finite and >= 0")?;
        check(
            p.feature_scale > 0.0 && p.feature_scale.is_finite(),
            "problem.feature_scale",
            "must be finite and > 0",
        )?;
        check((0.0..=0.5).contains(&p.flip_rate), "problem.flip_rate", "must lie in [0, 0.5]")?;
        check(p.hidden >= 1, "problem.hidden", "must be >= 1")?;
        check(
            !raw.has("problem.hidden") || p.kind == ProblemKind::TinyMlp,
            "problem.hidden",
            "only applies to tiny_mlp",
        )?;
        if let Some(c) = &p.curvature {
            check(p.kind == ProblemKind::Quadratic, "problem.curvature", "only applies to quadratic")?;
            check(c.len() == p.dim, "problem.curvature", "needs one entry per dimension")?;
            check(c.iter().all(|&k| k > 0.0 && k.is_finite()), "problem.curvature", "entries must be > 0")?;
        }
        self.generator().map_err(|e| config_err("problem", 0, e))?;

        for &kind in &self.optimizer.kinds {
            self.hyper_params(kind)
                .map_err(|e| config_err("optimizer", raw.line("optimizer.kind"), e))?;
        }

        let r = &self.run;
        check(r.horizon >= 1, "run.horizon", "must be >= 1")?;
        check(r.batch >= 1, "run.batch", "must be >= 1")?;
        check(!r.ns.is_empty() && r.ns.iter().all(|&n| n >= 2), "run.ns", "every N must be >= 2")?;
        check(r.n_pairs >= 10, "run.n_pairs", "must be >= 10")?;
        check(r.probe_size >= 1, "run.probe_size", "must be >= 1")?;
        check(r.heldout_size >= 1, "run.heldout_size", "must be >= 1")?;

        let b = &self.bounds;
        for (key, x) in [("bounds.g", b.g), ("bounds.l", b.l), ("bounds.sigma", b.sigma), ("bounds.rho", b.rho), ("bounds.f0_gap", b.f0_gap)] {
            check(x >= 0.0 && x.is_finite(), key, "must be finite and >= 0")?;
        }
        check(b.horizon >= 1, "bounds.horizon", "must be >= 1")?;
        check(
            !b.lambdas.is_empty() && b.lambdas.iter().all(|&l| l >= 0.0 && l.is_finite()),
            "bounds.lambdas",
            "must be finite and >= 0",
        )?;
        check(
            !b.t_grid.is_empty() && b.t_grid.iter().all(|&t| t >= 1.0 && t.is_finite()),
            "bounds.t_grid",
            "every T must be finite and >= 1",
        )?;
        check(b.gamma.is_finite(), "bounds.gamma", "must be finite")?;
        check(b.c.is_none_or(|c| c > 0.0 && c.is_finite()), "bounds.c", "must be `auto` or > 0")?;
        check(b.probes >= 1, "bounds.probes", "must be >= 1")?;
        check(self.output.csv || self.output.json, "output.formats", "must name at least one format")?;
        Ok(())
    }

    /// The data distribution described by the problem block.
    pub fn generator(&self) -> homeadam::Result<Generator> {
        let p = &self.problem;
        let mut problem = Problem::new(p.kind, p.dim)?;
        if p.kind == ProblemKind::TinyMlp {
            problem = problem.with_hidden(p.hidden)?;
        }
        if let Some(c) = &p.curvature {
            problem = problem.with_curvature(Vec64::from_slice(c)?)?;
        }
        Generator::new(problem, p.seed)?
            .with_noise(p.noise)?
            .with_feature_scale(p.feature_scale)?
            .with_flip_rate(p.flip_rate)
    }

    /// Shared hyperparameters adapted to `kind`: `τ` applies only to the
    /// switching kinds and `λ` is dropped for kinds without a decay term.
    pub fn hyper_params(&self, kind: OptimizerKind) -> homeadam::Result<HyperParams> {
        let o = &self.optimizer;
        let mut hp = HyperParams::new(o.eta)
            .with_betas(o.beta1, o.beta2)
            .with_eps(o.eps);
        if !kind.forbids_decay() {
            hp = hp.with_lambda(o.lambda);
        }
        if kind.is_home() {
            hp = hp.with_tau(o.tau);
        }
        hp.validate_for(kind)?;
        Ok(hp)
    }

    /// Every key with its resolved value, in schema order.
    pub fn to_text(&self) -> String {
        let p = &self.problem;
        let o = &self.optimizer;
        let r = &self.run;
        let b = &self.bounds;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("name", self.name.clone());
        kv("problem.kind", p.kind.name().to_string());
        kv("problem.n", p.n.to_string());
        kv("problem.dim", p.dim.to_string());
        kv("problem.seed", p.seed.to_string());
        kv("problem.noise", format!("{:?}", p.noise));
        kv("problem.feature_scale", format!("{:?}", p.feature_scale));
        kv("problem.flip_rate", format!("{:?}", p.flip_rate));
        if p.kind == ProblemKind::TinyMlp {
            kv("problem.hidden", p.hidden.to_string());
        }
        kv(
            "problem.curvature",
            p.curvature.as_deref().map_or("none".to_string(), fmt_list),
        );
        kv(
            "optimizer.kind",
            o.kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(", "),
        );
        kv("optimizer.preset", o.preset.clone().unwrap_or_else(|| "none".into()));
        kv("optimizer.eta", format!("{:?}", o.eta));
        kv("optimizer.beta1", format!("{:?}", o.beta1));
        kv("optimizer.beta2", format!("{:?}", o.beta2));
        kv("optimizer.eps", format!("{:?}", o.eps));
        kv("optimizer.lambda", format!("{:?}", o.lambda));
        kv("optimizer.tau", format!("{:?}", o.tau));
        kv("run.horizon", r.horizon.to_string());
        kv("run.batch", r.batch.to_string());
        kv("run.ns", fmt_list(&r.ns));
        kv("run.n_pairs", r.n_pairs.to_string());
        kv("run.probe_size", r.probe_size.to_string());
        kv("run.heldout_size", r.heldout_size.to_string());
        kv(
            "bounds.source",
            match b.source {
                ConstantSource::Measured => "measured",
                ConstantSource::Given => "given",
            }
            .to_string(),
        );
        kv("bounds.g", format!("{:?}", b.g));
        kv("bounds.l", format!("{:?}", b.l));
        kv("bounds.sigma", format!("{:?}", b.sigma));
        kv("bounds.rho", format!("{:?}", b.rho));
        kv("bounds.f0_gap", format!("{:?}", b.f0_gap));
        kv("bounds.horizon", b.horizon.to_string());
        kv("bounds.lambdas", fmt_list(&b.lambdas));
        kv("bounds.t_grid", fmt_list(&b.t_grid));
        kv(
            "bounds.eta_schedule",
            match b.eta_schedule {
                EtaSchedule::Fixed => "fixed",
                EtaSchedule::InvSqrt => "inv_sqrt",
            }
            .to_string(),
        );
        kv("bounds.gamma", format!("{:?}", b.gamma));
        kv("bounds.c", b.c.map_or("auto".to_string(), |c| format!("{c:?}")));
        kv("bounds.probes", b.probes.to_string());
        kv("output.dir", self.output.dir.display().to_string());
        let mut formats = Vec::new();
        if self.output.csv {
            formats.push("csv");
        }
        if self.output.json {
            formats.push("json");
        }
        kv("output.formats", formats.join(", "));
        s
    }

    /// The single optimizer kind of a training run.
    pub fn single_kind(&self) -> Result<OptimizerKind, CliError> {
        match self.optimizer.kinds.as_slice() {
            [k] => Ok(*k),
            _ => Err(CliError::Config(
                "optimizer.kind: this command takes exactly one kind".into(),
            )),
        }
    }
}
