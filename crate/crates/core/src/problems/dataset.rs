use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Vec64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec64,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A non-empty, immutable training set `S = {z_1, …, z_N}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        };
        let dim = first.x.dim();
        for z in &samples {
            if z.x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: z.x.dim(),
                });
            }
            if !z.x.is_finite() || !z.y.is_finite() {
                return Err(Error::NonFinite {
                    context: "dataset sample",
                    coordinate: None,
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> Result<&Sample> {
        self.samples.get(i).ok_or_else(|| {
            Error::InvalidArgument(format!("sample index {i} out of range (n = {})", self.n()))
        })
    }

    /// Copy with sample `i` swapped for `z`.
    pub fn replaced(&self, i: usize, z: Sample) -> Result<Dataset> {
        self.get(i)?;
        let mut samples = self.samples.clone();
        samples[i] = z;
        Dataset::new(samples)
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        Dataset::new(samples)
    }

    /// One sample per line: comma-separated features, a tab, the target.
    /// Floats use the shortest representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for z in &self.samples {
            let feats: Vec<String> = z.x.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}\t{:?}", feats.join(","), z.y);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Dataset> {
        let mut samples = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse { line: k + 1, reason };
            let (feats, target) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("missing tab separator".into()))?;
            let x = feats
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(format!("bad feature: {e}")))?;
            let y = target
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad target: {e}")))?;
            samples.push(Sample::new(Vec64::new(x)?, y));
        }
        Dataset::new(samples)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Dataset> {
        Dataset::from_text(&std::fs::read_to_string(path)?)
    }
}
