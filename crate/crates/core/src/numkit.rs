//! Dense vectors, counter-based random streams and finite differences.
//!
//! Everything here is a pure function of its inputs. [`RngStream`] in
//! particular never carries hidden state: the bits produced at a given
//! `(seed, stream_id, counter)` triple are fixed, so two twin runs that share a
//! stream see the same sample indices without sharing anything mutable.

use std::fmt;
use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-empty dense vector of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Vec64 {
    data: Vec<f64>,
}

impl Vec64 {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("vector must have dim >= 1".into()));
        }
        Ok(Self { data })
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Self::new(data.to_vec())
    }

    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        Self::filled(dim, 0.0)
    }

    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim > 0, "Vec64 requires dim >= 1");
        Self {
            data: vec![value; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|x| !x.is_finite())
    }

    fn check_dim(&self, other: &Vec64) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Vec64, f: impl Fn(f64, f64) -> f64) -> Result<Vec64> {
        self.check_dim(other)?;
        Ok(Vec64 {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vec64 {
        Vec64 {
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Vec64) -> Result<Vec64> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vec64) -> Result<Vec64> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Vec64) -> Result<Vec64> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Element-wise quotient. A zero divisor is an error, never a silent Inf.
    pub fn div(&self, other: &Vec64) -> Result<Vec64> {
        self.check_dim(other)?;
        if let Some(index) = other.data.iter().position(|&b| b == 0.0) {
            return Err(Error::DivisionByZero { index });
        }
        self.zip_with(other, |a, b| a / b)
    }

    pub fn square(&self) -> Vec64 {
        self.map(|x| x * x)
    }

    pub fn scale(&self, s: f64) -> Vec64 {
        self.map(|x| s * x)
    }

    pub fn dot(&self, other: &Vec64) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn min_elem(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_elem(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// `‖self − other‖₂`.
    pub fn dist(&self, other: &Vec64) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Copy with element `j` replaced by `value`.
    pub fn with(&self, j: usize, value: f64) -> Vec64 {
        let mut data = self.data.clone();
        data[j] = value;
        Vec64 { data }
    }
}

impl Index<usize> for Vec64 {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.data[j]
    }
}

impl fmt::Debug for Vec64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.data).finish()
    }
}

impl<'a> IntoIterator for &'a Vec64 {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.data.iter()
    }
}

/// Scientific notation with 17 significant digits (round-trips exactly).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Counter-based random stream.
///
/// The ChaCha8 key is built from all three of `seed`, `stream_id` and
/// `counter`, so every counter value owns an independent generator. Reading
/// many values at one counter (e.g. a whole feature vector) never overlaps the
/// values of the next counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
        }
    }

    pub const fn at(self, counter: u64) -> Self {
        Self { counter, ..self }
    }

    /// Generator for the current `(seed, stream_id, counter)` position.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        key[16..24].copy_from_slice(&self.counter.to_le_bytes());
        key[24..32].copy_from_slice(b"rngstrm1");
        ChaCha8Rng::from_seed(key)
    }

    pub fn u64_at(&self, counter: u64) -> u64 {
        self.at(counter).rng().random()
    }

    /// Uniform draw in `[0, 1)` at `counter`.
    pub fn uniform_at(&self, counter: u64) -> f64 {
        self.at(counter).rng().random()
    }

    /// A child seed, e.g. one per replicate, derived from this stream.
    pub fn derive_seed(&self, counter: u64) -> u64 {
        self.u64_at(counter)
    }
}

/// Sample index `j_t ∈ [0, n)` for step `t`, uniform with replacement.
pub fn draw_index(stream: &RngStream, t: u64, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidArgument("draw_index requires n >= 1".into()));
    }
    let mut rng = stream.at(t).rng();
    Ok(uniform_below(&mut rng, n as u64) as usize)
}

/// `b` indices for step `t`, drawn with replacement from one generator.
pub fn draw_indices(stream: &RngStream, t: u64, n: usize, b: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("draw_indices requires n >= 1".into()));
    }
    let mut rng = stream.at(t).rng();
    Ok((0..b)
        .map(|_| uniform_below(&mut rng, n as u64) as usize)
        .collect())
}

// Modulo with rejection of the biased tail.
fn uniform_below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    let threshold = n.wrapping_neg() % n;
    loop {
        let x: u64 = rng.random();
        if x >= threshold {
            return x % n;
        }
    }
}

/// Central-difference gradient `(f(θ + h e_j) − f(θ − h e_j)) / 2h`.
pub fn fd_gradient(f: impl Fn(&Vec64) -> f64, theta: &Vec64, h: f64) -> Result<Vec64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be > 0, got {h}")));
    }
    let mut grad = Vec::with_capacity(theta.dim());
    for j in 0..theta.dim() {
        let plus = f(&theta.with(j, theta[j] + h));
        let minus = f(&theta.with(j, theta[j] - h));
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: "finite-difference evaluation",
                coordinate: Some(j),
            });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Vec64::new(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vec64 {
        Vec64::from_slice(x).unwrap()
    }

    #[test]
    fn elementwise_basics() {
        assert_eq!(v(&[1.0, -2.0, 3.0]).square(), v(&[1.0, 4.0, 9.0]));
        assert_eq!(v(&[0.5, 0.1, 0.3]).min_elem(), 0.1);
        assert_eq!(v(&[3.0, 4.0]).l2_norm(), 5.0);
        assert_eq!(v(&[3.0, -4.0]).linf_norm(), 4.0);
        assert_eq!(v(&[1.0, 2.0]).scale(2.0), v(&[2.0, 4.0]));
        assert_eq!(v(&[1.0, 2.0]).add(&v(&[1.0, 1.0])).unwrap(), v(&[2.0, 3.0]));
        assert_eq!(v(&[1.0, 2.0]).sub(&v(&[1.0, 1.0])).unwrap(), v(&[0.0, 1.0]));
        assert_eq!(v(&[1.0, 2.0]).mul(&v(&[3.0, 4.0])).unwrap(), v(&[3.0, 8.0]));
        assert_eq!(v(&[1.0, 2.0]).div(&v(&[2.0, 4.0])).unwrap(), v(&[0.5, 0.5]));
    }

    #[test]
    fn elementwise_errors() {
        assert!(matches!(
            v(&[1.0]).add(&v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
        assert!(matches!(
            v(&[1.0, 1.0]).div(&v(&[1.0, 0.0])),
            Err(Error::DivisionByZero { index: 1 })
        ));
        assert!(Vec64::new(vec![]).is_err());
    }

    #[test]
    fn draw_index_is_deterministic() {
        let s = RngStream::new(7, 0);
        let k = draw_index(&s, 1, 10).unwrap();
        assert!(k < 10);
        assert_eq!(k, draw_index(&s, 1, 10).unwrap());
        assert_eq!(draw_index(&s, 5, 1).unwrap(), 0);
        assert!(draw_index(&s, 1, 0).is_err());
    }

    #[test]
    fn draw_index_frequencies() {
        let s = RngStream::new(11, 3);
        let mut counts = [0usize; 4];
        let draws = 100_000u64;
        for t in 0..draws {
            counts[draw_index(&s, t, 4).unwrap()] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((0.24..=0.26).contains(&freq), "freq {freq}");
        }
    }

    #[test]
    fn streams_differ_by_id_and_seed() {
        let a = RngStream::new(1, 0).u64_at(0);
        assert_ne!(a, RngStream::new(1, 1).u64_at(0));
        assert_ne!(a, RngStream::new(2, 0).u64_at(0));
        assert_ne!(a, RngStream::new(1, 0).u64_at(1));
        assert_eq!(a, RngStream::new(1, 0).u64_at(0));
    }

    #[test]
    fn fd_gradient_examples() {
        let g = fd_gradient(|x| x.l2_norm().powi(2), &v(&[1.0, 2.0]), 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-7 && (g[1] - 4.0).abs() < 1e-7);

        let g = fd_gradient(|_| 3.5, &v(&[1.0, -2.0, 0.3]), 1e-5).unwrap();
        assert_eq!(g, Vec64::zeros(3));

        let rosen = |x: &Vec64| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = fd_gradient(rosen, &v(&[1.0, 1.0]), 1e-5).unwrap();
        assert!(g.linf_norm() < 1e-6);
    }

    #[test]
    fn fd_gradient_rejects_non_finite() {
        let r = fd_gradient(|x| 1.0 / x[0], &v(&[0.0]), 0.0);
        assert!(r.is_err());
        let r = fd_gradient(|x| if x[0] > 0.0 { f64::NAN } else { 0.0 }, &v(&[0.0]), 1e-3);
        assert!(matches!(r, Err(Error::NonFinite { coordinate: Some(0), .. })));
    }
}
