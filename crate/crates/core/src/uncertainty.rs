//! Decomposition of predictive variance into aleatoric and epistemic parts.
//!
//! For `N` sampled probability vectors `p_n` with mean `p̄`:
//!
//! ```text
//! aleatoric = 1/N Σ (diag(p_n) − p_n p_nᵀ)
//! epistemic = 1/N Σ (p_n − p̄)(p_n − p̄)ᵀ
//! ```
//!
//! Applied per pixel to mask probabilities (the scalar case, pixels treated
//! independently) and to whole class distributions (the matrix case). The
//! two parts always sum to the Bernoulli/categorical variance of `p̄`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fusion::Observation;

/// Largest variance a Bernoulli pixel can have.
pub const MAX_BERNOULLI_VARIANCE: f64 = 0.25;

/// Returns `(aleatoric, epistemic)` for one pixel.
pub fn pixel_variance(probs: &[f64]) -> Result<(f64, f64)> {
    if probs.is_empty() {
        return Err(Error::Empty("pixel variance needs at least one sample"));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::validation("pixel variance", format!("probability {p} outside [0, 1]")));
    }
    let n = probs.len() as f64;
    let mean = probs.iter().sum::<f64>() / n;
    let aleatoric = probs.iter().map(|p| p * (1.0 - p)).sum::<f64>() / n;
    let epistemic = probs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    Ok((aleatoric, epistemic))
}

/// Dense per-pixel grids (row-major) for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceMaps {
    pub width: usize,
    pub height: usize,
    /// Mean member probability `p̄(x)`, kept in `f64`.
    pub mean: Vec<f64>,
    pub aleatoric: Vec<f64>,
    pub epistemic: Vec<f64>,
    pub total: Vec<f64>,
}

impl VarianceMaps {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

pub fn variance_maps(obs: &Observation) -> Result<VarianceMaps> {
    let first = obs.members.first().ok_or(Error::Empty("observation has no members"))?;
    let (w, h) = first.detection.prob_mask.dims();
    for m in &obs.members {
        if m.detection.prob_mask.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                found: m.detection.prob_mask.dims(),
            });
        }
    }
    let n = obs.members.len() as f64;
    let px = w * h;
    let mut mean = vec![0.0; px];
    let mut aleatoric = vec![0.0; px];
    for m in &obs.members {
        for (i, &p) in m.detection.prob_mask.values().iter().enumerate() {
            let p = f64::from(p);
            mean[i] += p;
            aleatoric[i] += p * (1.0 - p);
        }
    }
    mean.iter_mut().for_each(|s| *s /= n);
    aleatoric.iter_mut().for_each(|s| *s /= n);
    let mut epistemic = vec![0.0; px];
    for m in &obs.members {
        for (i, &p) in m.detection.prob_mask.values().iter().enumerate() {
            let d = f64::from(p) - mean[i];
            epistemic[i] += d * d;
        }
    }
    epistemic.iter_mut().for_each(|s| *s /= n);
    let total = aleatoric.iter().zip(&epistemic).map(|(a, e)| a + e).collect();
    Ok(VarianceMaps {
        width: w,
        height: h,
        mean,
        aleatoric,
        epistemic,
        total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceDecomposition {
    pub aleatoric: DMatrix<f64>,
    pub epistemic: DMatrix<f64>,
}

impl CovarianceDecomposition {
    pub fn total(&self) -> DMatrix<f64> {
        &self.aleatoric + &self.epistemic
    }
}

/// Matrix form over the members' class distributions.
pub fn class_covariance(obs: &Observation) -> Result<CovarianceDecomposition> {
    let vectors: Vec<&[f64]> = obs.members.iter().map(|m| m.detection.classes.probs()).collect();
    class_covariance_of(&vectors)
}

/// Matrix form over arbitrary probability vectors of equal length.
pub fn class_covariance_of(vectors: &[&[f64]]) -> Result<CovarianceDecomposition> {
    let k = vectors.first().ok_or(Error::Empty("class covariance needs at least one member"))?.len();
    if vectors.iter().any(|v| v.len() != k) {
        return Err(Error::validation("class covariance", "class vectors differ in length"));
    }
    let n = vectors.len() as f64;
    let ps: Vec<DVector<f64>> = vectors.iter().map(|v| DVector::from_column_slice(v)).collect();
    let mean = ps.iter().fold(DVector::zeros(k), |acc, p| acc + p) / n;
    let mut aleatoric = DMatrix::zeros(k, k);
    let mut epistemic = DMatrix::zeros(k, k);
    for p in &ps {
        aleatoric += DMatrix::from_diagonal(p) - p * p.transpose();
        let d = p - &mean;
        epistemic += &d * d.transpose();
    }
    Ok(CovarianceDecomposition {
        aleatoric: aleatoric / n,
        epistemic: epistemic / n,
    })
}

/// Grayscale level for a variance value: `round(255 · v / 0.25)`, clamped.
pub fn variance_gray(v: f64) -> u8 {
    (255.0 * v / MAX_BERNOULLI_VARIANCE).round().clamp(0.0, 255.0) as u8
}

/// Grayscale level for a probability value: `round(255 · p)`, clamped.
pub fn probability_gray(p: f64) -> u8 {
    (255.0 * p).round().clamp(0.0, 255.0) as u8
}

/// Writes a binary (P5) PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    assert_eq!(gray.len(), width * height);
    let mut out = Vec::with_capacity(gray.len() + 20);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to vec");
    out.extend_from_slice(gray);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
