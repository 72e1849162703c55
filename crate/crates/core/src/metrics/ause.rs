//! Sparsification curves over the per-pixel Brier score and the area
//! between the uncertainty-ranked curve and the error-ranked oracle.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::Observation;
use crate::model::Scene;
use crate::uncertainty::VarianceMaps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PixelSample {
    pub prob: f64,
    pub target: bool,
    pub uncertainty: f64,
}

impl PixelSample {
    pub fn brier(&self) -> f64 {
        let y = if self.target { 1.0 } else { 0.0 };
        (self.prob - y) * (self.prob - y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsificationCurve {
    /// Removed fractions `0, 1/steps, …, 1 − 1/steps`.
    pub fractions: Vec<f64>,
    /// Brier score of the remaining pixels after removing the most uncertain
    /// ones, relative to the Brier score of all pixels.
    pub brier: Vec<f64>,
    /// Same, removing the pixels with the largest Brier error first.
    pub oracle_brier: Vec<f64>,
    pub ause: f64,
}

/// Indices sorted by `key` descending; ties keep input order.
fn descending(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    idx
}

/// Relative Brier score of what is left after removing each prefix of `order`.
///
/// Removed errors are summed in ascending value order so that equal removed
/// multisets give bit-identical results whatever order ties were ranked in.
fn curve(errors: &[f64], order: &[usize], steps: usize, total: f64) -> Vec<f64> {
    let n = errors.len();
    (0..steps)
        .map(|k| {
            let removed = k * n / steps;
            if removed == n {
                return 0.0;
            }
            let mut taken: Vec<f64> = order[..removed].iter().map(|&i| errors[i]).collect();
            taken.sort_by(f64::total_cmp);
            let removed_sum: f64 = taken.iter().sum();
            let remaining = ((total - removed_sum) / (n - removed) as f64).max(0.0);
            remaining / (total / n as f64)
        })
        .collect()
}

pub fn sparsification(pixels: &[PixelSample], steps: usize) -> Result<SparsificationCurve> {
    if pixels.is_empty() {
        return Err(Error::Empty("sparsification needs at least one pixel"));
    }
    if steps == 0 {
        return Err(Error::Config("sparsification needs at least one step".into()));
    }
    let fractions: Vec<f64> = (0..steps).map(|k| k as f64 / steps as f64).collect();
    let errors: Vec<f64> = pixels.iter().map(PixelSample::brier).collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return Ok(SparsificationCurve {
            brier: vec![0.0; steps],
            oracle_brier: vec![0.0; steps],
            fractions,
            ause: 0.0,
        });
    }
    let uncertainty: Vec<f64> = pixels.iter().map(|p| p.uncertainty).collect();
    let brier = curve(&errors, &descending(&uncertainty), steps, total);
    let oracle_brier = curve(&errors, &descending(&errors), steps, total);
    let gap: Vec<f64> = brier.iter().zip(&oracle_brier).map(|(s, o)| s - o).collect();
    let dx = 1.0 / steps as f64;
    let ause = gap.windows(2).map(|g| 0.5 * (g[0] + g[1]) * dx).sum();
    Ok(SparsificationCurve {
        fractions,
        brier,
        oracle_brier,
        ause,
    })
}

pub fn ause_brier(pixels: &[PixelSample], steps: usize) -> Result<f64> {
    Ok(sparsification(pixels, steps)?.ause)
}

/// Pixel population of one image: the union of observation supports and
/// ground-truth masks. Each pixel takes the largest mean probability over
/// observations together with that observation's total variance (lowest
/// index on ties); pixels no observation covers get probability and
/// uncertainty 0.
pub fn scene_pixels(observations: &[Observation], maps: &[VarianceMaps], scene: &Scene) -> Result<Vec<PixelSample>> {
    if observations.len() != maps.len() {
        return Err(Error::validation("sparsification", "one variance map per observation required"));
    }
    let (w, h) = (scene.width, scene.height);
    for m in maps {
        if m.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                found: m.dims(),
            });
        }
    }
    let mut out = Vec::new();
    for i in 0..w * h {
        let target = scene.instances.iter().any(|g| g.mask.bits()[i]);
        let covered = observations.iter().any(|o| o.support.bits()[i]);
        if !target && !covered {
            continue;
        }
        let mut sample = PixelSample {
            prob: 0.0,
            target,
            uncertainty: 0.0,
        };
        let mut best: Option<f64> = None;
        for m in maps {
            if best.is_none_or(|b| m.mean[i] > b) {
                best = Some(m.mean[i]);
                sample.prob = m.mean[i];
                sample.uncertainty = m.total[i];
            }
        }
        out.push(sample);
    }
    Ok(out)
}
