//! Probability-based Mask Quality.
//!
//! Each observation/ground-truth pair gets a spatial quality from the
//! observation's heatmap and a label quality from its fused class
//! distribution; their geometric mean is the pairwise quality. Pairs are
//! matched per scene by an optimal assignment, and PMQ divides the summed
//! pairwise quality by the number of true positives, false positives and
//! false negatives pooled over the dataset.

use serde::Serialize;

use super::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::fusion::Observation;
use crate::model::{BinaryMask, GroundTruthInstance, ProbMask, Scene};

/// Floor on log arguments; caps the penalty of a single pixel at ~32.2 nats.
pub const LOG_FLOOR: f64 = 1e-14;

fn check_dims(gt: &BinaryMask, other: (usize, usize)) -> Result<()> {
    if gt.dims() != other {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: other,
        });
    }
    Ok(())
}

/// Mean negative log heatmap probability over the ground-truth pixels.
pub fn foreground_loss(gt: &BinaryMask, heatmap: &ProbMask) -> Result<f64> {
    check_dims(gt, heatmap.dims())?;
    let count = gt.count();
    if count == 0 {
        return Err(Error::Empty("ground-truth mask"));
    }
    let sum: f64 = gt
        .bits()
        .iter()
        .zip(heatmap.values())
        .filter(|(&g, _)| g)
        .map(|(_, &h)| -f64::from(h).max(LOG_FLOOR).ln())
        .sum();
    Ok(sum / count as f64)
}

/// Negative log background probability summed over the detected pixels
/// outside the ground truth, normalized by the ground-truth area.
pub fn background_loss(gt: &BinaryMask, obs_mask: &BinaryMask, heatmap: &ProbMask) -> Result<f64> {
    check_dims(gt, heatmap.dims())?;
    check_dims(gt, obs_mask.dims())?;
    let count = gt.count();
    if count == 0 {
        return Err(Error::Empty("ground-truth mask"));
    }
    let sum: f64 = gt
        .bits()
        .iter()
        .zip(obs_mask.bits())
        .zip(heatmap.values())
        .filter(|((&g, &o), _)| o && !g)
        .map(|(_, &h)| -(1.0 - f64::from(h)).max(LOG_FLOOR).ln())
        .sum();
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpatialQuality {
    pub q_s: f64,
    pub fg_loss: f64,
    pub bg_loss: f64,
}

/// `exp(−(L_FG + L_BG))`, or 0 when the heatmap does not touch the ground truth.
pub fn spatial_quality(gt: &BinaryMask, obs: &Observation) -> Result<SpatialQuality> {
    let fg_loss = foreground_loss(gt, &obs.heatmap)?;
    let bg_loss = background_loss(gt, &obs.support, &obs.heatmap)?;
    let overlaps = gt.bits().iter().zip(obs.heatmap.values()).any(|(&g, &h)| g && h > 0.0);
    let q_s = if overlaps { (-(fg_loss + bg_loss)).exp() } else { 0.0 };
    Ok(SpatialQuality { q_s, fg_loss, bg_loss })
}

/// Fused probability of the ground-truth class.
pub fn label_quality(gt_label: usize, obs: &Observation) -> Result<f64> {
    let probs = obs.mean_classes.probs();
    if gt_label == 0 || gt_label >= probs.len() {
        return Err(Error::validation("label quality", format!("label {gt_label} out of range")));
    }
    Ok(probs[gt_label])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairQuality {
    pub q_s: f64,
    pub q_l: f64,
    /// `exp(−L_FG)`
    pub fg: f64,
    /// `exp(−L_BG)`
    pub bg: f64,
    pub ppmq: f64,
}

pub fn pair_quality(gt: &GroundTruthInstance, obs: &Observation) -> Result<PairQuality> {
    let s = spatial_quality(&gt.mask, obs)?;
    let q_l = label_quality(gt.label, obs)?;
    Ok(PairQuality {
        q_s: s.q_s,
        q_l,
        fg: (-s.fg_loss).exp(),
        bg: (-s.bg_loss).exp(),
        ppmq: (s.q_s * q_l).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub observation: usize,
    pub ground_truth: usize,
    pub quality: PairQuality,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MatchResult {
    pub assignments: Vec<Assignment>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl MatchResult {
    pub fn total_ppmq(&self) -> f64 {
        self.assignments.iter().map(|a| a.quality.ppmq).sum()
    }

    /// `observation → ground truth` lookup.
    pub fn matched_gt(&self, observation: usize) -> Option<usize> {
        self.assignments
            .iter()
            .find(|a| a.observation == observation)
            .map(|a| a.ground_truth)
    }
}

/// Pairwise quality for every observation (rows) against every instance (columns).
pub fn quality_matrix(observations: &[Observation], scene: &Scene) -> Result<Vec<Vec<PairQuality>>> {
    observations
        .iter()
        .map(|obs| scene.instances.iter().map(|gt| pair_quality(gt, obs)).collect())
        .collect()
}

/// Optimal matching of one scene's observations to its ground truth.
pub fn match_scene(observations: &[Observation], scene: &Scene) -> Result<MatchResult> {
    let quality = quality_matrix(observations, scene)?;
    let weights: Vec<Vec<f64>> = quality.iter().map(|r| r.iter().map(|q| q.ppmq).collect()).collect();
    let assigned = max_weight_assignment(&weights);

    let mut result = MatchResult::default();
    let mut gt_used = vec![false; scene.instances.len()];
    for (i, slot) in assigned.iter().enumerate() {
        match *slot {
            Some(j) if weights[i][j] > 0.0 => {
                gt_used[j] = true;
                result.assignments.push(Assignment {
                    observation: i,
                    ground_truth: j,
                    quality: quality[i][j],
                });
            }
            _ => result.false_positives.push(i),
        }
    }
    result.false_negatives = gt_used
        .iter()
        .enumerate()
        .filter(|(_, &u)| !u)
        .map(|(j, _)| j)
        .collect();
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PmqSummary {
    pub pmq: f64,
    pub ppmq: f64,
    pub q_s: f64,
    pub q_l: f64,
    pub fg: f64,
    pub bg: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Pools matches over scenes into the dataset-level summary.
pub fn summarize(matches: &[MatchResult]) -> PmqSummary {
    let mut s = PmqSummary::default();
    let mut total = 0.0;
    for m in matches {
        s.tp += m.assignments.len();
        s.fp += m.false_positives.len();
        s.fn_ += m.false_negatives.len();
        for a in &m.assignments {
            total += a.quality.ppmq;
            s.q_s += a.quality.q_s;
            s.q_l += a.quality.q_l;
            s.fg += a.quality.fg;
            s.bg += a.quality.bg;
        }
    }
    let all = s.tp + s.fp + s.fn_;
    if all > 0 {
        s.pmq = total / all as f64;
    }
    if s.tp > 0 {
        let tp = s.tp as f64;
        s.ppmq = total / tp;
        s.q_s /= tp;
        s.q_l /= tp;
        s.fg /= tp;
        s.bg /= tp;
    }
    s
}

/// Matches every scene and pools the result.
pub fn pmq_evaluate(scenes: &[(&[Observation], &Scene)]) -> Result<(PmqSummary, Vec<MatchResult>)> {
    let matches = scenes
        .iter()
        .map(|(obs, scene)| match_scene(obs, scene))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize(&matches), matches))
}
