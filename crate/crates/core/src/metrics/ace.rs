//! Average Calibration Error: equal-width confidence bins, every non-empty
//! bin weighted equally.

use serde::Serialize;

use super::pmq::MatchResult;
use crate::error::{Error, Result};
use crate::fusion::Observation;
use crate::model::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationSample {
    pub confidence: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AceBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean member confidence; `None` for an empty bin.
    pub confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AceReport {
    pub ace: f64,
    pub bins: Vec<AceBin>,
}

/// `None` when there are no samples.
pub fn ace(samples: &[CalibrationSample], bins: usize) -> Result<Option<AceReport>> {
    if bins == 0 {
        return Err(Error::Config("ACE needs at least one bin".into()));
    }
    if samples.is_empty() {
        return Ok(None);
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0f64; bins];
    let mut hits = vec![0usize; bins];
    for s in samples {
        if !(0.0..=1.0).contains(&s.confidence) {
            return Err(Error::validation("ace", format!("confidence {} outside [0, 1]", s.confidence)));
        }
        let b = ((s.confidence * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf[b] += s.confidence;
        hits[b] += usize::from(s.correct);
    }
    let mut table = Vec::with_capacity(bins);
    let (mut gap, mut nonempty) = (0.0, 0usize);
    for b in 0..bins {
        let (c, a) = if count[b] > 0 {
            let n = count[b] as f64;
            let (c, a) = (conf[b] / n, hits[b] as f64 / n);
            gap += (a - c).abs();
            nonempty += 1;
            (Some(c), Some(a))
        } else {
            (None, None)
        };
        table.push(AceBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: count[b],
            confidence: c,
            accuracy: a,
        });
    }
    Ok(Some(AceReport {
        ace: gap / nonempty as f64,
        bins: table,
    }))
}

/// An observation counts as correct when it is matched and its label equals
/// the matched instance's label.
pub fn calibration_samples(observations: &[Observation], scene: &Scene, matches: &MatchResult) -> Vec<CalibrationSample> {
    observations
        .iter()
        .enumerate()
        .map(|(i, obs)| CalibrationSample {
            confidence: obs.confidence(),
            correct: matches
                .matched_gt(i)
                .is_some_and(|j| scene.instances[j].label == obs.label),
        })
        .collect()
}
