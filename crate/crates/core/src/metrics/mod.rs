//! Evaluation suite: PMQ family, weighted F-measure, ACE and AUSE.

pub mod ace;
pub mod assignment;
pub mod ause;
pub mod fbw;
pub mod pmq;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Observation;
use crate::model::Scene;
use crate::uncertainty::variance_maps;

pub use ace::{ace, AceBin, AceReport, CalibrationSample};
pub use assignment::max_weight_assignment;
pub use ause::{ause_brier, sparsification, PixelSample, SparsificationCurve};
pub use fbw::{weighted_fbw, weighted_fbw_with, AlphaVariant, FbwParams, FbwSummary};
pub use pmq::{
    background_loss, foreground_loss, label_quality, match_scene, pmq_evaluate, spatial_quality, MatchResult,
    PairQuality, PmqSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ace_bins: usize,
    pub ause_steps: usize,
    pub alpha: AlphaVariant,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ace_bins: 10,
            ause_steps: 20,
            alpha: AlphaVariant::LogHalf,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ace_bins == 0 {
            return Err(Error::Config("ace_bins must be at least 1".into()));
        }
        if self.ause_steps == 0 {
            return Err(Error::Config("ause_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn fbw_params(&self) -> FbwParams {
        FbwParams {
            alpha: self.alpha,
            ..FbwParams::default()
        }
    }
}

/// One image to evaluate: its ground truth and fused observations.
#[derive(Debug, Clone, Copy)]
pub struct ImageInput<'a> {
    pub scene: &'a Scene,
    pub observations: &'a [Observation],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub image_id: String,
    pub pmq: f64,
    pub ppmq: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: MatchResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub pmq: PmqSummary,
    pub fbw: FbwSummary,
    /// `None` when there were no observations to calibrate.
    pub ace: Option<f64>,
    pub ace_bins: Vec<AceBin>,
    /// `None` when no pixel was covered by an observation or ground truth.
    pub ause: Option<f64>,
    pub per_image: Vec<ImageReport>,
    #[serde(skip)]
    pub sparsification: Option<SparsificationCurve>,
}

pub fn evaluate(images: &[ImageInput<'_>], class_names: &[String], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let per_image: Vec<_> = images
        .par_iter()
        .map(|img| -> Result<_> {
            let matches = match_scene(img.observations, img.scene)?;
            let calib = ace::calibration_samples(img.observations, img.scene, &matches);
            let maps = img
                .observations
                .iter()
                .map(variance_maps)
                .collect::<Result<Vec<_>>>()?;
            let pixels = ause::scene_pixels(img.observations, &maps, img.scene)?;
            Ok((matches, calib, pixels))
        })
        .collect::<Result<Vec<_>>>()?;

    let matches: Vec<MatchResult> = per_image.iter().map(|(m, _, _)| m.clone()).collect();
    let summary = pmq::summarize(&matches);
    let calib: Vec<CalibrationSample> = per_image.iter().flat_map(|(_, c, _)| c.iter().copied()).collect();
    let ace_report = ace(&calib, cfg.ace_bins)?;
    let pixels: Vec<PixelSample> = per_image.iter().flat_map(|(_, _, p)| p.iter().copied()).collect();
    let curve = if pixels.is_empty() {
        None
    } else {
        Some(sparsification(&pixels, cfg.ause_steps)?)
    };

    let pairs: Vec<(&[Observation], &Scene)> = images.iter().map(|i| (i.observations, i.scene)).collect();
    let fbw = fbw::fbw_per_class(&pairs, class_names, &cfg.fbw_params())?;

    let per_image = images
        .iter()
        .zip(matches)
        .map(|(img, m)| {
            let s = pmq::summarize(std::slice::from_ref(&m));
            ImageReport {
                image_id: img.scene.image_id.clone(),
                pmq: s.pmq,
                ppmq: s.ppmq,
                tp: s.tp,
                fp: s.fp,
                fn_: s.fn_,
                matches: m,
            }
        })
        .collect();

    Ok(EvalReport {
        pmq: summary,
        fbw,
        ace: ace_report.as_ref().map(|r| r.ace),
        ace_bins: ace_report.map(|r| r.bins).unwrap_or_default(),
        ause: curve.as_ref().map(|c| c.ause),
        per_image,
        sparsification: curve,
    })
}

/// `fraction,brier,oracle_brier` with both curves relative to the full-set Brier score.
pub fn sparsification_csv(curve: &SparsificationCurve) -> String {
    let mut out = String::from("fraction,brier,oracle_brier\n");
    for ((f, b), o) in curve.fractions.iter().zip(&curve.brier).zip(&curve.oracle_brier) {
        writeln!(out, "{f},{b},{o}").expect("write to string");
    }
    out
}

pub fn write_sparsification_csv(path: &Path, curve: Option<&SparsificationCurve>) -> Result<()> {
    let text = match curve {
        Some(c) => sparsification_csv(c),
        None => String::from("fraction,brier,oracle_brier\n"),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
