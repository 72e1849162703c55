//! TOML run configuration.
//!
//! ```toml
//! [fusion]
//! min_detections = 2
//! score_threshold = 0.5
//! iou_threshold = 0.5
//! heatmap_denominator = "total_passes"   # or "cluster_size"
//!
//! [metrics]
//! ace_bins = 10
//! ause_steps = 20
//! alpha = "log_half"                     # or "literal"
//!
//! [simulator]
//! width = 64
//! height = 64
//! objects = 3
//! classes = 3
//! passes = 24
//!
//! [simulator.noise]
//! seed = 7
//! boundary_sigma = 1.0
//! score_concentration = inf
//!
//! [paths]
//! run_dir = "run"
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::metrics::EvalConfig;
use crate::simulator::NoiseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatorConfig {
    pub width: usize,
    pub height: usize,
    pub objects: usize,
    /// Foreground classes.
    pub classes: usize,
    pub passes: usize,
    pub noise: NoiseConfig,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            width: 64,
            height: 64,
            objects: 3,
            classes: 3,
            passes: 24,
            noise: NoiseConfig::default(),
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passes == 0 {
            return Err(Error::Config("M must be ≥ 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("frame width and height must be positive".into()));
        }
        if self.classes == 0 {
            return Err(Error::Config("classes must be at least 1".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Run directory used when a command is given none.
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fusion: FusionConfig,
    pub metrics: EvalConfig,
    pub simulator: SimulatorConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        self.metrics.validate()?;
        self.simulator.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
