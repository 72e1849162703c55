//! Monte-Carlo sample fusion for instance segmentation.
//!
//! A network run `M` times with dropout active produces one [`SampleSet`]
//! of detections per forward pass. [`fusion::bsas_cluster`] groups detections
//! that describe the same object into [`Observation`]s with fused boxes,
//! class distributions, mean masks and heatmaps; [`uncertainty`] splits the
//! per-pixel predictive variance into aleatoric and epistemic parts; and
//! [`metrics`] scores observations against ground truth with the
//! probability-based mask quality (PMQ), the weighted F-measure, the average
//! calibration error and the area under the sparsification error curve.
//!
//! [`simulator`] generates synthetic scenes and passes with controllable
//! noise, and [`format`] reads and writes the run directories that external
//! exporters produce.
//!
//! ```
//! use probseg::fusion::{bsas_cluster, FusionConfig};
//! use probseg::metrics::{evaluate, EvalConfig, ImageInput};
//! use probseg::simulator::{default_class_names, generate_scene, simulate_samples, NoiseConfig};
//!
//! let scene = generate_scene(48, 48, 2, 3, 1).unwrap();
//! let sim = simulate_samples(&scene, 8, 3, &NoiseConfig::zero(1)).unwrap();
//! let observations = bsas_cluster(&sim.samples, &FusionConfig::default()).unwrap();
//! let report = evaluate(
//!     &[ImageInput { scene: &scene, observations: &observations }],
//!     &default_class_names(3),
//!     &EvalConfig::default(),
//! )
//! .unwrap();
//! assert!((report.pmq.pmq - 1.0).abs() < 1e-9);
//! ```

pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod format;
pub mod fusion;
pub mod metrics;
pub mod model;
pub mod rle;
pub mod simulator;
pub mod uncertainty;

pub use error::{Error, Result};
pub use fusion::{FusionConfig, Observation};
pub use model::{BBox, BinaryMask, ClassDist, Detection, GroundTruthInstance, ProbMask, SampleSet, Scene};
