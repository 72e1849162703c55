//! Synthetic scenes and simulated stochastic forward passes.
//!
//! Every ground-truth mask is turned into a signed distance field (negative
//! inside, boundary halfway between pixel centers). Each simulated pass
//! perturbs that field and renders a probability mask from it:
//!
//! * `boundary_sigma` adds a low-frequency sinusoidal radial displacement
//!   with a fresh random phase per pass, so contours disagree across passes
//!   (epistemic spread);
//! * `soft_edge_width` renders a linear probability ramp of that width across
//!   the contour, identical in every pass (aleatoric spread);
//! * `band_presence` keeps each pixel of the inner boundary band with that
//!   probability, independently per pass (pure epistemic spread);
//! * `existence_prob`, `label_flip_prob`, `score_concentration` and
//!   `clutter_rate` control missed objects, class confusion, class-score
//!   sharpness and spurious detections.
//!
//! Randomness comes from ChaCha20 with one stream per pass (stream 0 is
//! reserved for scene layout), so output is identical however passes are
//! scheduled.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::Run;
use crate::metrics::fbw::distance_transform;
use crate::metrics::CalibrationSample;
use crate::model::{BBox, BinaryMask, ClassDist, Detection, GroundTruthInstance, ProbMask, SampleSet, Scene};

/// Angular frequency of the contour perturbation.
const JITTER_LOBES: f64 = 3.0;
const MAX_PLACEMENT_RETRIES: usize = 100;
/// Placements overlapping an earlier instance at or above this IoU are retried.
const MAX_INSTANCE_IOU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub seed: u64,
    pub existence_prob: f64,
    /// Standard deviation (pixels) of the per-pass contour displacement.
    pub boundary_sigma: f64,
    /// Width (pixels) of the probability ramp across the contour.
    pub soft_edge_width: f64,
    /// Probability that an inner-band pixel is present in a pass.
    pub band_presence: f64,
    /// Depth (pixels) of the inner band subject to `band_presence`.
    pub band_width: f64,
    pub label_flip_prob: f64,
    /// Dirichlet concentration on the true class; `inf` gives one-hot distributions.
    pub score_concentration: f64,
    /// Expected spurious detections per pass.
    pub clutter_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::zero(0)
    }
}

impl NoiseConfig {
    /// Every noise source off: each pass reproduces the ground truth exactly.
    pub fn zero(seed: u64) -> Self {
        NoiseConfig {
            seed,
            existence_prob: 1.0,
            boundary_sigma: 0.0,
            soft_edge_width: 0.0,
            band_presence: 1.0,
            band_width: 2.0,
            label_flip_prob: 0.0,
            score_concentration: f64::INFINITY,
            clutter_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("existence_prob", self.existence_prob),
            ("band_presence", self.band_presence),
            ("label_flip_prob", self.label_flip_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("boundary_sigma", self.boundary_sigma),
            ("soft_edge_width", self.soft_edge_width),
            ("band_width", self.band_width),
            ("clutter_rate", self.clutter_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.score_concentration.is_nan() || self.score_concentration <= 0.0 {
            return Err(Error::Config(format!(
                "score_concentration must be positive, got {}",
                self.score_concentration
            )));
        }
        Ok(())
    }
}

/// Where a simulated detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Instance(usize),
    Clutter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub scene: Scene,
    pub samples: Vec<SampleSet>,
    /// `provenance[k][i]` describes detection `i` of pass `k`.
    pub provenance: Vec<Vec<Provenance>>,
}

impl SimScene {
    pub fn into_run(self, class_names: Vec<String>) -> Run {
        Run::new(
            self.scene.image_id.clone(),
            self.scene.width,
            self.scene.height,
            class_names,
            self.samples,
            Some(self.scene),
        )
    }
}

/// Background followed by the affordance names used in robotic manipulation
/// benchmarks, falling back to `class_<k>`.
pub fn default_class_names(class_count: usize) -> Vec<String> {
    const NAMES: [&str; 9] = [
        "contain", "cut", "display", "engine", "grasp", "hit", "pound", "support", "w-grasp",
    ];
    std::iter::once("background".to_string())
        .chain((1..=class_count).map(|k| NAMES.get(k - 1).map_or_else(|| format!("class_{k}"), |s| s.to_string())))
        .collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Analytic shapes used for scene layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Rect { cx: f64, cy: f64, half_w: f64, half_h: f64 },
    Disk { cx: f64, cy: f64, radius: f64 },
    Ring { cx: f64, cy: f64, inner: f64, outer: f64 },
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { cx, cy, half_w, half_h } => (x - cx).abs() <= half_w && (y - cy).abs() <= half_h,
            Shape::Disk { cx, cy, radius } => (x - cx).hypot(y - cy) <= radius,
            Shape::Ring { cx, cy, inner, outer } => {
                let r = (x - cx).hypot(y - cy);
                r >= inner && r <= outer
            }
        }
    }

    pub fn extent(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Rect { cx, cy, half_w, half_h } => (cx - half_w, cy - half_h, cx + half_w, cy + half_h),
            Shape::Disk { cx, cy, radius: r } | Shape::Ring { cx, cy, outer: r, .. } => (cx - r, cy - r, cx + r, cy + r),
        }
    }

    /// Rasterizes at pixel centers.
    pub fn rasterize(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| self.contains(x as f64 + 0.5, y as f64 + 0.5))
    }
}

fn random_shape(rng: &mut ChaCha20Rng, width: usize, height: usize) -> Shape {
    let s = width.min(height) as f64;
    let cx = rng.random_range(0.0..width as f64);
    let cy = rng.random_range(0.0..height as f64);
    match rng.random_range(0..3) {
        0 => Shape::Rect {
            cx,
            cy,
            half_w: rng.random_range(s / 16.0..s / 5.0),
            half_h: rng.random_range(s / 16.0..s / 5.0),
        },
        1 => Shape::Disk {
            cx,
            cy,
            radius: rng.random_range(s / 12.0..s / 5.0),
        },
        _ => {
            let outer = rng.random_range(s / 8.0..s / 4.5);
            Shape::Ring {
                cx,
                cy,
                inner: outer * rng.random_range(0.4..0.6),
                outer,
            }
        }
    }
}

/// Random rectangles, disks and rings with random labels in `1..=class_count`.
pub fn generate_scene(width: usize, height: usize, n_objects: usize, class_count: usize, seed: u64) -> Result<Scene> {
    if class_count == 0 {
        return Err(Error::Config("class_count must be at least 1".into()));
    }
    if n_objects > 0 && (width == 0 || height == 0) {
        return Err(Error::Generation("frame has zero area".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut instances: Vec<GroundTruthInstance> = Vec::with_capacity(n_objects);
    for index in 0..n_objects {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_RETRIES {
            let shape = random_shape(&mut rng, width, height);
            let (x1, y1, x2, y2) = shape.extent();
            if x1 < 0.0 || y1 < 0.0 || x2 > width as f64 || y2 > height as f64 {
                continue;
            }
            let mask = shape.rasterize(width, height);
            if mask.is_empty() {
                continue;
            }
            let overlapping = instances
                .iter()
                .any(|g| crate::model::mask_iou(&g.mask, &mask).unwrap_or(1.0) >= MAX_INSTANCE_IOU);
            if overlapping {
                continue;
            }
            placed = Some(mask);
            break;
        }
        let mask = placed.ok_or_else(|| {
            Error::Generation(format!(
                "object {index} did not fit a {width}x{height} frame after {MAX_PLACEMENT_RETRIES} attempts"
            ))
        })?;
        let label = rng.random_range(1..=class_count);
        instances.push(GroundTruthInstance::new(label, mask)?);
    }
    Scene::new(format!("sim-{seed}"), width, height, instances)
}

/// Per-instance geometry the simulator renders from.
#[derive(Debug, Clone)]
struct InstanceField {
    /// Signed distance (pixels), negative inside.
    sdf: Vec<f64>,
    /// Distance from inside pixels to the nearest outside pixel center.
    depth: Vec<f64>,
    /// Angle of each pixel around the mask centroid.
    angle: Vec<f64>,
}

fn instance_field(mask: &BinaryMask) -> InstanceField {
    let (w, h) = mask.dims();
    let outside = BinaryMask::new(w, h, mask.bits().iter().map(|b| !b).collect()).expect("same dims");
    let to_inside = distance_transform(mask);
    let to_outside = distance_transform(&outside);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                n += 1.0;
            }
        }
    }
    let (cx, cy) = if n > 0.0 { (sx / n, sy / n) } else { (0.0, 0.0) };
    let mut sdf = vec![0.0; w * h];
    let mut depth = vec![0.0; w * h];
    let mut angle = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            angle[i] = (y as f64 + 0.5 - cy).atan2(x as f64 + 0.5 - cx);
            if mask.bits()[i] {
                // pixels beyond the frame edge count as outside
                let frame = [x + 1, y + 1, w - x, h - y].into_iter().min().unwrap() as f64;
                let d = to_outside.distance[i].min(frame);
                depth[i] = d;
                sdf[i] = -(d - 0.5);
            } else {
                sdf[i] = to_inside.distance[i] - 0.5;
            }
        }
    }
    InstanceField { sdf, depth, angle }
}

fn ramp(sd: f64, width: f64) -> f64 {
    if width > 0.0 {
        (0.5 - sd / width).clamp(0.0, 1.0)
    } else if sd < 0.0 {
        1.0
    } else {
        0.0
    }
}

fn sample_classes(rng: &mut ChaCha20Rng, len: usize, label: usize, noise: &NoiseConfig) -> ClassDist {
    let mut label = label;
    if noise.label_flip_prob > 0.0 && len > 2 && rng.random_bool(noise.label_flip_prob) {
        let other = rng.random_range(1..len - 1);
        label = if other >= label { other + 1 } else { other };
    }
    if noise.score_concentration.is_infinite() {
        return ClassDist::one_hot(len, label);
    }
    let peak = Gamma::new(noise.score_concentration, 1.0).expect("positive shape");
    let flat = Gamma::new(1.0, 1.0).expect("positive shape");
    let mut draws: Vec<f64> = (0..len)
        .map(|k| if k == label { peak.sample(rng) } else { flat.sample(rng) })
        .collect();
    let sum: f64 = draws.iter().sum();
    draws.iter_mut().for_each(|d| *d = f64::from((*d / sum) as f32));
    ClassDist::new(draws).expect("normalized draws")
}

fn support_box(values: &[f32], width: usize) -> Option<BBox> {
    let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
    let mut any = false;
    for (i, &v) in values.iter().enumerate() {
        if v > 0.0 {
            let (x, y) = (i % width, i / width);
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x + 1);
            y2 = y2.max(y + 1);
            any = true;
        }
    }
    any.then(|| BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64).expect("ordered corners"))
}

fn render_instance(field: &InstanceField, rng: &mut ChaCha20Rng, noise: &NoiseConfig) -> Vec<f32> {
    let amplitude = std::f64::consts::SQRT_2 * noise.boundary_sigma;
    let phase = if amplitude > 0.0 { rng.random_range(0.0..TAU) } else { 0.0 };
    let banded = noise.band_presence < 1.0;
    field
        .sdf
        .iter()
        .zip(&field.angle)
        .zip(&field.depth)
        .map(|((&sd, &theta), &depth)| {
            let shifted = sd - amplitude * (JITTER_LOBES * theta + phase).sin();
            let mut p = ramp(shifted, noise.soft_edge_width);
            if banded && sd < 0.0 && depth <= noise.band_width && !rng.random_bool(noise.band_presence) {
                p = 0.0;
            }
            p as f32
        })
        .collect()
}

fn render_clutter(rng: &mut ChaCha20Rng, width: usize, height: usize) -> Vec<f32> {
    let shape = Shape::Disk {
        cx: rng.random_range(0.0..width as f64),
        cy: rng.random_range(0.0..height as f64),
        radius: rng.random_range(1.5..3.5),
    };
    shape
        .rasterize(width, height)
        .bits()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect()
}

/// Simulates `passes` forward passes over `scene` with `class_count`
/// foreground classes.
pub fn simulate_samples(scene: &Scene, passes: usize, class_count: usize, noise: &NoiseConfig) -> Result<SimScene> {
    if passes == 0 {
        return Err(Error::Config("M must be ≥ 1".into()));
    }
    if class_count == 0 {
        return Err(Error::Config("class_count must be at least 1".into()));
    }
    noise.validate()?;
    if let Some(bad) = scene.instances.iter().find(|g| g.label > class_count) {
        return Err(Error::Config(format!("instance label {} exceeds class count {class_count}", bad.label)));
    }
    let (w, h) = (scene.width, scene.height);
    let fields: Vec<InstanceField> = scene.instances.iter().map(|g| instance_field(&g.mask)).collect();
    let len = class_count + 1;

    let per_pass: Vec<(SampleSet, Vec<Provenance>)> = (0..passes)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(noise.seed, k as u64 + 1);
            let mut detections = Vec::new();
            let mut provenance = Vec::new();
            for (j, (gt, field)) in scene.instances.iter().zip(&fields).enumerate() {
                if !rng.random_bool(noise.existence_prob) {
                    continue;
                }
                let values = render_instance(field, &mut rng, noise);
                let classes = sample_classes(&mut rng, len, gt.label, noise);
                if let Some(bbox) = support_box(&values, w) {
                    let mask = ProbMask::new(w, h, values).expect("values in [0, 1]");
                    detections.push(Detection::new(bbox, classes, mask));
                    provenance.push(Provenance::Instance(j));
                }
            }
            if noise.clutter_rate > 0.0 {
                let count = Poisson::new(noise.clutter_rate).expect("positive rate").sample(&mut rng) as usize;
                for _ in 0..count {
                    let values = render_clutter(&mut rng, w, h);
                    let label = rng.random_range(1..=class_count);
                    let classes = sample_classes(&mut rng, len, label, &NoiseConfig { label_flip_prob: 0.0, ..*noise });
                    if let Some(bbox) = support_box(&values, w) {
                        let mask = ProbMask::new(w, h, values).expect("values in [0, 1]");
                        detections.push(Detection::new(bbox, classes, mask));
                        provenance.push(Provenance::Clutter);
                    }
                }
            }
            (
                SampleSet {
                    pass_index: k,
                    detections,
                },
                provenance,
            )
        })
        .collect();

    let (samples, provenance) = per_pass.into_iter().unzip();
    Ok(SimScene {
        scene: scene.clone(),
        samples,
        provenance,
    })
}

/// Closed-form per-member variance for analytic noise settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedDecomposition {
    /// Pixels the expectation refers to.
    pub region: BinaryMask,
    pub aleatoric: f64,
    pub epistemic: f64,
}

/// Expected mean aleatoric and epistemic variance over an instance's
/// boundary pixels.
///
/// Analytic cases: a pure soft edge (constant probability `q` per pixel
/// across passes gives `q(1−q)` and no epistemic part, averaged over the
/// ramp pixels), pure band presence (a hard pixel present in a fraction `r`
/// of passes gives `r(1−r)` epistemic and no aleatoric part, over the inner
/// band), and no noise at all (zeros over the instance). Contour jitter or
/// mixed settings have no closed form.
pub fn expected_decomposition(noise: &NoiseConfig, instance: &GroundTruthInstance) -> Result<ExpectedDecomposition> {
    noise.validate()?;
    if noise.boundary_sigma > 0.0 {
        return Err(Error::NoClosedForm("contour jitter has no closed-form decomposition".into()));
    }
    let soft = noise.soft_edge_width > 0.0;
    let banded = noise.band_presence < 1.0;
    if soft && banded {
        return Err(Error::NoClosedForm("soft edge combined with band presence".into()));
    }
    let field = instance_field(&instance.mask);
    let (w, h) = instance.mask.dims();
    if soft {
        let q: Vec<f64> = field.sdf.iter().map(|&sd| ramp(sd, noise.soft_edge_width)).collect();
        let region = BinaryMask::new(w, h, q.iter().map(|&v| v > 0.0 && v < 1.0).collect())?;
        let (sum, n) = q
            .iter()
            .filter(|&&v| v > 0.0 && v < 1.0)
            .fold((0.0, 0usize), |(s, n), &v| (s + v * (1.0 - v), n + 1));
        return Ok(ExpectedDecomposition {
            region,
            aleatoric: if n > 0 { sum / n as f64 } else { 0.0 },
            epistemic: 0.0,
        });
    }
    if banded {
        let bits = field
            .sdf
            .iter()
            .zip(&field.depth)
            .map(|(&sd, &d)| sd < 0.0 && d <= noise.band_width)
            .collect();
        let r = noise.band_presence;
        return Ok(ExpectedDecomposition {
            region: BinaryMask::new(w, h, bits)?,
            aleatoric: 0.0,
            epistemic: r * (1.0 - r),
        });
    }
    Ok(ExpectedDecomposition {
        region: instance.mask.clone(),
        aleatoric: 0.0,
        epistemic: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationProfile {
    /// `P(correct | confidence) = confidence`.
    Calibrated,
    /// Confident detections are always wrong and unconfident ones always right.
    Inverted,
}

/// Confidence/correctness pairs with uniformly distributed confidence.
pub fn simulate_calibration(count: usize, profile: CalibrationProfile, seed: u64) -> Vec<CalibrationSample> {
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let confidence: f64 = rng.random_range(0.0..=1.0);
            let correct = match profile {
                CalibrationProfile::Calibrated => rng.random_bool(confidence),
                CalibrationProfile::Inverted => confidence < 0.5,
            };
            CalibrationSample { confidence, correct }
        })
        .collect()
}
