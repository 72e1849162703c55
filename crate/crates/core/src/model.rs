//! Data model shared by every stage: boxes, class distributions, masks,
//! detections grouped per stochastic forward pass, and ground truth.
//!
//! Masks are always full-frame and row-major. Probabilities are held as
//! `f32` (the interchange precision); boxes and class distributions are
//! held as `f64` but callers that intend to round-trip through the binary
//! format should keep them `f32`-representable.

use crate::error::{Error, Result};

/// Slack applied when validating probabilities that came from disk.
pub const PROB_SLACK: f64 = 1e-6;

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::validation("box", format!("non-finite coordinate in {b:?}")));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::validation("box", format!("corners out of order in {b:?}")));
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn fits_frame(&self, width: usize, height: usize) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width as f64 && self.y2 <= height as f64
    }

    /// Whether pixel `(x, y)` (its center) lies inside the box grown by `margin` pixels.
    pub fn contains_pixel(&self, x: usize, y: usize, margin: f64) -> bool {
        let cx = x as f64 + 0.5;
        let cy = y as f64 + 0.5;
        cx >= self.x1 - margin && cx <= self.x2 + margin && cy >= self.y1 - margin && cy <= self.y2 + margin
    }
}

/// Categorical distribution over `c` foreground classes plus background at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDist {
    probs: Vec<f64>,
}

impl ClassDist {
    /// Validates entries in `[0, 1]` and a unit sum, both within [`PROB_SLACK`].
    /// Entries inside the slack band are clamped.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::validation(
                "class distribution",
                format!("need background plus at least one class, got {} entries", probs.len()),
            ));
        }
        let mut probs = probs;
        for (k, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < -PROB_SLACK || *p > 1.0 + PROB_SLACK {
                return Err(Error::validation(
                    "class distribution",
                    format!("entry {k} = {p} outside [0, 1]"),
                ));
            }
            *p = p.clamp(0.0, 1.0);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SLACK {
            return Err(Error::validation(
                "class distribution",
                format!("entries sum to {sum}, expected 1"),
            ));
        }
        Ok(ClassDist { probs })
    }

    pub fn one_hot(len: usize, label: usize) -> Self {
        assert!(label < len && len >= 2);
        let mut probs = vec![0.0; len];
        probs[label] = 1.0;
        ClassDist { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most probable foreground class; the lowest index wins ties.
    pub fn label(&self) -> usize {
        let mut best = 1;
        for k in 2..self.probs.len() {
            if self.probs[k] > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// Probability of the most probable foreground class.
    pub fn score(&self) -> f64 {
        self.probs[self.label()]
    }
}

/// Full-frame grid of per-pixel foreground probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ProbMask {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::validation(
                "probability mask",
                format!("{} values for a {width}x{height} grid", values.len()),
            ));
        }
        let mut values = values;
        for (i, v) in values.iter_mut().enumerate() {
            let p = f64::from(*v);
            if !p.is_finite() || !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
                return Err(Error::validation(
                    "probability mask",
                    format!("pixel ({}, {}) = {p} outside [0, 1]", i % width.max(1), i / width.max(1)),
                ));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(ProbMask { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        ProbMask {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_binary(mask: &BinaryMask) -> Self {
        ProbMask {
            width: mask.width(),
            height: mask.height(),
            values: mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// Full-frame boolean mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::validation(
                "binary mask",
                format!("{} bits for a {width}x{height} grid", bits.len()),
            ));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// In-place union. Panics on dimension mismatch.
    pub fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }
}

/// `|a ∩ b| / |a ∪ b|`, defined as 0 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// One sampled instance hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub classes: ClassDist,
    pub prob_mask: ProbMask,
}

impl Detection {
    pub fn new(bbox: BBox, classes: ClassDist, prob_mask: ProbMask) -> Self {
        Detection {
            bbox,
            classes,
            prob_mask,
        }
    }

    /// Max over the non-background class probabilities.
    pub fn score(&self) -> f64 {
        self.classes.score()
    }

    pub fn label(&self) -> usize {
        self.classes.label()
    }

    /// Whether all nonzero mask pixels lie within `margin` pixels of the box.
    pub fn mask_within_box(&self, margin: f64) -> bool {
        let w = self.prob_mask.width();
        self.prob_mask
            .values()
            .iter()
            .enumerate()
            .all(|(i, &v)| v == 0.0 || self.bbox.contains_pixel(i % w, i / w, margin))
    }
}

/// All detections produced by one stochastic forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub pass_index: usize,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub label: usize,
    pub mask: BinaryMask,
}

impl GroundTruthInstance {
    pub fn new(label: usize, mask: BinaryMask) -> Result<Self> {
        if label == 0 {
            return Err(Error::validation("ground truth", "label 0 is reserved for background"));
        }
        if mask.is_empty() {
            return Err(Error::validation("ground truth", "instance mask is empty"));
        }
        Ok(GroundTruthInstance { label, mask })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub instances: Vec<GroundTruthInstance>,
}

impl Scene {
    pub fn new(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        instances: Vec<GroundTruthInstance>,
    ) -> Result<Self> {
        for inst in &instances {
            if inst.mask.dims() != (width, height) {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    found: inst.mask.dims(),
                });
            }
        }
        Ok(Scene {
            image_id: image_id.into(),
            width,
            height,
            instances,
        })
    }
}
