//! Weighted F-measure for foreground maps.
//!
//! Errors outside the object are first replaced by the error of their
//! nearest object pixel, smoothed with a Gaussian to model pixel dependency,
//! and only allowed to lower errors inside the object. Background errors are
//! then weighted up by closeness to the object before weighted precision and
//! recall are combined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Observation;
use crate::model::{BinaryMask, ProbMask, Scene};

/// Choice of the distance decay constant for background importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaVariant {
    /// `ln(0.5) / 5`: importance halves its excess every five pixels.
    #[default]
    LogHalf,
    /// `0.5 / 5` taken literally, kept for comparison only.
    Literal,
}

impl AlphaVariant {
    pub fn value(self) -> f64 {
        match self {
            AlphaVariant::LogHalf => 0.5f64.ln() / 5.0,
            AlphaVariant::Literal => 0.5 / 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbwParams {
    pub beta: f64,
    pub sigma2: f64,
    pub kernel_size: usize,
    pub alpha: AlphaVariant,
}

impl Default for FbwParams {
    fn default() -> Self {
        FbwParams {
            beta: 1.0,
            sigma2: 4.0,
            kernel_size: 7,
            alpha: AlphaVariant::LogHalf,
        }
    }
}

/// Exact Euclidean distance transform to the nearest set pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    /// Euclidean distance per pixel (0 on set pixels, `INFINITY` if the mask is empty).
    pub distance: Vec<f64>,
    /// Row-major index of the nearest set pixel. Among equidistant
    /// candidates the lowest column wins, then the lowest row.
    pub nearest: Vec<usize>,
}

const NONE: usize = usize::MAX;

/// Two-pass separable transform: nearest set row per column, then a lower
/// envelope of parabolas along each row.
pub fn distance_transform(mask: &BinaryMask) -> DistanceField {
    let (w, h) = mask.dims();
    // per column: squared vertical distance and the row it came from
    let mut col_d2 = vec![u64::MAX; w * h];
    let mut col_row = vec![NONE; w * h];
    for x in 0..w {
        let mut above = NONE;
        for y in 0..h {
            if mask.get(x, y) {
                above = y;
            }
            if above != NONE {
                let d = (y - above) as u64;
                col_d2[y * w + x] = d * d;
                col_row[y * w + x] = above;
            }
        }
        let mut below = NONE;
        for y in (0..h).rev() {
            if mask.get(x, y) {
                below = y;
            }
            if below != NONE {
                let d = (below - y) as u64;
                // strict: equal distance keeps the row above
                if d * d < col_d2[y * w + x] {
                    col_d2[y * w + x] = d * d;
                    col_row[y * w + x] = below;
                }
            }
        }
    }

    let mut distance = vec![f64::INFINITY; w * h];
    let mut nearest = vec![NONE; w * h];
    let mut v: Vec<usize> = Vec::with_capacity(w);
    let mut z: Vec<f64> = Vec::with_capacity(w + 1);
    for y in 0..h {
        let f = |j: usize| col_d2[y * w + j];
        v.clear();
        z.clear();
        for q in (0..w).filter(|&q| f(q) != u64::MAX) {
            if v.is_empty() {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                continue;
            }
            loop {
                let p = *v.last().unwrap();
                let s = intersection(f(p), p, f(q), q);
                if s <= *z.last().unwrap() {
                    v.pop();
                    z.pop();
                    if v.is_empty() {
                        break;
                    }
                } else {
                    break;
                }
            }
            if v.is_empty() {
                v.push(q);
                z.push(f64::NEG_INFINITY);
            } else {
                let p = *v.last().unwrap();
                z.push(intersection(f(p), p, f(q), q));
                v.push(q);
            }
        }
        if v.is_empty() {
            continue;
        }
        let mut k = 0usize;
        for x in 0..w {
            while k + 1 < v.len() && z[k + 1] < x as f64 {
                k += 1;
            }
            let j = v[k];
            let dx = x.abs_diff(j) as u64;
            let d2 = f(j) + dx * dx;
            distance[y * w + x] = (d2 as f64).sqrt();
            nearest[y * w + x] = col_row[y * w + j] * w + j;
        }
    }
    DistanceField {
        width: w,
        height: h,
        distance,
        nearest,
    }
}

/// Abscissa where parabolas rooted at `p` and `q > p` meet. Operands are
/// exact integers so equal rationals round to equal floats.
fn intersection(fp: u64, p: usize, fq: u64, q: usize) -> f64 {
    let num = (fq + (q * q) as u64) as f64 - (fp + (p * p) as u64) as f64;
    num / (2.0 * (q - p) as f64)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Normalized Gaussian filter with symmetric (edge-duplicating) reflection.
pub fn gaussian_filter(values: &[f64], width: usize, height: usize, size: usize, sigma2: f64) -> Vec<f64> {
    let r = (size / 2) as isize;
    let mut kernel: Vec<f64> = (-r..=r).map(|t| (-((t * t) as f64) / (2.0 * sigma2)).exp()).collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (t, k) in (-r..=r).zip(&kernel) {
                acc += k * values[y * width + reflect(x as isize + t, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (t, k) in (-r..=r).zip(&kernel) {
                acc += k * tmp[reflect(y as isize + t, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

pub fn weighted_fbw(gt: &BinaryMask, pred: &ProbMask) -> Result<f64> {
    weighted_fbw_with(gt, pred, &FbwParams::default())
}

pub fn weighted_fbw_with(gt: &BinaryMask, pred: &ProbMask, params: &FbwParams) -> Result<f64> {
    if gt.dims() != pred.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: pred.dims(),
        });
    }
    let fg = gt.count();
    if fg == 0 {
        return Err(Error::Empty("ground-truth mask"));
    }
    let (w, h) = gt.dims();
    let bits = gt.bits();
    let error: Vec<f64> = bits
        .iter()
        .zip(pred.values())
        .map(|(&g, &p)| (f64::from(u8::from(g)) - f64::from(p)).abs())
        .collect();

    let field = distance_transform(gt);
    let spread: Vec<f64> = (0..w * h)
        .map(|i| if bits[i] { error[i] } else { error[field.nearest[i]] })
        .collect();
    let smoothed = gaussian_filter(&spread, w, h, params.kernel_size, params.sigma2);

    let alpha = params.alpha.value();
    let (mut fg_err, mut bg_err) = (0.0, 0.0);
    for i in 0..w * h {
        if bits[i] {
            fg_err += error[i].min(smoothed[i]);
        } else {
            bg_err += error[i] * (2.0 - (alpha * field.distance[i]).exp());
        }
    }
    let tp = fg as f64 - fg_err;
    let recall = 1.0 - fg_err / fg as f64;
    let precision = if tp + bg_err != 0.0 { tp / (tp + bg_err) } else { 0.0 };
    let b2 = params.beta * params.beta;
    let denom = b2 * precision + recall;
    Ok(if denom != 0.0 {
        (1.0 + b2) * precision * recall / denom
    } else {
        0.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFbw {
    pub label: usize,
    pub name: String,
    /// Mean over images containing the class; `None` if no image does.
    pub value: Option<f64>,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbwSummary {
    pub per_class: Vec<ClassFbw>,
    /// Mean over classes with a value.
    pub average: Option<f64>,
}

/// For every class: union of that class's ground truth per image against the
/// pixel-wise max of the same-label observations' mean masks, averaged over
/// images, then over classes.
pub fn fbw_per_class(
    images: &[(&[Observation], &Scene)],
    class_names: &[String],
    params: &FbwParams,
) -> Result<FbwSummary> {
    let mut per_class = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for label in 1..class_names.len() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (observations, scene) in images {
            let mut gt = BinaryMask::empty(scene.width, scene.height);
            let mut any = false;
            for inst in scene.instances.iter().filter(|i| i.label == label) {
                gt.union_with(&inst.mask);
                any = true;
            }
            if !any {
                continue;
            }
            let mut pred = vec![0.0f32; scene.width * scene.height];
            for obs in observations.iter().filter(|o| o.label == label) {
                for (p, &m) in pred.iter_mut().zip(obs.mean_mask.values()) {
                    *p = p.max(m);
                }
            }
            let pred = ProbMask::new(scene.width, scene.height, pred)?;
            sum += weighted_fbw_with(&gt, &pred, params)?;
            count += 1;
        }
        per_class.push(ClassFbw {
            label,
            name: class_names[label].clone(),
            value: (count > 0).then(|| sum / count as f64),
            images: count,
        });
    }
    let values: Vec<f64> = per_class.iter().filter_map(|c| c.value).collect();
    let average = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    Ok(FbwSummary { per_class, average })
}
