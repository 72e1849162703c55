//! Direct, deliberately naive reimplementations used as references, plus
//! random input builders shared by the integration and acceptance tests.
#![allow(dead_code)]

use probseg::fusion::{fuse, FusionConfig, Member, Observation};
use probseg::{BBox, BinaryMask, ClassDist, Detection, GroundTruthInstance, ProbMask, SampleSet, Scene};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// clustering

struct RefCluster {
    label: usize,
    union: Vec<bool>,
    members: Vec<(usize, usize)>,
}

fn fg_argmax(probs: &[f64]) -> (usize, f64) {
    let mut best = (1, probs[1]);
    for (k, &p) in probs.iter().enumerate().skip(2) {
        if p > best.1 {
            best = (k, p);
        }
    }
    best
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `(pass, detection)` memberships of every kept cluster, in creation order.
pub fn reference_bsas(samples: &[SampleSet], cfg: &FusionConfig) -> Vec<Vec<(usize, usize)>> {
    let mut queue = Vec::new();
    for s in samples {
        for (i, d) in s.detections.iter().enumerate() {
            let (label, score) = fg_argmax(d.classes.probs());
            queue.push((s.pass_index, i, score, label, d));
        }
    }
    // pass ascending, then score descending, then position
    queue.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(b.2.partial_cmp(&a.2).unwrap())
            .then(a.1.cmp(&b.1))
    });
    let mut clusters: Vec<RefCluster> = Vec::new();
    for (pass, idx, score, label, det) in queue {
        if score < cfg.score_threshold {
            continue;
        }
        let bits: Vec<bool> = det.prob_mask.values().iter().map(|&v| v > 0.5).collect();
        let hit = clusters
            .iter_mut()
            .find(|c| c.label == label && iou(&c.union, &bits) >= cfg.iou_threshold);
        match hit {
            Some(c) => {
                for (u, b) in c.union.iter_mut().zip(&bits) {
                    *u |= *b;
                }
                c.members.push((pass, idx));
            }
            None => clusters.push(RefCluster {
                label,
                union: bits,
                members: vec![(pass, idx)],
            }),
        }
    }
    clusters
        .into_iter()
        .filter(|c| c.members.len() >= cfg.min_detections)
        .map(|c| c.members)
        .collect()
}

// ---------------------------------------------------------------------------
// assignment

/// Best total over every injective pairing, summing the chosen weights in
/// ascending order.
pub fn exhaustive_assignment(weights: &[Vec<f64>]) -> f64 {
    fn go(row: usize, weights: &[Vec<f64>], used: &mut Vec<bool>, chosen: &mut Vec<f64>, best: &mut f64) {
        if row == weights.len() {
            *best = best.max(canonical_sum(chosen));
            return;
        }
        // leave this row unassigned
        go(row + 1, weights, used, chosen, best);
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                chosen.push(weights[row][j]);
                go(row + 1, weights, used, chosen, best);
                chosen.pop();
                used[j] = false;
            }
        }
    }
    let cols = weights.first().map_or(0, Vec::len);
    let mut best = 0.0;
    go(0, weights, &mut vec![false; cols], &mut Vec::new(), &mut best);
    best
}

pub fn canonical_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

// ---------------------------------------------------------------------------
// weighted F-measure

fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Straight transcription: brute-force nearest foreground pixel (ties to the
/// lowest column, then row), full 2-D Gaussian kernel, per-pixel sums.
pub fn reference_fbw(gt: &[bool], pred: &[f64], w: usize, h: usize, alpha: f64) -> f64 {
    let e: Vec<f64> = gt
        .iter()
        .zip(pred)
        .map(|(&g, &p)| (if g { 1.0 } else { 0.0 } - p).abs())
        .collect();
    let fg: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| gt[y * w + x])
        .collect();
    let mut dist = vec![0.0; w * h];
    let mut et = e.clone();
    for y in 0..h {
        for x in 0..w {
            if gt[y * w + x] {
                continue;
            }
            let &(bx, by) = fg
                .iter()
                .min_by_key(|&&(fx, fy)| {
                    let d2 = (fx as i64 - x as i64).pow(2) + (fy as i64 - y as i64).pow(2);
                    (d2, fx, fy)
                })
                .unwrap();
            dist[y * w + x] = (((bx as f64 - x as f64).powi(2)) + ((by as f64 - y as f64).powi(2))).sqrt();
            et[y * w + x] = e[by * w + bx];
        }
    }
    let mut kernel = [[0.0f64; 7]; 7];
    let mut ksum = 0.0;
    for (dy, row) in kernel.iter_mut().enumerate() {
        for (dx, k) in row.iter_mut().enumerate() {
            let (u, v) = (dx as f64 - 3.0, dy as f64 - 3.0);
            *k = (-(u * u + v * v) / 8.0).exp();
            ksum += *k;
        }
    }
    let mut ea = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, row) in kernel.iter().enumerate() {
                for (dx, k) in row.iter().enumerate() {
                    let sx = mirror(x as isize + dx as isize - 3, w);
                    let sy = mirror(y as isize + dy as isize - 3, h);
                    acc += k / ksum * et[sy * w + sx];
                }
            }
            ea[y * w + x] = acc;
        }
    }
    let mut ew = vec![0.0; w * h];
    for i in 0..w * h {
        ew[i] = if gt[i] { e[i].min(ea[i]) } else { e[i] * (2.0 - (alpha * dist[i]).exp()) };
    }
    let n_fg = fg.len() as f64;
    let sum_fg: f64 = (0..w * h).filter(|&i| gt[i]).map(|i| ew[i]).sum();
    let sum_bg: f64 = (0..w * h).filter(|&i| !gt[i]).map(|i| ew[i]).sum();
    let tpw = n_fg - sum_fg;
    let rw = 1.0 - sum_fg / n_fg;
    let pw = if tpw + sum_bg == 0.0 { 0.0 } else { tpw / (tpw + sum_bg) };
    if pw + rw == 0.0 {
        0.0
    } else {
        2.0 * pw * rw / (pw + rw)
    }
}

// ---------------------------------------------------------------------------
// random inputs

pub fn random_rect(rng: &mut ChaCha8Rng, w: usize, h: usize, min: usize, max: usize) -> BinaryMask {
    let span = |n: usize| (min.min(n), max.min(n).max(min.min(n)));
    let ((lo_w, hi_w), (lo_h, hi_h)) = (span(w), span(h));
    let rw = rng.random_range(lo_w..=hi_w);
    let rh = rng.random_range(lo_h..=hi_h);
    let x0 = rng.random_range(0..=w - rw);
    let y0 = rng.random_range(0..=h - rh);
    BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh)
}

pub fn random_blob(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    let mut m = random_rect(rng, w, h, 3, w / 2);
    for _ in 0..rng.random_range(0..3) {
        m.union_with(&random_rect(rng, w, h, 2, w / 3));
    }
    m
}

/// Random distribution over `len` entries, quantized through `f32`.
pub fn random_classes(rng: &mut ChaCha8Rng, len: usize, peak: usize, sharpness: f64) -> ClassDist {
    let mut v: Vec<f64> = (0..len)
        .map(|k| rng.random_range(0.01..1.0) * if k == peak { sharpness } else { 1.0 })
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p = f64::from((*p / s) as f32));
    ClassDist::new(v).unwrap()
}

/// Soft mask: values near 1 on `core`, small mostly-zero noise elsewhere.
pub fn soft_mask(rng: &mut ChaCha8Rng, core: &BinaryMask) -> ProbMask {
    let (w, h) = core.dims();
    let values = core
        .bits()
        .iter()
        .map(|&b| {
            if b {
                rng.random_range(0.3..1.0f32)
            } else if rng.random_bool(0.1) {
                rng.random_range(0.0..0.7f32)
            } else {
                0.0
            }
        })
        .collect();
    ProbMask::new(w, h, values).unwrap()
}

pub fn detection(mask: ProbMask, classes: ClassDist) -> Detection {
    let (w, h) = mask.dims();
    Detection::new(BBox::new(0.0, 0.0, w as f64, h as f64).unwrap(), classes, mask)
}

/// Observation fused from `n` jittered copies of `core`.
pub fn random_observation(rng: &mut ChaCha8Rng, core: &BinaryMask, label: usize, len: usize, n: usize) -> Observation {
    let members = (0..n)
        .map(|k| Member {
            pass_index: k,
            detection_index: 0,
            detection: detection(soft_mask(rng, core), random_classes(rng, len, label, 4.0)),
        })
        .collect();
    fuse_members(members, n)
}

fn fuse_members(members: Vec<Member>, passes: usize) -> Observation {
    // members may disagree on label after random class draws; force agreement
    let label = members[0].detection.label();
    let members = members
        .into_iter()
        .map(|mut m| {
            if m.detection.label() != label {
                m.detection.classes = ClassDist::one_hot(m.detection.classes.len(), label);
            }
            m
        })
        .collect();
    fuse(members, passes, &FusionConfig::default()).unwrap()
}

pub fn random_scene(rng: &mut ChaCha8Rng, w: usize, h: usize, n: usize, classes: usize) -> Scene {
    let instances = (0..n)
        .map(|_| GroundTruthInstance::new(rng.random_range(1..=classes), random_blob(rng, w, h)).unwrap())
        .collect();
    Scene::new("random", w, h, instances).unwrap()
}
