//! Grouping of detections across forward passes into observations, and
//! fusion of each group into summary statistics.
//!
//! Clustering is a Basic Sequential Algorithm Scheme: every detection that
//! clears the score threshold joins the first existing cluster with the same
//! foreground label whose representative mask overlaps it with IoU at or
//! above the threshold, or seeds a new cluster. The representative mask is
//! the union of the members' binarized masks. Passes are visited in index
//! order and detections within a pass in descending score, so the result is
//! deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mask_iou, BBox, BinaryMask, ClassDist, Detection, ProbMask, SampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapDenominator {
    /// Divide detection counts by the number of forward passes `M`.
    #[default]
    TotalPasses,
    /// Divide by the number of members `N` in the observation.
    ClusterSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub min_detections: usize,
    pub score_threshold: f64,
    pub iou_threshold: f64,
    pub heatmap_denominator: HeatmapDenominator,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            min_detections: 2,
            score_threshold: 0.5,
            iou_threshold: 0.5,
            heatmap_denominator: HeatmapDenominator::TotalPasses,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_detections == 0 {
            return Err(Error::Config("min_detections must be at least 1".into()));
        }
        for (name, v) in [("score_threshold", self.score_threshold), ("iou_threshold", self.iou_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// A detection together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub pass_index: usize,
    /// Position in the pass's detection list as stored on disk.
    pub detection_index: usize,
    pub detection: Detection,
}

/// A cluster of detections judged to describe one instance, with fused summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub members: Vec<Member>,
    pub mean_box: BBox,
    pub mean_classes: ClassDist,
    pub mean_mask: ProbMask,
    pub heatmap: ProbMask,
    /// Union of the members' binarized masks.
    pub support: BinaryMask,
    pub label: usize,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Max non-background probability of the fused class distribution.
    pub fn confidence(&self) -> f64 {
        self.mean_classes.score()
    }
}

/// Bit set iff probability > 0.5.
pub fn binarize(mask: &ProbMask) -> BinaryMask {
    let bits = mask.values().iter().map(|&p| p > 0.5).collect();
    BinaryMask::new(mask.width(), mask.height(), bits).expect("dimensions preserved")
}

struct Cluster {
    label: usize,
    union: BinaryMask,
    members: Vec<Member>,
}

/// Sequential assignment only; returns every cluster, including ones that
/// fall short of `min_detections`.
pub fn bsas_groups(samples: &[SampleSet], cfg: &FusionConfig) -> Result<Vec<Vec<Member>>> {
    cfg.validate()?;
    let dims = samples
        .iter()
        .flat_map(|s| s.detections.first())
        .map(|d| d.prob_mask.dims())
        .next();

    let mut order: Vec<&SampleSet> = samples.iter().collect();
    order.sort_by_key(|s| s.pass_index);

    let mut clusters: Vec<Cluster> = Vec::new();
    for sample in order {
        let mut ranked: Vec<(usize, &Detection)> = sample.detections.iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.score().total_cmp(&a.1.score()).then(a.0.cmp(&b.0)));

        for (detection_index, det) in ranked {
            if let Some(expected) = dims {
                if det.prob_mask.dims() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        found: det.prob_mask.dims(),
                    });
                }
            }
            if det.score() < cfg.score_threshold {
                continue;
            }
            let label = det.label();
            let bits = binarize(&det.prob_mask);
            let member = Member {
                pass_index: sample.pass_index,
                detection_index,
                detection: det.clone(),
            };
            let mut target = None;
            for (ci, c) in clusters.iter().enumerate() {
                if c.label == label && mask_iou(&c.union, &bits)? >= cfg.iou_threshold {
                    target = Some(ci);
                    break;
                }
            }
            match target {
                Some(ci) => {
                    let c = &mut clusters[ci];
                    c.union.union_with(&bits);
                    c.members.push(member);
                }
                None => clusters.push(Cluster {
                    label,
                    union: bits,
                    members: vec![member],
                }),
            }
        }
    }
    Ok(clusters.into_iter().map(|c| c.members).collect())
}

/// Clusters detections across passes and fuses every cluster with at least
/// `min_detections` members. `M` is taken to be `samples.len()`.
pub fn bsas_cluster(samples: &[SampleSet], cfg: &FusionConfig) -> Result<Vec<Observation>> {
    let groups = bsas_groups(samples, cfg)?;
    let total_passes = samples.len();
    groups
        .into_par_iter()
        .filter(|g| g.len() >= cfg.min_detections)
        .map(|g| fuse(g, total_passes, cfg))
        .collect()
}

fn check_members(members: &[Member]) -> Result<(usize, usize)> {
    let first = members.first().ok_or(Error::Empty("observation has no members"))?;
    let dims = first.detection.prob_mask.dims();
    let classes = first.detection.classes.len();
    for m in members {
        if m.detection.prob_mask.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: m.detection.prob_mask.dims(),
            });
        }
        if m.detection.classes.len() != classes {
            return Err(Error::validation("observation members", "class vectors differ in length"));
        }
    }
    Ok(dims)
}

/// Per pixel, the number of members whose binarized mask covers it, divided
/// by `M` or `N` according to `cfg.heatmap_denominator`.
pub fn heatmap(members: &[Member], total_passes: usize, cfg: &FusionConfig) -> Result<ProbMask> {
    if total_passes == 0 {
        return Err(Error::Empty("total pass count M is zero"));
    }
    let (w, h) = check_members(members)?;
    let denom = match cfg.heatmap_denominator {
        HeatmapDenominator::TotalPasses => total_passes,
        HeatmapDenominator::ClusterSize => members.len(),
    } as f64;
    let mut counts = vec![0u32; w * h];
    for m in members {
        for (c, &p) in counts.iter_mut().zip(m.detection.prob_mask.values()) {
            *c += u32::from(p > 0.5);
        }
    }
    let values = counts.into_iter().map(|c| (f64::from(c) / denom).min(1.0) as f32).collect();
    ProbMask::new(w, h, values)
}

/// Arithmetic-mean fusion of a non-empty member list.
pub fn fuse(members: Vec<Member>, total_passes: usize, cfg: &FusionConfig) -> Result<Observation> {
    let (w, h) = check_members(&members)?;
    let n = members.len() as f64;
    let label = members[0].detection.label();
    if members.iter().any(|m| m.detection.label() != label) {
        return Err(Error::validation("observation members", "members disagree on label"));
    }

    let mut b = [0.0f64; 4];
    for m in &members {
        let bb = &m.detection.bbox;
        for (acc, v) in b.iter_mut().zip([bb.x1, bb.y1, bb.x2, bb.y2]) {
            *acc += v;
        }
    }
    let mean_box = BBox::new(b[0] / n, b[1] / n, b[2] / n, b[3] / n)?;

    let k = members[0].detection.classes.len();
    let mut class_sum = vec![0.0f64; k];
    for m in &members {
        for (acc, &p) in class_sum.iter_mut().zip(m.detection.classes.probs()) {
            *acc += p;
        }
    }
    let mut mean: Vec<f64> = class_sum.iter().map(|s| s / n).collect();
    let total: f64 = mean.iter().sum();
    if total > 0.0 {
        mean.iter_mut().for_each(|p| *p /= total);
    }
    let mean_classes = ClassDist::new(mean)?;

    let mut mask_sum = vec![0.0f64; w * h];
    let mut support = BinaryMask::empty(w, h);
    for m in &members {
        for (acc, &p) in mask_sum.iter_mut().zip(m.detection.prob_mask.values()) {
            *acc += f64::from(p);
        }
        support.union_with(&binarize(&m.detection.prob_mask));
    }
    let mean_mask = ProbMask::new(w, h, mask_sum.iter().map(|s| (s / n) as f32).collect())?;
    let heatmap = heatmap(&members, total_passes, cfg)?;

    Ok(Observation {
        members,
        mean_box,
        mean_classes,
        mean_mask,
        heatmap,
        support,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(mask: BinaryMask, classes: Vec<f64>) -> Detection {
        Detection::new(
            BBox::new(0.0, 0.0, mask.width() as f64, mask.height() as f64).unwrap(),
            ClassDist::new(classes).unwrap(),
            ProbMask::from_binary(&mask),
        )
    }

    fn cols(range: std::ops::Range<usize>) -> BinaryMask {
        BinaryMask::from_fn(4, 4, |x, _| range.contains(&x))
    }

    fn member(pass: usize, d: Detection) -> Member {
        Member {
            pass_index: pass,
            detection_index: 0,
            detection: d,
        }
    }

    #[test]
    fn binarize_is_strict() {
        let m = ProbMask::new(2, 2, vec![0.4, 0.6, 0.5, 0.9]).unwrap();
        assert_eq!(binarize(&m).bits(), &[false, true, false, true]);
        assert!(binarize(&ProbMask::zeros(3, 3)).is_empty());
    }

    #[test]
    fn identical_detections_merge() {
        let samples: Vec<SampleSet> = (0..8)
            .map(|k| SampleSet {
                pass_index: k,
                detections: vec![det(cols(0..2), vec![0.0, 1.0])],
            })
            .collect();
        let obs = bsas_cluster(&samples, &FusionConfig::default()).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].len(), 8);
        assert!(obs[0].heatmap.values().iter().zip(cols(0..2).bits()).all(|(&h, &b)| h == if b { 1.0 } else { 0.0 }));
    }

    #[test]
    fn low_iou_pair_is_split_then_discarded() {
        // IoU of the left and middle column pairs is 4/12 < 0.5
        let samples = vec![
            SampleSet {
                pass_index: 0,
                detections: vec![det(cols(0..2), vec![0.1, 0.9])],
            },
            SampleSet {
                pass_index: 1,
                detections: vec![det(cols(1..3), vec![0.1, 0.9])],
            },
        ];
        let cfg = FusionConfig::default();
        assert_eq!(bsas_groups(&samples, &cfg).unwrap().len(), 2);
        assert!(bsas_cluster(&samples, &cfg).unwrap().is_empty());
    }

    #[test]
    fn different_labels_never_merge() {
        let samples = vec![
            SampleSet {
                pass_index: 0,
                detections: vec![det(cols(0..2), vec![0.1, 0.9, 0.0])],
            },
            SampleSet {
                pass_index: 1,
                detections: vec![det(cols(0..2), vec![0.1, 0.0, 0.9])],
            },
        ];
        let cfg = FusionConfig {
            min_detections: 1,
            ..FusionConfig::default()
        };
        let groups = bsas_groups(&samples, &cfg).unwrap();
        assert_eq!(groups.len(), 2);
    }

    #[test]
    fn score_filter_is_inclusive() {
        let samples = vec![SampleSet {
            pass_index: 0,
            detections: vec![det(cols(0..2), vec![0.5, 0.5]), det(cols(2..4), vec![0.51, 0.49])],
        }];
        let cfg = FusionConfig {
            min_detections: 1,
            ..FusionConfig::default()
        };
        let groups = bsas_groups(&samples, &cfg).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0][0].detection_index, 0);
    }

    #[test]
    fn fuse_single_member_is_identity() {
        let d = Detection::new(
            BBox::new(0.5, 1.0, 2.5, 3.0).unwrap(),
            ClassDist::new(vec![0.25, 0.75]).unwrap(),
            ProbMask::new(2, 2, vec![0.25, 0.75, 1.0, 0.0]).unwrap(),
        );
        let obs = fuse(vec![member(0, d.clone())], 1, &FusionConfig::default()).unwrap();
        assert_eq!(obs.mean_box, d.bbox);
        assert_eq!(obs.mean_classes, d.classes);
        assert_eq!(obs.mean_mask, d.prob_mask);
        assert_eq!(obs.support, binarize(&d.prob_mask));
    }

    #[test]
    fn fuse_means() {
        let a = Detection::new(
            BBox::new(0.0, 0.0, 2.0, 2.0).unwrap(),
            ClassDist::new(vec![0.2, 0.8]).unwrap(),
            ProbMask::zeros(4, 4),
        );
        let b = Detection::new(
            BBox::new(2.0, 2.0, 4.0, 4.0).unwrap(),
            ClassDist::new(vec![0.6, 0.4]).unwrap(),
            ProbMask::zeros(4, 4),
        );
        let obs = fuse(vec![member(0, a), member(1, b)], 2, &FusionConfig::default()).unwrap();
        assert_eq!(obs.mean_box, BBox::new(1.0, 1.0, 3.0, 3.0).unwrap());
        let p = obs.mean_classes.probs();
        assert!((p[0] - 0.4).abs() < 1e-12 && (p[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn fuse_rejects_empty() {
        assert!(matches!(fuse(vec![], 1, &FusionConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn heatmap_denominators() {
        let hit = det(cols(0..1), vec![0.0, 1.0]);
        let miss = det(BinaryMask::empty(4, 4), vec![0.0, 1.0]);
        let members: Vec<Member> = (0..24)
            .map(|k| member(k, if k < 12 { hit.clone() } else { miss.clone() }))
            .collect();
        let cfg = FusionConfig::default();
        let h = heatmap(&members, 24, &cfg).unwrap();
        assert_eq!(h.get(0, 0), 0.5);
        assert_eq!(h.get(1, 0), 0.0);

        let cluster = FusionConfig {
            heatmap_denominator: HeatmapDenominator::ClusterSize,
            ..cfg
        };
        assert_eq!(heatmap(&members[..12], 24, &cfg).unwrap().get(0, 0), 0.5);
        assert_eq!(heatmap(&members[..12], 24, &cluster).unwrap().get(0, 0), 1.0);
        assert_eq!(heatmap(&members, 24, &cluster).unwrap(), h);
        assert!(heatmap(&members, 0, &cfg).is_err());
    }

    #[test]
    fn dimension_mismatch_across_passes() {
        let samples = vec![
            SampleSet {
                pass_index: 0,
                detections: vec![det(cols(0..2), vec![0.0, 1.0])],
            },
            SampleSet {
                pass_index: 1,
                detections: vec![det(BinaryMask::from_fn(3, 3, |_, _| true), vec![0.0, 1.0])],
            },
        ];
        assert!(matches!(
            bsas_cluster(&samples, &FusionConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = FusionConfig {
            iou_threshold: 1.5,
            ..FusionConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.iou_threshold = 0.5;
        cfg.min_detections = 0;
        assert!(cfg.validate().is_err());
    }
}
