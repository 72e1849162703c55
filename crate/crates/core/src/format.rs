//! Run directory interchange format.
//!
//! ```text
//! run/
//!   manifest.json        image id, frame size, class names, pass count, pass file list
//!   pass_<k>.bin         one file per forward pass
//!   ground_truth.json    optional, instances with COCO RLE masks
//! ```
//!
//! Pass files are little-endian: the magic `PSEG`, a `u16` version, a `u32`
//! record count, then per record the box as 4×`f32`, the class distribution
//! as (c+1)×`f32`, and the full-frame mask as width×height `f32` row-major.
//! The same record layout is reused for exported observations and variance
//! maps.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, ClassDist, Detection, GroundTruthInstance, ProbMask, SampleSet, Scene};
use crate::rle::{self, Rle};

pub const MAGIC: &[u8; 4] = b"PSEG";
pub const VERSION: u16 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Margin (pixels) around a detection box beyond which mask support draws a warning.
const SUPPORT_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    /// Index 0 is background.
    pub class_names: Vec<String>,
    pub passes: usize,
    pub pass_files: Vec<String>,
}

impl RunManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub manifest: RunManifest,
    pub samples: Vec<SampleSet>,
    pub scene: Option<Scene>,
}

impl Run {
    /// Builds a run with a manifest listing `pass_<k>.bin` for each sample set.
    pub fn new(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        class_names: Vec<String>,
        mut samples: Vec<SampleSet>,
        scene: Option<Scene>,
    ) -> Self {
        samples.sort_by_key(|s| s.pass_index);
        let pass_files = (0..samples.len()).map(pass_file_name).collect();
        Run {
            manifest: RunManifest {
                image_id: image_id.into(),
                width,
                height,
                class_names,
                passes: samples.len(),
                pass_files,
            },
            samples,
            scene,
        }
    }

    /// Number of forward passes `M`.
    pub fn passes(&self) -> usize {
        self.samples.len()
    }

    /// The first `m` passes, as if the run had been recorded with `M = m`.
    pub fn truncated(&self, m: usize) -> Run {
        let samples: Vec<SampleSet> = self.samples.iter().take(m).cloned().collect();
        Run::new(
            self.manifest.image_id.clone(),
            self.manifest.width,
            self.manifest.height,
            self.manifest.class_names.clone(),
            samples,
            self.scene.clone(),
        )
    }
}

pub fn pass_file_name(k: usize) -> String {
    format!("pass_{k}.bin")
}

/// Raw record before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub bbox: [f32; 4],
    pub classes: Vec<f32>,
    pub mask: Vec<f32>,
}

impl Record {
    pub fn from_detection(det: &Detection) -> Self {
        Record {
            bbox: [det.bbox.x1 as f32, det.bbox.y1 as f32, det.bbox.x2 as f32, det.bbox.y2 as f32],
            classes: det.classes.probs().iter().map(|&p| p as f32).collect(),
            mask: det.prob_mask.values().to_vec(),
        }
    }
}

pub fn encode_records(records: &[Record]) -> Vec<u8> {
    let payload: usize = records
        .iter()
        .map(|r| 4 * (4 + r.classes.len() + r.mask.len()))
        .sum();
    let mut out = Vec::with_capacity(10 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        for v in r.bbox.iter().chain(&r.classes).chain(&r.mask) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_records(bytes: &[u8], num_classes: usize, width: usize, height: usize) -> Result<Vec<Record>> {
    if bytes.len() < 10 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing PSEG magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let floats_per = 4 + num_classes + width * height;
    let expected = 10 + count * floats_per * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{count} records of {floats_per} floats need {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let mut floats = bytes[10..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let bbox = [(); 4].map(|_| floats.next().unwrap());
        let classes = floats.by_ref().take(num_classes).collect();
        let mask = floats.by_ref().take(width * height).collect();
        records.push(Record { bbox, classes, mask });
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    fs::write(path, encode_records(records)).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path, num_classes: usize, width: usize, height: usize) -> Result<Vec<Record>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_records(&bytes, num_classes, width, height)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn record_to_detection(rec: Record, width: usize, height: usize, context: &str) -> Result<Detection> {
    let [x1, y1, x2, y2] = rec.bbox.map(f64::from);
    let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| Error::validation(context, e.to_string()))?;
    if !bbox.fits_frame(width, height) {
        return Err(Error::validation(context, format!("box {bbox:?} outside {width}x{height} frame")));
    }
    let classes = ClassDist::new(rec.classes.into_iter().map(f64::from).collect())
        .map_err(|e| Error::validation(context, e.to_string()))?;
    let prob_mask = ProbMask::new(width, height, rec.mask).map_err(|e| Error::validation(context, e.to_string()))?;
    let det = Detection::new(bbox, classes, prob_mask);
    if !det.mask_within_box(SUPPORT_MARGIN) {
        log::warn!("{context}: mask has support outside its box");
    }
    Ok(det)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthFile {
    image_id: String,
    instances: Vec<GroundTruthEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthEntry {
    label: usize,
    mask: Rle,
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_ground_truth(path: &Path, manifest: &RunManifest) -> Result<Scene> {
    let file: GroundTruthFile = read_json(path)?;
    let mut instances = Vec::with_capacity(file.instances.len());
    for (i, entry) in file.instances.into_iter().enumerate() {
        let context = format!("ground truth instance {i}");
        if entry.mask.size != [manifest.height, manifest.width] {
            return Err(Error::DimensionMismatch {
                expected: (manifest.width, manifest.height),
                found: (entry.mask.size[1], entry.mask.size[0]),
            });
        }
        if entry.label >= manifest.num_classes() {
            return Err(Error::validation(context, format!("label {} out of range", entry.label)));
        }
        let mask = rle::decode(&entry.mask)?;
        instances.push(GroundTruthInstance::new(entry.label, mask).map_err(|e| Error::validation(context, e.to_string()))?);
    }
    Scene::new(file.image_id, manifest.width, manifest.height, instances)
}

pub fn save_ground_truth(path: &Path, scene: &Scene) -> Result<()> {
    let file = GroundTruthFile {
        image_id: scene.image_id.clone(),
        instances: scene
            .instances
            .iter()
            .map(|inst| GroundTruthEntry {
                label: inst.label,
                mask: rle::encode(&inst.mask),
            })
            .collect(),
    };
    write_json(path, &file)
}

/// Loads and validates a run directory.
pub fn load_run(dir: &Path) -> Result<Run> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.passes == 0 || manifest.pass_files.is_empty() {
        return Err(Error::NoSamples);
    }
    if manifest.passes != manifest.pass_files.len() {
        return Err(Error::Format(format!(
            "manifest declares {} passes but lists {} files",
            manifest.passes,
            manifest.pass_files.len()
        )));
    }
    if manifest.num_classes() < 2 {
        return Err(Error::Format("class_names must include background and one class".into()));
    }
    let (w, h, c) = (manifest.width, manifest.height, manifest.num_classes());
    let mut samples = Vec::with_capacity(manifest.passes);
    for (k, file) in manifest.pass_files.iter().enumerate() {
        let records = read_records(&dir.join(file), c, w, h)?;
        let detections = records
            .into_iter()
            .enumerate()
            .map(|(i, rec)| record_to_detection(rec, w, h, &format!("pass {k} detection {i}")))
            .collect::<Result<Vec<_>>>()?;
        samples.push(SampleSet {
            pass_index: k,
            detections,
        });
    }
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let scene = if gt_path.exists() {
        let scene = load_ground_truth(&gt_path, &manifest)?;
        if scene.image_id != manifest.image_id {
            log::warn!(
                "ground truth image id {:?} differs from manifest {:?}",
                scene.image_id,
                manifest.image_id
            );
        }
        Some(scene)
    } else {
        None
    };
    Ok(Run {
        manifest,
        samples,
        scene,
    })
}

fn validate_for_save(run: &Run) -> Result<()> {
    let m = &run.manifest;
    if run.samples.is_empty() {
        return Err(Error::NoSamples);
    }
    if m.passes != run.samples.len() || m.pass_files.len() != run.samples.len() {
        return Err(Error::Format("manifest pass count disagrees with samples".into()));
    }
    for (k, s) in run.samples.iter().enumerate() {
        if s.pass_index != k {
            return Err(Error::validation(
                format!("pass {k}"),
                format!("pass indices must be 0..M in order, found {}", s.pass_index),
            ));
        }
        for (i, det) in s.detections.iter().enumerate() {
            let context = format!("pass {k} detection {i}");
            if det.prob_mask.dims() != (m.width, m.height) {
                return Err(Error::DimensionMismatch {
                    expected: (m.width, m.height),
                    found: det.prob_mask.dims(),
                });
            }
            if det.classes.len() != m.num_classes() {
                return Err(Error::validation(
                    context,
                    format!("{} class entries, manifest has {}", det.classes.len(), m.num_classes()),
                ));
            }
            if !det.bbox.fits_frame(m.width, m.height) {
                return Err(Error::validation(context, "box outside frame"));
            }
        }
    }
    if let Some(scene) = &run.scene {
        if (scene.width, scene.height) != (m.width, m.height) {
            return Err(Error::DimensionMismatch {
                expected: (m.width, m.height),
                found: (scene.width, scene.height),
            });
        }
        for inst in &scene.instances {
            if inst.mask.dims() != (m.width, m.height) {
                return Err(Error::DimensionMismatch {
                    expected: (m.width, m.height),
                    found: inst.mask.dims(),
                });
            }
            if inst.label == 0 || inst.label >= m.num_classes() {
                return Err(Error::validation("ground truth", format!("label {} out of range", inst.label)));
            }
        }
    }
    Ok(())
}

/// Writes a run directory, creating it if needed.
pub fn save_run(run: &Run, dir: &Path) -> Result<()> {
    validate_for_save(run)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(MANIFEST_FILE), &run.manifest)?;
    for (sample, file) in run.samples.iter().zip(&run.manifest.pass_files) {
        let records: Vec<Record> = sample.detections.iter().map(Record::from_detection).collect();
        write_records(&dir.join(file), &records)?;
    }
    if let Some(scene) = &run.scene {
        save_ground_truth(&dir.join(GROUND_TRUTH_FILE), scene)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BinaryMask;

    fn tiny_run(mask_value: f32) -> Run {
        let mask = ProbMask::new(2, 2, vec![mask_value, 0.0, 0.0, 0.0]).unwrap();
        let det = Detection::new(
            BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            ClassDist::new(vec![0.25, 0.75]).unwrap(),
            mask,
        );
        let samples = vec![SampleSet {
            pass_index: 0,
            detections: vec![det],
        }];
        let gt = GroundTruthInstance::new(1, BinaryMask::from_fn(2, 2, |x, y| x == 0 && y == 0)).unwrap();
        let scene = Scene::new("img", 2, 2, vec![gt]).unwrap();
        Run::new("img", 2, 2, vec!["background".into(), "grasp".into()], samples, Some(scene))
    }

    #[test]
    fn record_layout_is_little_endian() {
        let rec = Record {
            bbox: [1.0, 2.0, 3.0, 4.0],
            classes: vec![0.5, 0.5],
            mask: vec![1.0],
        };
        let bytes = encode_records(std::slice::from_ref(&rec));
        assert_eq!(&bytes[..4], b"PSEG");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[1, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 10 + 7 * 4);
        assert_eq!(decode_records(&bytes, 2, 1, 1).unwrap(), vec![rec]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = encode_records(&[Record {
            bbox: [0.0; 4],
            classes: vec![1.0, 0.0],
            mask: vec![0.0; 4],
        }]);
        assert!(decode_records(&bytes[..bytes.len() - 1], 2, 2, 2).is_err());
        assert!(decode_records(b"XXXX\x01\x00\x00\x00\x00\x00", 2, 2, 2).is_err());
    }

    #[test]
    fn roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let run = tiny_run(0.3);
        save_run(&run, dir.path()).unwrap();
        assert_eq!(load_run(dir.path()).unwrap(), run);
    }

    #[test]
    fn value_out_of_range_names_pass_and_detection() {
        let dir = tempfile::tempdir().unwrap();
        let run = tiny_run(0.3);
        save_run(&run, dir.path()).unwrap();
        let mut rec = Record::from_detection(&run.samples[0].detections[0]);
        rec.mask[0] = 1.5;
        write_records(&dir.path().join("pass_0.bin"), &[rec]).unwrap();
        let err = load_run(dir.path()).unwrap_err().to_string();
        assert!(err.contains("pass 0 detection 0"), "{err}");
    }

    #[test]
    fn empty_run_reports_no_samples() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = tiny_run(0.3);
        run.manifest.passes = 0;
        run.manifest.pass_files.clear();
        write_json(&dir.path().join(MANIFEST_FILE), &run.manifest).unwrap();
        assert!(matches!(load_run(dir.path()), Err(Error::NoSamples)));
    }

    #[test]
    fn mismatched_scene_rejected_on_save() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = tiny_run(0.3);
        let gt = GroundTruthInstance::new(1, BinaryMask::from_fn(3, 2, |x, _| x == 0)).unwrap();
        run.scene = Some(Scene::new("img", 3, 2, vec![gt]).unwrap());
        assert!(matches!(save_run(&run, dir.path()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn unknown_manifest_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"{"image_id":"a","width":1,"height":1,"class_names":["bg","x"],"passes":1,"pass_files":["p"],"extra":1}"#,
        )
        .unwrap();
        assert!(matches!(load_run(dir.path()), Err(Error::Json { .. })));
    }
}
