//! Fused observations and variance maps stored next to a run.
//!
//! ```text
//! run/
//!   observations.json    fusion settings, member references and summaries
//!   observation_<i>.bin  record 0: mean mask, record 1: heatmap
//!   variance_<i>.bin     records: aleatoric, epistemic, total
//! ```
//!
//! Every record carries the observation's mean box and class distribution,
//! so the files decode with the pass-file reader. Loading goes back through
//! the member references, so evaluation always sees freshly fused data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{read_json, read_records, write_json, write_records, Record, Run};
use crate::fusion::{fuse, FusionConfig, Member, Observation};
use crate::uncertainty::{variance_maps, VarianceMaps};

pub const OBSERVATIONS_FILE: &str = "observations.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberRef {
    pub pass: usize,
    pub detection: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationEntry {
    pub label: usize,
    pub confidence: f64,
    pub members: Vec<MemberRef>,
    pub mean_box: [f64; 4],
    pub mean_classes: Vec<f64>,
    pub observation_file: String,
    pub variance_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsFile {
    pub image_id: String,
    pub passes: usize,
    pub fusion: FusionConfig,
    pub observations: Vec<ObservationEntry>,
}

/// Layers that can be read back from the per-observation files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Mean,
    Heatmap,
    Aleatoric,
    Epistemic,
    Total,
}

pub fn observation_file_name(i: usize) -> String {
    format!("observation_{i}.bin")
}

pub fn variance_file_name(i: usize) -> String {
    format!("variance_{i}.bin")
}

fn record(obs: &Observation, mask: Vec<f32>) -> Record {
    let b = &obs.mean_box;
    Record {
        bbox: [b.x1 as f32, b.y1 as f32, b.x2 as f32, b.y2 as f32],
        classes: obs.mean_classes.probs().iter().map(|&p| p as f32).collect(),
        mask,
    }
}

fn to_f32(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}

/// Writes observations and their variance maps into `dir`, removing stale
/// per-observation files from an earlier, larger fusion.
pub fn save_observations(dir: &Path, run: &Run, observations: &[Observation], cfg: &FusionConfig) -> Result<()> {
    let maps: Vec<VarianceMaps> = observations.iter().map(variance_maps).collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(observations.len());
    for (i, (obs, maps)) in observations.iter().zip(&maps).enumerate() {
        let observation_file = observation_file_name(i);
        let variance_file = variance_file_name(i);
        write_records(
            &dir.join(&observation_file),
            &[
                record(obs, obs.mean_mask.values().to_vec()),
                record(obs, obs.heatmap.values().to_vec()),
            ],
        )?;
        write_records(
            &dir.join(&variance_file),
            &[
                record(obs, to_f32(&maps.aleatoric)),
                record(obs, to_f32(&maps.epistemic)),
                record(obs, to_f32(&maps.total)),
            ],
        )?;
        let b = &obs.mean_box;
        entries.push(ObservationEntry {
            label: obs.label,
            confidence: obs.confidence(),
            members: obs
                .members
                .iter()
                .map(|m| MemberRef {
                    pass: m.pass_index,
                    detection: m.detection_index,
                })
                .collect(),
            mean_box: [b.x1, b.y1, b.x2, b.y2],
            mean_classes: obs.mean_classes.probs().to_vec(),
            observation_file,
            variance_file,
        });
    }
    let mut stale = observations.len();
    while dir.join(observation_file_name(stale)).exists() || dir.join(variance_file_name(stale)).exists() {
        for name in [observation_file_name(stale), variance_file_name(stale)] {
            let path = dir.join(name);
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        stale += 1;
    }
    let file = ObservationsFile {
        image_id: run.manifest.image_id.clone(),
        passes: run.passes(),
        fusion: *cfg,
        observations: entries,
    };
    write_json(&dir.join(OBSERVATIONS_FILE), &file)
}

pub fn read_observations_file(dir: &Path) -> Result<ObservationsFile> {
    let path = dir.join(OBSERVATIONS_FILE);
    if !path.exists() {
        return Err(Error::validation(
            path.display().to_string(),
            "observations missing; run fuse first",
        ));
    }
    let file: ObservationsFile = read_json(&path)?;
    file.fusion.validate()?;
    Ok(file)
}

/// Rebuilds observations from the member references in `observations.json`.
pub fn load_observations(dir: &Path, run: &Run) -> Result<(FusionConfig, Vec<Observation>)> {
    let file = read_observations_file(dir)?;
    if file.passes != run.passes() {
        return Err(Error::validation(
            OBSERVATIONS_FILE,
            format!("fused over {} passes but the run has {}", file.passes, run.passes()),
        ));
    }
    let mut observations = Vec::with_capacity(file.observations.len());
    for (i, entry) in file.observations.iter().enumerate() {
        let members = entry
            .members
            .iter()
            .map(|r| {
                let det = run
                    .samples
                    .get(r.pass)
                    .and_then(|s| s.detections.get(r.detection))
                    .ok_or_else(|| {
                        Error::validation(
                            format!("observation {i}"),
                            format!("no detection {} in pass {}", r.detection, r.pass),
                        )
                    })?;
                Ok(Member {
                    pass_index: r.pass,
                    detection_index: r.detection,
                    detection: det.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        observations.push(fuse(members, file.passes, &file.fusion)?);
    }
    Ok((file.fusion, observations))
}

/// Reads one full-frame layer of observation `index` as stored on disk.
pub fn load_layer(dir: &Path, entry: &ObservationEntry, layer: Layer, num_classes: usize, width: usize, height: usize) -> Result<Vec<f32>> {
    let (file, slot) = match layer {
        Layer::Mean => (&entry.observation_file, 0),
        Layer::Heatmap => (&entry.observation_file, 1),
        Layer::Aleatoric => (&entry.variance_file, 0),
        Layer::Epistemic => (&entry.variance_file, 1),
        Layer::Total => (&entry.variance_file, 2),
    };
    let path = dir.join(file);
    if !path.exists() {
        return Err(Error::validation(path.display().to_string(), "observation file missing; run fuse first"));
    }
    let mut records = read_records(&path, num_classes, width, height)?;
    if slot >= records.len() {
        return Err(Error::Format(format!("{}: expected at least {} records", path.display(), slot + 1)));
    }
    Ok(records.swap_remove(slot).mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::save_run;
    use crate::fusion::bsas_cluster;
    use crate::simulator::{default_class_names, generate_scene, simulate_samples, NoiseConfig};

    #[test]
    fn round_trip_through_member_refs() {
        let dir = tempfile::tempdir().unwrap();
        let scene = generate_scene(32, 32, 2, 2, 4).unwrap();
        let noise = NoiseConfig {
            boundary_sigma: 0.8,
            soft_edge_width: 1.0,
            ..NoiseConfig::zero(4)
        };
        let run = simulate_samples(&scene, 6, 2, &noise).unwrap().into_run(default_class_names(2));
        save_run(&run, dir.path()).unwrap();
        let cfg = FusionConfig::default();
        let obs = bsas_cluster(&run.samples, &cfg).unwrap();
        save_observations(dir.path(), &run, &obs, &cfg).unwrap();
        let (cfg2, back) = load_observations(dir.path(), &run).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(back, obs);

        let file = read_observations_file(dir.path()).unwrap();
        let heat = load_layer(dir.path(), &file.observations[0], Layer::Heatmap, 3, 32, 32).unwrap();
        assert_eq!(heat, obs[0].heatmap.values());
        let ale = load_layer(dir.path(), &file.observations[0], Layer::Aleatoric, 3, 32, 32).unwrap();
        let maps = variance_maps(&obs[0]).unwrap();
        assert_eq!(ale, to_f32(&maps.aleatoric));
    }

    #[test]
    fn stale_files_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let scene = generate_scene(24, 24, 2, 1, 1).unwrap();
        let run = simulate_samples(&scene, 3, 1, &NoiseConfig::zero(1)).unwrap().into_run(default_class_names(1));
        let cfg = FusionConfig::default();
        let obs = bsas_cluster(&run.samples, &cfg).unwrap();
        assert_eq!(obs.len(), 2);
        save_observations(dir.path(), &run, &obs, &cfg).unwrap();
        save_observations(dir.path(), &run, &obs[..1], &cfg).unwrap();
        assert!(dir.path().join("observation_0.bin").exists());
        assert!(!dir.path().join("observation_1.bin").exists());
        assert!(!dir.path().join("variance_1.bin").exists());
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_observations_file(dir.path()).is_err());
    }
}
