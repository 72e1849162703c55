//! Generate a synthetic scene, simulate noisy forward passes and write a run
//! directory that the `probseg` CLI (or any other consumer) can load.
//!
//! cargo run --example simulate_run -- [out_dir]

use std::path::PathBuf;

use probseg::format::{load_run, save_run};
use probseg::simulator::{default_class_names, generate_scene, simulate_samples, NoiseConfig, Provenance};

fn main() -> probseg::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("probseg-simulate-run"));

    let scene = generate_scene(96, 72, 4, 3, 42)?;
    let noise = NoiseConfig {
        existence_prob: 0.9,
        boundary_sigma: 1.0,
        soft_edge_width: 1.5,
        label_flip_prob: 0.05,
        score_concentration: 12.0,
        clutter_rate: 0.5,
        ..NoiseConfig::zero(42)
    };
    let sim = simulate_samples(&scene, 24, 3, &noise)?;

    let clutter: usize = sim
        .provenance
        .iter()
        .flatten()
        .filter(|p| **p == Provenance::Clutter)
        .count();
    println!(
        "{} instances, {} passes, {} detections ({clutter} clutter)",
        scene.instances.len(),
        sim.samples.len(),
        sim.samples.iter().map(|s| s.detections.len()).sum::<usize>()
    );

    let run = sim.into_run(default_class_names(3));
    save_run(&run, &out)?;
    let back = load_run(&out)?;
    assert_eq!(back, run);
    println!("wrote and re-read {}", out.display());
    Ok(())
}
