//! Sparsification curves: remove the most uncertain pixels first and watch
//! the Brier score of the rest, compared with removing by true error.
//!
//! cargo run --example sparsification_ause

use probseg::fusion::{bsas_cluster, FusionConfig};
use probseg::metrics::{ause::scene_pixels, sparsification, sparsification_csv};
use probseg::simulator::{generate_scene, simulate_samples, NoiseConfig};
use probseg::uncertainty::variance_maps;

fn main() -> probseg::Result<()> {
    let scene = generate_scene(64, 64, 3, 3, 23)?;
    let noise = NoiseConfig {
        existence_prob: 0.9,
        boundary_sigma: 1.5,
        soft_edge_width: 1.5,
        ..NoiseConfig::zero(23)
    };
    let sim = simulate_samples(&scene, 24, 3, &noise)?;
    let observations = bsas_cluster(&sim.samples, &FusionConfig::default())?;
    let maps = observations.iter().map(variance_maps).collect::<probseg::Result<Vec<_>>>()?;
    let pixels = scene_pixels(&observations, &maps, &scene)?;

    let curve = sparsification(&pixels, 20)?;
    print!("{}", sparsification_csv(&curve));
    println!("{} pixels, AUSE {:.4}", pixels.len(), curve.ause);
    Ok(())
}
