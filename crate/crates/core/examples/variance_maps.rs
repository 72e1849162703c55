//! Split per-pixel predictive variance into aleatoric and epistemic parts and
//! write them as PGM images (white = variance 0.25). Also prints the class
//! covariance decomposition of one observation.
//!
//! cargo run --example variance_maps -- [out_dir]

use std::path::PathBuf;

use probseg::fusion::{bsas_cluster, FusionConfig};
use probseg::simulator::{generate_scene, simulate_samples, NoiseConfig};
use probseg::uncertainty::{class_covariance, variance_gray, variance_maps, write_pgm};

fn main() -> probseg::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("probseg-variance-maps"));
    std::fs::create_dir_all(&out).map_err(|e| probseg::Error::Config(e.to_string()))?;

    let scene = generate_scene(64, 64, 2, 3, 11)?;
    // soft edges feed the aleatoric part, contour jitter the epistemic part
    let noise = NoiseConfig {
        boundary_sigma: 1.0,
        soft_edge_width: 2.0,
        score_concentration: 6.0,
        ..NoiseConfig::zero(11)
    };
    let sim = simulate_samples(&scene, 32, 3, &noise)?;
    let observations = bsas_cluster(&sim.samples, &FusionConfig::default())?;

    for (i, obs) in observations.iter().enumerate() {
        let maps = variance_maps(obs)?;
        let n = maps.total.iter().filter(|&&t| t > 0.0).count() as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        println!(
            "observation {i}: {n} uncertain pixels, mean aleatoric {:.4}, mean epistemic {:.4}",
            mean(&maps.aleatoric),
            mean(&maps.epistemic)
        );
        for (name, layer) in [("aleatoric", &maps.aleatoric), ("epistemic", &maps.epistemic)] {
            let gray: Vec<u8> = layer.iter().map(|&v| variance_gray(v)).collect();
            write_pgm(&out.join(format!("{name}_{i}.pgm")), maps.width, maps.height, &gray)?;
        }
    }

    if let Some(obs) = observations.first() {
        let cov = class_covariance(obs)?;
        println!("class aleatoric covariance:{:.4}", cov.aleatoric);
        println!("class epistemic covariance:{:.4}", cov.epistemic);
    }
    println!("images in {}", out.display());
    Ok(())
}
