//! Cluster detections from many passes into observations and inspect the
//! fused box, class distribution and heatmap of each one.
//!
//! cargo run --example fuse_observations

use probseg::fusion::{bsas_cluster, bsas_groups, FusionConfig};
use probseg::simulator::{generate_scene, simulate_samples, NoiseConfig};

fn main() -> probseg::Result<()> {
    let scene = generate_scene(64, 64, 3, 3, 5)?;
    let noise = NoiseConfig {
        existence_prob: 0.8,
        boundary_sigma: 1.2,
        score_concentration: 8.0,
        clutter_rate: 1.0,
        ..NoiseConfig::zero(5)
    };
    let sim = simulate_samples(&scene, 16, 3, &noise)?;
    let cfg = FusionConfig::default();

    let groups = bsas_groups(&sim.samples, &cfg)?;
    let singles = groups.iter().filter(|g| g.len() < cfg.min_detections).count();
    println!("{} clusters, {singles} dropped below {} members", groups.len(), cfg.min_detections);

    for (i, obs) in bsas_cluster(&sim.samples, &cfg)?.iter().enumerate() {
        let b = &obs.mean_box;
        let peak = obs.heatmap.values().iter().cloned().fold(0.0f32, f32::max);
        println!(
            "observation {i}: label {} confidence {:.3} members {} box [{:.1}, {:.1}, {:.1}, {:.1}] support {} px, heatmap peak {peak:.3}",
            obs.label,
            obs.confidence(),
            obs.len(),
            b.x1,
            b.y1,
            b.x2,
            b.y2,
            obs.support.count()
        );
    }
    Ok(())
}
