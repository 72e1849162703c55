//! How the mask quality settles as more forward passes are fused: evaluate
//! the first M passes of each run for growing M.
//!
//! cargo run --release --example sample_sweep

use probseg::fusion::{bsas_cluster, FusionConfig};
use probseg::metrics::pmq_evaluate;
use probseg::simulator::{default_class_names, generate_scene, simulate_samples, NoiseConfig};

fn main() -> probseg::Result<()> {
    let ms = [1, 2, 4, 8, 16, 24, 32];
    let seeds = 10u64;
    let mut table = vec![Vec::new(); ms.len()];
    for seed in 0..seeds {
        let scene = generate_scene(64, 64, 3, 3, 500 + seed)?;
        let noise = NoiseConfig {
            existence_prob: 0.8,
            boundary_sigma: 1.0,
            soft_edge_width: 1.0,
            score_concentration: 10.0,
            ..NoiseConfig::zero(500 + seed)
        };
        let run = simulate_samples(&scene, 32, 3, &noise)?.into_run(default_class_names(3));
        for (slot, &m) in table.iter_mut().zip(&ms) {
            let sub = run.truncated(m);
            let obs = bsas_cluster(&sub.samples, &FusionConfig::default())?;
            slot.push(pmq_evaluate(&[(&obs, &scene)])?.0.pmq);
        }
    }
    println!("M    mean PMQ  std");
    for (values, m) in table.iter().zip(ms) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        println!("{m:<4} {mean:.4}    {sd:.4}");
    }
    Ok(())
}
