//! Match observations to ground truth and break the probability-based mask
//! quality down into its spatial and label parts.
//!
//! cargo run --example evaluate_pmq

use probseg::fusion::{bsas_cluster, FusionConfig};
use probseg::metrics::{match_scene, pmq_evaluate};
use probseg::simulator::{generate_scene, simulate_samples, NoiseConfig};

fn main() -> probseg::Result<()> {
    let scene = generate_scene(64, 64, 4, 3, 17)?;
    let noise = NoiseConfig {
        existence_prob: 0.85,
        boundary_sigma: 1.0,
        label_flip_prob: 0.1,
        score_concentration: 10.0,
        clutter_rate: 0.3,
        ..NoiseConfig::zero(17)
    };
    let sim = simulate_samples(&scene, 24, 3, &noise)?;
    let observations = bsas_cluster(&sim.samples, &FusionConfig::default())?;

    let matches = match_scene(&observations, &scene)?;
    for a in &matches.assignments {
        let q = a.quality;
        println!(
            "observation {} -> instance {}: pPMQ {:.4} (Q_s {:.4} = FG {:.4} x BG {:.4}, Q_l {:.4})",
            a.observation, a.ground_truth, q.ppmq, q.q_s, q.fg, q.bg, q.q_l
        );
    }
    println!("false positives {:?}, false negatives {:?}", matches.false_positives, matches.false_negatives);

    let (summary, _) = pmq_evaluate(&[(&observations, &scene)])?;
    println!(
        "PMQ {:.4} over TP {} FP {} FN {}; mean pPMQ {:.4}",
        summary.pmq, summary.tp, summary.fp, summary.fn_, summary.ppmq
    );
    Ok(())
}
