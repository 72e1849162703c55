//! COCO-style run-length encoding of ground-truth masks, in both the plain
//! and the compressed string form.
//!
//! cargo run --example rle_ground_truth

use probseg::rle::{compress_counts, decode, encode, Rle, RleCounts};
use probseg::simulator::generate_scene;

fn main() -> probseg::Result<()> {
    let scene = generate_scene(40, 30, 2, 2, 9)?;
    for (i, inst) in scene.instances.iter().enumerate() {
        let rle = encode(&inst.mask);
        let RleCounts::Runs(runs) = &rle.counts else {
            unreachable!("encode emits plain runs")
        };
        let compressed = Rle {
            size: rle.size,
            counts: RleCounts::Compressed(compress_counts(runs)),
        };
        assert_eq!(decode(&compressed)?, inst.mask);
        println!(
            "instance {i} (label {}): {} px, {} runs, json {}",
            inst.label,
            inst.mask.count(),
            runs.len(),
            serde_json::to_string(&compressed).expect("serializable")
        );
    }
    Ok(())
}
