//! The weighted F-measure penalizes false positives by how far they sit from
//! the object and smooths foreground errors over their neighbourhood.
//!
//! cargo run --example weighted_f_measure

use probseg::metrics::{weighted_fbw, weighted_fbw_with, AlphaVariant, FbwParams};
use probseg::{BinaryMask, ProbMask};

fn square(x0: usize, y0: usize, size: usize) -> BinaryMask {
    BinaryMask::from_fn(64, 64, |x, y| x >= x0 && x < x0 + size && y >= y0 && y < y0 + size)
}

fn with_extra(gt: &BinaryMask, extra: &BinaryMask) -> ProbMask {
    let mut m = gt.clone();
    m.union_with(extra);
    ProbMask::from_binary(&m)
}

fn main() -> probseg::Result<()> {
    let gt = square(10, 10, 16);
    println!("exact prediction: {:.4}", weighted_fbw(&gt, &ProbMask::from_binary(&gt))?);

    for offset in [0, 2, 5, 10, 20, 30] {
        let blob = square(26 + offset, 16, 4);
        println!("4x4 false positive {offset:>2} px from the edge: {:.4}", weighted_fbw(&gt, &with_extra(&gt, &blob))?);
    }

    // a soft prediction: right shape, hedged probabilities
    let soft = ProbMask::new(64, 64, gt.bits().iter().map(|&b| if b { 0.8 } else { 0.05 }).collect())?;
    println!("hedged prediction: {:.4}", weighted_fbw(&gt, &soft)?);
    // with the literal constant the distance weight 2 - exp(0.1 d) turns
    // negative beyond d = 6.9, so faint far-away mass can drive F below 0
    let literal = FbwParams {
        alpha: AlphaVariant::Literal,
        ..FbwParams::default()
    };
    println!("hedged prediction, literal alpha: {:.4}", weighted_fbw_with(&gt, &soft, &literal)?);
    Ok(())
}
