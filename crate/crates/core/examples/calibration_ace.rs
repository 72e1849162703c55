//! Average calibration error with its reliability table, for a calibrated
//! and an inverted confidence source.
//!
//! cargo run --example calibration_ace

use probseg::metrics::ace;
use probseg::simulator::{simulate_calibration, CalibrationProfile};

fn main() -> probseg::Result<()> {
    for profile in [CalibrationProfile::Calibrated, CalibrationProfile::Inverted] {
        let samples = simulate_calibration(10_000, profile, 3);
        let report = ace(&samples, 10)?.expect("samples present");
        println!("{profile:?}: ACE {:.4}", report.ace);
        for bin in &report.bins {
            if let (Some(c), Some(a)) = (bin.confidence, bin.accuracy) {
                println!("  [{:.1}, {:.1})  n={:<5} confidence {c:.3} accuracy {a:.3}", bin.lower, bin.upper, bin.count);
            }
        }
    }
    Ok(())
}
