//! COCO-style run-length encoding of binary masks.
//!
//! Runs are counted in column-major order starting with a run of zeros,
//! and `size` is `[height, width]`, matching pycocotools. Both the plain
//! integer-array form and the compressed string form are understood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: RleCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Runs(Vec<u64>),
    Compressed(String),
}

pub fn encode(mask: &BinaryMask) -> Rle {
    let (w, h) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let bit = mask.get(x, y);
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [h, w],
        counts: RleCounts::Runs(counts),
    }
}

pub fn decode(rle: &Rle) -> Result<BinaryMask> {
    let [h, w] = rle.size;
    let runs = match &rle.counts {
        RleCounts::Runs(r) => r.clone(),
        RleCounts::Compressed(s) => decompress_counts(s)?,
    };
    let total: u64 = runs.iter().sum();
    if total != (w * h) as u64 {
        return Err(Error::Format(format!(
            "rle runs cover {total} pixels, mask has {}",
            w * h
        )));
    }
    let mut mask = BinaryMask::empty(w, h);
    let mut pos = 0usize;
    let mut value = false;
    for &run in &runs {
        for _ in 0..run {
            if value {
                mask.set(pos / h, pos % h, true);
            }
            pos += 1;
        }
        value = !value;
    }
    Ok(mask)
}

/// Compressed string form used by pycocotools (`rleToString`).
pub fn compress_counts(counts: &[u64]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut ch = (x & 0x1f) as u8;
            x >>= 5;
            let more = if ch & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                ch |= 0x20;
            }
            out.push((ch + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}

/// Inverse of [`compress_counts`] (`rleFrString`).
pub fn decompress_counts(s: &str) -> Result<Vec<u64>> {
    let bytes = s.as_bytes();
    let mut counts: Vec<u64> = Vec::new();
    let mut p = 0usize;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0u32;
        loop {
            let b = bytes[p];
            if !(48..48 + 64).contains(&b) {
                return Err(Error::Format(format!("invalid rle character {:?}", b as char)));
            }
            let c = i64::from(b - 48);
            if k >= 12 {
                return Err(Error::Format("rle count overflows".into()));
            }
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
            if p >= bytes.len() {
                return Err(Error::Format("truncated rle string".into()));
            }
        }
        let m = counts.len();
        if m > 2 {
            x += counts[m - 2] as i64;
        }
        if x < 0 {
            return Err(Error::Format("negative rle run".into()));
        }
        counts.push(x as u64);
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn column_major_runs() {
        // 2x2 with only the top-right pixel set: column-major order is
        // (0,0) (0,1) (1,0) (1,1) → 0 0 1 0
        let mut m = BinaryMask::empty(2, 2);
        m.set(1, 0, true);
        let rle = encode(&m);
        assert_eq!(rle.size, [2, 2]);
        assert_eq!(rle.counts, RleCounts::Runs(vec![2, 1, 1]));
        assert_eq!(decode(&rle).unwrap(), m);
    }

    #[test]
    fn leading_foreground_has_zero_first_run() {
        let m = BinaryMask::from_fn(2, 1, |_, _| true);
        assert_eq!(encode(&m).counts, RleCounts::Runs(vec![0, 2]));
    }

    #[test]
    fn known_compressed_string() {
        // 40 = 0b1_01000 spills into a continuation character; the fourth
        // run is delta-coded against the second
        let s = compress_counts(&[6, 1, 40, 3]);
        assert_eq!(s, "61X12");
        assert_eq!(decompress_counts(&s).unwrap(), vec![6, 1, 40, 3]);
    }

    #[test]
    fn rejects_wrong_total() {
        let rle = Rle {
            size: [2, 2],
            counts: RleCounts::Runs(vec![1, 1]),
        };
        assert!(decode(&rle).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_both_forms(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let mut state = seed;
            let m = BinaryMask::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 61) & 1 == 1
            });
            let rle = encode(&m);
            prop_assert_eq!(decode(&rle).unwrap(), m.clone());
            let RleCounts::Runs(runs) = &rle.counts else { unreachable!() };
            let compressed = Rle { size: rle.size, counts: RleCounts::Compressed(compress_counts(runs)) };
            prop_assert_eq!(decode(&compressed).unwrap(), m);
        }
    }
}
