//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`SimRng`], a PCG32
//! (XSH-RR 64/32) generator whose state and stream selector are expanded from
//! a single 64-bit seed with SplitMix64. The bounded-integer and unit-float
//! conversions are implemented here rather than borrowed from a general
//! purpose distribution library so that the exact draw sequence is pinned by
//! this file alone.

use rand_core::RngCore;
use rand_pcg::Pcg32;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output step applied to `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a parent seed with a sequence of indices into a child seed.
///
/// `derive_seed(m, &[a, b])` is stable across platforms and releases; sweeps
/// rely on it to reproduce per-run seeds without storing them.
pub fn derive_seed(parent: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(parent), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: Pcg32,
}

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        let state = splitmix64(seed);
        let stream = splitmix64(state);
        Self {
            inner: Pcg32::new(state, stream),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    /// High word first.
    pub fn next_u64(&mut self) -> u64 {
        let hi = u64::from(self.next_u32());
        let lo = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    /// Uniform integer in `[0, n)` by threshold rejection on 32-bit outputs.
    pub fn below(&mut self, n: u32) -> u32 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u32();
            if r >= threshold {
                return r % n;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 bits of precision.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform float in `[lo, hi]`; `lo == hi` returns `lo` exactly.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.unit_f64();
        if lo == hi {
            lo
        } else {
            lo + (hi - lo) * u
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below((i + 1) as u32) as usize;
            items.swap(i, j);
        }
    }
}
