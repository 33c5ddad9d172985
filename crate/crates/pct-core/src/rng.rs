//! Deterministic, splittable random number generation.
//!
//! Every source of randomness in this crate is a [`Rng`] constructed from a
//! 64-bit seed plus a 64-bit stream id. Distinct `(seed, stream)` pairs give
//! statistically independent sequences, so parallel work only needs to agree
//! on seed assignment — there is no shared RNG state anywhere.
//!
//! The generator is the splitmix64 counter sequence: tiny, portable, and
//! bit-reproducible across platforms.

use crate::fmath;

/// Stream-id tags so that one seed can serve several independent roles
/// (e.g. weight init and shuffling for the same member seed) without the
/// streams colliding.
pub mod stream {
    /// Weight initialization for layer `l`.
    pub fn init_layer(l: usize) -> u64 {
        0x1000_0000_0000_0000 | l as u64
    }
    /// Per-epoch shuffle of the training set.
    pub fn shuffle_epoch(e: usize) -> u64 {
        0x2000_0000_0000_0000 | e as u64
    }
    /// Class-center placement in synthetic data generation.
    pub const DATA_CENTERS: u64 = 0x3000_0000_0000_0000;
    /// Per-class sample generation.
    pub fn data_class(c: usize) -> u64 {
        0x4000_0000_0000_0000 | c as u64
    }
    /// Per-class selection when splitting a dataset.
    pub fn split_class(c: usize) -> u64 {
        0x5000_0000_0000_0000 | c as u64
    }
    /// Multivariate-normal sampling.
    pub const MVN: u64 = 0x6000_0000_0000_0000;
    /// One displacement trial.
    pub fn trial(t: usize) -> u64 {
        0x7000_0000_0000_0000 | t as u64
    }
    /// Second draw inside a heterogeneous displacement trial.
    pub fn trial_b(t: usize) -> u64 {
        0x7800_0000_0000_0000 | t as u64
    }
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Splitmix64 generator seeded from `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    spare_gaussian: Option<f64>,
}

impl Rng {
    /// Creates an independent stream for the given seed.
    pub fn new(seed: u64, stream: u64) -> Self {
        let state = mix64(mix64(seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(mix64(stream)));
        Rng { state, spare_gaussian: None }
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`. `bound` must be nonzero.
    pub fn next_below(&mut self, bound: usize) -> usize {
        (self.next_u64() % bound as u64) as usize
    }

    /// Standard normal deviate (Marsaglia polar method, pair-cached).
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(g) = self.spare_gaussian.take() {
            return g;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = fmath::sqrt(-2.0 * fmath::ln(s) / s);
                self.spare_gaussian = Some(v * factor);
                return u * factor;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}
