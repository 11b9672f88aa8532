//! Explicit, splittable random-number streams.
//!
//! Every randomized operation in this crate takes a [`Draw`] rather than
//! touching a thread-local or global generator. A `Draw` wraps a
//! counter-based ChaCha stream together with the key it was derived from,
//! so independent substreams can be split off for parallel work (one per
//! patient, frame, or sample) without any coordination between workers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// SplitMix64 mixing step, used to derive substream keys.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded random stream with cheap, collision-resistant splitting.
///
/// Substreams derived with different tags are statistically independent;
/// the same `(seed, tag path)` always reproduces the same stream, on every
/// platform.
#[derive(Debug, Clone)]
pub struct Draw {
    key: u64,
    rng: ChaCha12Rng,
}

impl Draw {
    /// Root stream for a 64-bit seed.
    pub fn from_seed(seed: u64) -> Self {
        let key = splitmix64(seed);
        Draw {
            key,
            rng: ChaCha12Rng::seed_from_u64(key),
        }
    }

    /// Derive an independent substream keyed by `tag`.
    ///
    /// Does not consume state from `self`: splitting is a pure function of
    /// the parent key, so workers can split in any order.
    pub fn substream(&self, tag: u64) -> Draw {
        let key = splitmix64(self.key ^ splitmix64(tag).rotate_left(17));
        Draw {
            key,
            rng: ChaCha12Rng::seed_from_u64(key),
        }
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        let u: f64 = rand::Rng::random(&mut self.rng);
        lo + u * (hi - lo)
    }

    /// Uniform integer from `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        rand::Rng::random_range(&mut self.rng, 0..n)
    }

    /// Biased coin: true with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        let u: f64 = rand::Rng::random(&mut self.rng);
        u < p
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        rand::Rng::sample(&mut self.rng, rand_distr::StandardNormal)
    }
}

impl RngCore for Draw {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}
