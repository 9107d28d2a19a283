//! Reproducible random-number streams.
//!
//! A [`RngStream`] is a counter-based ChaCha8 generator addressed by
//! `(master_seed, stream_index)`. Streams with distinct indices are
//! statistically independent, so a parallel experiment can hand stream `r`
//! to replication `r` and produce bit-identical output for any worker count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// One independent, reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    chacha: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        // Expand the 64-bit master seed into the 256-bit ChaCha key with
        // SplitMix64 so seeding does not depend on rand's internal expansion.
        let mut state = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut chacha = ChaCha8Rng::from_seed(key);
        chacha.set_stream(stream_index);
        RngStream { master_seed, stream_index, chacha }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// One standard-normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.chacha.sample(StandardNormal)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for slot in out.iter_mut() {
            *slot = self.chacha.sample(StandardNormal);
        }
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.chacha.random_range(lo..hi)
    }

    /// Uniform integer on `[lo, hi]`.
    pub fn uniform_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.chacha.random_range(lo..=hi)
    }

    /// Draws `count` distinct indices from `0..population`, returned in
    /// ascending order.
    pub fn sample_indices(&mut self, population: usize, count: usize) -> Vec<usize> {
        let mut picked = rand::seq::index::sample(&mut self.chacha, population, count).into_vec();
        picked.sort_unstable();
        picked
    }

    pub fn next_u64(&mut self) -> u64 {
        self.chacha.random()
    }
}

/// Derives a sub-seed from a master seed and a purpose tag, so auxiliary
/// draws (covariance construction, null calibration) never share a stream
/// with replication draws.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    let mut state = master_seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut state)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
