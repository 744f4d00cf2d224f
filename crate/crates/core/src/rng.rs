//! Seedable random streams.
//!
//! Two generators are used:
//!
//! * dataset generation uses ChaCha8 seeded from the 64-bit run seed, with
//!   one ChaCha stream per instance index (`set_stream(index)`), so instance
//!   `i` of a dataset does not depend on how many instances precede it;
//! * harness-internal randomness (tour perturbations) uses SplitMix64, which
//!   is small enough to be mirrored bit-exactly by an external worker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Child stream for instance `index` of a dataset generated from `seed`.
pub fn instance_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Seed for a labelled sub-stream, e.g. `(iteration, candidate, task)`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(SplitMix64::new(seed).next_u64(), |acc, &p| SplitMix64::new(acc ^ p.wrapping_mul(GOLDEN_GAMMA)).next_u64())
}

/// SplitMix64 (Steele, Lea & Flood). `next_u64` is the reference sequence.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Stream for a harness run on instance `index`: the base seed is mixed
    /// with the index through one SplitMix64 step.
    pub fn for_instance(seed: u64, index: u64) -> Self {
        let mut mixer = SplitMix64::new(seed ^ index.wrapping_mul(GOLDEN_GAMMA));
        Self::new(mixer.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `0..bound` by 128-bit multiply-shift. `bound > 0`.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }
}
