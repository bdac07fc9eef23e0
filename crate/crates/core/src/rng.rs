//! Stateless seed derivation.
//!
//! Every random draw in training is seeded from a tuple such as
//! `(seed, step, purpose, item)`, so any step can be replayed without
//! carrying generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a tuple of integers into one seed.
pub fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x51_7CC1_B727_220A, |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}

/// Purpose tags keep streams for different uses apart.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const CROP: u64 = 3;
    pub const NEGATIVES: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const EMBEDDER: u64 = 6;
    pub const CORPUS: u64 = 7;
}
