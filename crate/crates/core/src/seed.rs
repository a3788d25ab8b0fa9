//! Seed derivation. Every randomized stage draws from its own ChaCha stream
//! keyed by `(master seed, stage tag)` so stages never share RNG state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a stage tag into an independent child seed.
pub fn derive(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) mod tags {
    pub const HOLDOUT: u64 = 1;
    pub const FOLDS: u64 = 2;
    pub const BACKGROUND: u64 = 4;
    pub const CLUSTER: u64 = 5;
    pub const NET: u64 = 6;
    pub const EARLY_STOP: u64 = 7;
    pub const RANDOM_GATE: u64 = 8;
    pub const SHUFFLE: u64 = 9;
}
