//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! keyed by a root seed plus a path of integers naming its purpose, so results
//! never depend on call order across independent consumers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, p| splitmix64(acc ^ splitmix64(*p)))
}

pub fn rng_for(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}

/// Stable 64-bit hash of an integer id; used for split assignment.
pub fn hash_id(id: u64) -> u64 {
    splitmix64(id ^ 0x5eed_5eed_5eed_5eed)
}

// purpose tags
pub const SCENE: u64 = 1;
pub const CAMERA_START: u64 = 2;
pub const TRAJECTORY: u64 = 3;
pub const SPEED: u64 = 4;
pub const KIND: u64 = 5;
pub const INIT: u64 = 6;
pub const BATCH: u64 = 7;
pub const SAMPLER: u64 = 8;
pub const FOCAL: u64 = 9;
