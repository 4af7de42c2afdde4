//! Seed plumbing. Every random draw in the simulator comes from a
//! `ChaCha8Rng` whose seed is derived from the experiment seed plus a path
//! of integer tags, so sub-streams never overlap and runs are reproducible.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as SimRng;

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a list of tags.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive(seed, tags))
}

/// Stream tags used by the orchestrator.
pub mod tag {
    pub const DATA: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const KEYS: u64 = 3;
    pub const SELECT: u64 = 4;
    pub const VALIDATORS: u64 = 5;
    pub const TRAIN: u64 = 6;
    pub const ATTACK: u64 = 7;
    pub const QUANTIZE: u64 = 8;
    pub const ENCRYPT: u64 = 9;
    pub const WGAN: u64 = 10;
    pub const INIT: u64 = 11;
    pub const PROBE: u64 = 12;
    pub const SKEW: u64 = 13;
}
