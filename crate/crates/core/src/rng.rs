//! Keyed random substreams so every ray, patch and step draws from its own
//! reproducible generator regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a seed and a key path into one 64-bit value.
pub fn key(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn substream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(seed, parts))
}

/// Stream purposes, used as the first key component.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const RAY: u64 = 3;
    pub const SS: u64 = 4;
    pub const UNSEEN: u64 = 5;
    pub const PD: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const EVAL: u64 = 8;
}
