//! Deterministic seed splitting.
//!
//! A master seed and a key path such as `(realization, t, gate position)` are
//! folded through SplitMix64 into the seed of an independent ChaCha8 stream.
//! Streams depend only on their key path, never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(master: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, keys))
}

/// Stream domains keep substreams for different purposes disjoint.
pub mod domain {
    pub const CIRCUIT: u64 = 1;
    pub const INITIAL_STATE: u64 = 2;
    pub const TARGET_MC: u64 = 3;
    pub const THEOREM1: u64 = 4;
    pub const REPLICA: u64 = 5;
}

/// Per-gate streams for one circuit realization.
#[derive(Clone, Copy, Debug)]
pub struct CircuitStreams {
    master: u64,
    realization: u64,
}

impl CircuitStreams {
    pub fn new(master: u64, realization: u64) -> Self {
        Self { master, realization }
    }

    pub fn gate(&self, t: u64, position: u64) -> ChaCha8Rng {
        stream(self.master, &[domain::CIRCUIT, self.realization, t, position])
    }
}
