// SPDX-License-Identifier: MIT OR Apache-2.0
//! Per-purpose random streams derived from a single seed.
//!
//! Every consumer gets a ChaCha8 key built from `(seed, purpose)` and a
//! stream number, so results do not depend on scheduling or thread count.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const NOISE: u64 = 1;
pub const CONFIG: u64 = 2;
pub const WALK: u64 = 3;
pub const WBS: u64 = 4;
pub const EMULATION: u64 = 5;
pub const REPLICATE: u64 = 6;
pub const BENCH: u64 = 7;

pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Seed for the `index`-th replicate of an experiment.
pub fn child_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, purpose, index).next_u64()
}
