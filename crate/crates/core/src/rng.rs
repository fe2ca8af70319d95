//! Reproducible random streams.
//!
//! Every random draw made on behalf of a particle comes from a stream keyed by
//! `(master_seed, step, phase, index)`, so results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive an independent stream for one unit of work.
pub fn stream(seed: u64, step: u64, phase: u64, index: u64) -> StreamRng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ step.wrapping_mul(0xd6e8_feb8_6659_fd93));
    h = splitmix64(h ^ phase.wrapping_mul(0xa076_1d64_78bd_642f));
    h = splitmix64(h ^ index.wrapping_mul(0xe703_7ed1_a0b4_28db));
    StreamRng::seed_from_u64(h)
}

/// Seed for a child computation, e.g. one sounding of a survey line.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}
