//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha8 stream selected by
//! `(seed, stream)`, so per-item randomness does not depend on how work is
//! split across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Environment variable consulted for a default seed.
pub const SEED_ENV: &str = "FIVA_SEED";

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent sub-seed for item `index` of `seed`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    stream(seed, index).next_u64()
}
