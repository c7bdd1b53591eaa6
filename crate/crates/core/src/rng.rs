//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by the user
//! seed, with an independent 64-bit stream id per consumer: trial `i` uses
//! stream `i`, the filter bank uses [`FILTER_STREAM`]. Gaussian variates come
//! from `rand_distr::StandardNormal` (ziggurat), uniform variates from
//! `rand`'s `Uniform`. Both are fixed so outputs are reproducible per seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream reserved for filter-bank generation.
pub const FILTER_STREAM: u64 = u64::MAX;

/// Stream reserved for solver initialisation (power iteration start vector).
pub const SOLVER_STREAM: u64 = u64::MAX - 1;

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
