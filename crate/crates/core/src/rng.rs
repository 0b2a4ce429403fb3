//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from
//! a single `u64` seed, so a chain is bit-reproducible and the draws consumed
//! by one component never shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SmcRng = ChaCha8Rng;

/// Stream `stream` of the generator family identified by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SmcRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const ACCEPT_STREAM: u64 = u64::MAX;
pub const THETA_STREAM: u64 = u64::MAX - 1;
pub const INITIAL_FILTER_STREAM: u64 = u64::MAX - 2;

/// Filter stream for sweep `sweep`.
pub fn filter_stream(sweep: u64) -> u64 {
    2 * sweep
}

/// Extraction (backward / genealogy draws) stream for sweep `sweep`.
pub fn extraction_stream(sweep: u64) -> u64 {
    2 * sweep + 1
}
