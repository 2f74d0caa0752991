//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! `(seed, stream)` pair: the 64-bit seed is expanded by
//! `ChaCha8Rng::seed_from_u64` and the stream id selects one of the 2^64
//! independent ChaCha streams. Work that may run in parallel (rows of a
//! design matrix, Monte-Carlo trials) gets its own stream id, so output does
//! not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Active-group choice and ground-truth values.
pub const STREAM_SIGNAL: u64 = 0;
/// Random orthogonal rotation of the covariance.
pub const STREAM_ROTATION: u64 = 1;
/// Observation noise.
pub const STREAM_NOISE: u64 = 2;
/// Power-iteration start vector.
pub const STREAM_POWER: u64 = 3;
/// Row `i` of a sampled design uses `STREAM_ROW_BASE + i`.
pub const STREAM_ROW_BASE: u64 = 1 << 32;
/// Restricted-spectrum trial `t` uses `STREAM_TRIAL_BASE + t`.
pub const STREAM_TRIAL_BASE: u64 = 1 << 48;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
