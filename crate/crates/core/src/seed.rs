//! Named random sub-streams derived from one 64-bit master seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sub-stream identifiers. Each (stream, index) pair yields an independent
/// ChaCha8 stream under the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Folds = 1,
    AdjusterCv = 2,
    Replication = 3,
    Splits = 4,
}

/// Generator for `(master, stream, index)`.
pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((stream as u64) << 48) ^ index);
    rng
}

/// A child seed for `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    stream_rng(master, stream, index).next_u64()
}
