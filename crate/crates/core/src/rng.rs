//! Seed handling.
//!
//! Every random draw in the crate descends from a single 64-bit master seed.
//! A consumer asks for a generator on a named stream plus a counter; the
//! ChaCha stream id is derived from both, so draws for splitting, fold
//! assignment and power-method starts never overlap and never depend on the
//! order in which other consumers ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Folds = 2,
    Power = 3,
    Synthetic = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `(seed, stream, counter)`.
pub fn stream_rng(seed: u64, stream: Stream, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64((stream as u64) << 48 ^ counter));
    rng
}

/// Child seed for a sub-task (e.g. one cross-validation fold).
pub fn derive_seed(seed: u64, stream: Stream, counter: u64) -> u64 {
    splitmix64(seed ^ splitmix64((stream as u64) << 48 ^ counter))
}
