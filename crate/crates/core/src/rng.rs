//! Seeded random streams.
//!
//! Every source of randomness in the crate goes through [`stream`], a
//! ChaCha8 generator keyed by a base seed and selected by a 64-bit stream id.
//! ChaCha is counter based, so distinct stream ids give independent
//! sequences and the output is identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `(seed, stream_id)`.
pub fn stream(seed: u64, stream_id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Packs two 32-bit coordinates into one stream id.
pub fn stream_id(major: u64, minor: u64) -> u64 {
    (major << 32) ^ (minor & 0xffff_ffff)
}

/// Derives a child seed; used where a component takes a plain `u64` seed.
pub fn child_seed(seed: u64, stream_id: u64) -> u64 {
    use rand::RngCore;
    stream(seed, stream_id).next_u64()
}
