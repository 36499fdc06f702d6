//! Counter-based substreams so that every replicate (and every error
//! coordinate inside a replicate) draws from its own stream, independent of
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per coordinate inside a replicate stream (2³⁶ u32 words).
const COORDINATE_STRIDE: u128 = 1 << 36;

/// Generator for `(seed, replicate)`.
pub fn substream(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Generator for coordinate `coordinate` of `(seed, replicate)`; coordinates
/// occupy disjoint blocks of the replicate's stream.
pub fn coordinate_stream(seed: u64, replicate: u64, coordinate: u64) -> ChaCha8Rng {
    let mut rng = substream(seed, replicate);
    rng.set_word_pos(COORDINATE_STRIDE * coordinate as u128);
    rng
}
