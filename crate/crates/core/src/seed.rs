//! Deterministic randomness. Every random draw in a run comes from a
//! ChaCha8 stream keyed by the run seed and a fixed stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
