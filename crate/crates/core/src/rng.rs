//! Seeded random streams. Replicate `i` of a run with seed `s` always draws
//! from ChaCha8 stream `i` keyed by `s`, independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed so nested experiments get disjoint stream families.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    let mut rng = stream(seed ^ 0x9E37_79B9_7F4A_7C15, index);
    rng.next_u64()
}
