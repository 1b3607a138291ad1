//! Reproducible random streams.
//!
//! Every sampled path owns a ChaCha8 stream derived from a master seed, a
//! key (for example the environment start state) and a path index. The
//! stream depends only on these three numbers, so results do not depend on
//! how paths are distributed over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, key: u64, index: u64) -> Stream {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&key.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(index);
    rng
}
