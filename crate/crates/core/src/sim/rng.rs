//! Counter-based random streams keyed by `(seed, replicate, stream)`.
//!
//! The ChaCha key is built from the seed and the replicate index and the
//! stream id selects the ChaCha stream, so every replicate draws from its
//! own sequence regardless of the order in which replicates run.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream ids used by the generators.
pub mod streams {
    pub const DESIGN: u64 = 0;
    pub const NOISE: u64 = 1;
}

pub fn stream_rng(seed: u64, replicate: u64, stream: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..].copy_from_slice(b"hippo-sim-stream");
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}
