//! Deterministic per-path random streams.
//!
//! Each (seed, path index, stream tag) triple keys an independent ChaCha8
//! stream, so paths are bit-identical regardless of execution order or
//! thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags separating the independent random uses of one path.
pub mod stream_tag {
    pub const SIGNALS: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const MODEL: u64 = 3;
    pub const DRAWS: u64 = 4;
}

/// Build the RNG for one (seed, path, tag) stream.
pub fn stream_rng(seed: u64, path_index: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&path_index.to_le_bytes());
    key[16..24].copy_from_slice(&tag.to_le_bytes());
    key[24..32].copy_from_slice(b"sharprep");
    ChaCha8Rng::from_seed(key)
}
