//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose 256-bit
//! key is `SHA-256(seed_le_bytes || tag)`. A stream is therefore a pure
//! function of a 64-bit seed and a purpose tag such as `"scm/x"` or
//! `"trainer/shuffle"`, and is identical on every platform. Distinct tags
//! give statistically independent streams, so jobs never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derive the RNG for `(seed, tag)`.
pub fn stream(seed: u64, tag: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Derive a child seed, used when a job needs to hand a seed to another
/// seeded component.
pub fn child_seed(seed: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(b"/child/");
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
