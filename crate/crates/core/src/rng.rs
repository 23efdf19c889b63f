//! Labeled random streams derived from one root seed.
//!
//! Each phase of a run (batch sampling, k-means initialization, bandit
//! minibatches, the synthetic backend) draws from its own stream, so changing
//! how much randomness one phase consumes never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

/// Returns the stream identified by `(seed, label)`.
///
/// The 256-bit ChaCha key is SHA-256 over the little-endian seed followed by the
/// label bytes, which is platform independent.
pub fn seeded_rng(seed: u64, label: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Stream for `label` scoped to one iteration.
pub fn iteration_rng(seed: u64, label: &str, iteration: u64) -> Stream {
    seeded_rng(seed, &format!("{label}/{iteration}"))
}

/// Deterministic uniform draw in `[0, 1)` keyed by arbitrary parts.
///
/// Used where a value must be reproducible without threading a stream through,
/// e.g. the synthetic task model grading one example.
pub fn keyed_unit(seed: u64, parts: &[&str]) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    // 53 high bits -> exactly representable double in [0, 1)
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}
