//! Counter-based deterministic randomness.
//!
//! Every draw is a pure function of a seed and a list of key parts (instance
//! id, stream name, sample index, ...), so results never depend on the order
//! in which concurrent work completes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn digest(seed: u64, parts: &[&str]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().into()
}

/// 64-bit seed derived from `(seed, parts)`.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let d = digest(seed, parts);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Uniform draw in `[0, 1)` keyed by `(seed, parts)`.
pub fn unit(seed: u64, parts: &[&str]) -> f64 {
    (derive_seed(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// A full RNG stream keyed by `(seed, parts)`.
pub fn keyed_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(seed, parts))
}
