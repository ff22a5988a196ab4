//! Stable seed derivation. Every stochastic component draws from a
//! ChaCha8 stream keyed by a hash of (root seed, labels), so results do not
//! depend on call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hashes a root seed and a list of labels into a 64-bit seed.
pub fn derive(seed: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, labels))
}

/// A uniform number in `[0, 1)` fixed by (seed, labels).
pub fn unit(seed: u64, labels: &[&str]) -> f64 {
    (derive(seed, labels) >> 11) as f64 / (1u64 << 53) as f64
}
