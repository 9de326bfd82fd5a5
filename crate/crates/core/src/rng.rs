//! Counter-style seeded substreams.
//!
//! Every random decision in the pipeline draws from a generator derived from
//! the run seed plus a list of labels (stage, sample, candidate, ...). The
//! derivation is a SHA-256 of the labels, so results never depend on the
//! order in which samples are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn digest(seed: u64, labels: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let out = hasher.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(out.as_slice());
    bytes
}

/// A generator keyed by `seed` and `labels`.
pub fn substream(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(seed, labels))
}

/// A 64-bit value keyed by `seed` and `labels`, used to hand a child seed to
/// a component that takes a plain integer.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let bytes = digest(seed, labels);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

/// A uniform draw in `[0, 1)` keyed by `seed` and `labels`.
pub fn unit(seed: u64, labels: &[&str]) -> f64 {
    (derive_seed(seed, labels) >> 11) as f64 / (1u64 << 53) as f64
}

/// FNV-1a, used where a short stable hash of text is enough.
pub fn fnv1a(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
