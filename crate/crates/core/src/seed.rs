//! Named sub-seed derivation.
//!
//! Every random stream in the crate is derived from one master seed and a
//! label: `derive(master, label)` takes the first eight bytes (little endian)
//! of `SHA-256(master.to_le_bytes() || label)`. Components can therefore be
//! re-run in isolation with exactly the stream they saw inside a full run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a sub-seed for `label` from `master`.
pub fn derive(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Portable, reproducible generator seeded from a raw seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a named sub-stream of `master`.
pub fn sub_rng(master: u64, label: &str) -> ChaCha8Rng {
    rng(derive(master, label))
}
