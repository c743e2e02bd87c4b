//! Counter-based seed derivation.
//!
//! Every random decision in the crate draws from a [`rand_chacha::ChaCha8Rng`]
//! whose seed is derived from a master seed, an operation label, and the
//! operation's indices (trial number, fold number, cell coordinates, ...).
//! Derived seeds are independent of scheduling, so work units can run on any
//! number of threads without changing results.
//!
//! Derivation: `SHA-256(master_le || 0xff || label || 0x00 || idx_0_le || ...)`
//! truncated to the first 8 bytes, little-endian.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a sub-seed from `(master, label, indices)`.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0xff]);
    hasher.update(label.as_bytes());
    hasher.update([0x00]);
    for index in indices {
        hasher.update(index.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// A ChaCha8 generator seeded by [`derive_seed`].
pub fn rng_for(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, indices))
}

/// A ChaCha8 generator seeded from raw bytes hashed together with a seed.
///
/// Used where the "index" of a random decision is a byte string rather than
/// a counter (e.g. a query's feature bytes).
pub fn rng_for_bytes(master: u64, label: &str, bytes: &[u8]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0xff]);
    hasher.update(label.as_bytes());
    hasher.update([0x00]);
    hasher.update(bytes);
    let digest = hasher.finalize();
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(
        digest[..8].try_into().expect("digest is 32 bytes"),
    ))
}
