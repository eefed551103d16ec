//! Deterministic RNG derivation.
//!
//! Every random decision in the pipeline draws from a ChaCha8 stream derived
//! from a user seed, a domain label, and an index. Streams for different
//! (domain, index) pairs are independent, so e.g. adding voters never
//! perturbs the subsets or initial weights of earlier voters.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a 64-bit sub-seed from (seed, domain, index).
pub fn derive_seed(seed: u64, domain: &str, index: u64) -> u64 {
    let digest = derive_key(seed, domain, index);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Derive an independent RNG stream from (seed, domain, index).
pub fn derive_rng(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(seed, domain, index))
}

fn derive_key(seed: u64, domain: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(domain.as_bytes());
    hasher.update([0x1f]);
    hasher.update(index.to_le_bytes());
    hasher.finalize().into()
}
