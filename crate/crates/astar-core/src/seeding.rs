//! Stable seed derivation so runs reproduce across platforms and versions.

use sha2::{Digest, Sha256};

/// Derives a 64-bit seed from the given byte parts. Parts are length
/// prefixed before hashing so distinct splits never collide.
pub fn stable_hash64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

/// Seed for one query's search, derived from the run seed and the query id.
pub fn query_seed(run_seed: u64, query_id: &str) -> u64 {
    stable_hash64(&[&run_seed.to_le_bytes(), query_id.as_bytes()])
}
