//! Stable 64-bit digests of configuration values, embedded in artifacts.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 over the canonical JSON encoding, truncated to 64 bits.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> u64 {
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    hash_bytes(&bytes)
}

pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let out = Sha256::digest(bytes);
    u64::from_le_bytes(out[..8].try_into().expect("digest is 32 bytes"))
}

/// Order-sensitive combination of two digests.
pub fn combine(a: u64, b: u64) -> u64 {
    let mut buf = [0u8; 16];
    buf[..8].copy_from_slice(&a.to_le_bytes());
    buf[8..].copy_from_slice(&b.to_le_bytes());
    hash_bytes(&buf)
}
