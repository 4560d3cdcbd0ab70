//! Content digests and seed derivation.

use sha2::{Digest, Sha256};

/// Hex-encoded prefix (16 bytes) of the SHA-256 of `bytes`.
pub fn short_digest(bytes: &[u8]) -> String {
    let full = Sha256::digest(bytes);
    hex::encode(&full[..16])
}

/// Derives a 64-bit seed from a master seed and a sequence of labelled
/// coordinates. The layout is `"covsim-seed-v1" | master | (label | value)*`,
/// hashed with SHA-256; the first 8 bytes (little endian) form the seed.
pub fn split_seed(master: u64, coords: &[(&str, u64)]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"covsim-seed-v1");
    h.update(master.to_le_bytes());
    for (label, value) in coords {
        h.update((label.len() as u32).to_le_bytes());
        h.update(label.as_bytes());
        h.update(value.to_le_bytes());
    }
    let out = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&out[..8]);
    u64::from_le_bytes(first)
}
