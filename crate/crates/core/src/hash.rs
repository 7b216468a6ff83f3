//! Stable hashing for token ids, configuration fingerprints and weight digests.

use alloc::string::String;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn to_hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut out = String::with_capacity(bytes.len() * 2);
    for &b in bytes {
        out.push(DIGITS[usize::from(b >> 4)] as char);
        out.push(DIGITS[usize::from(b & 0xf)] as char);
    }
    out
}

/// Hex SHA-256 of the canonical JSON encoding of `value`.
///
/// Struct fields serialize in declaration order, so the digest is stable for
/// a given type definition.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config values serialize");
    to_hex(&Sha256::digest(&json)[..16])
}

/// Hex SHA-256 over the exact bit patterns of a weight vector.
pub fn weights_digest(weights: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for w in weights {
        hasher.update(w.to_bits().to_le_bytes());
    }
    to_hex(&hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn digest_tracks_bits() {
        let a = weights_digest(&[0.0, 1.0]);
        let b = weights_digest(&[-0.0, 1.0]);
        assert_ne!(a, b);
        assert_eq!(a, weights_digest(&[0.0, 1.0]));
    }
}
