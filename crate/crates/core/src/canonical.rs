//! Canonical JSON encoding and digest helpers.
//!
//! Every hash and signature in the crate is computed over the canonical form:
//! object keys sorted lexicographically, UTF-8, no insignificant whitespace.
//! `serde_json::Map` is ordered by key (no `preserve_order`), so a round trip
//! through `serde_json::Value` is enough to normalize field order.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serialize `value` into canonical JSON bytes.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let normalized = serde_json::to_value(value)?;
    serde_json::to_vec(&normalized)
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let normalized = serde_json::to_value(value)?;
    serde_json::to_string(&normalized)
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

/// SHA-256 over the canonical JSON encoding of `value`, lowercase hex.
pub fn canonical_digest_hex<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    Ok(sha256_hex(&to_canonical_bytes(value)?))
}

/// True for a 64-character lowercase or uppercase hex string.
pub fn is_hex_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

pub fn is_hex(s: &str) -> bool {
    !s.is_empty() && s.len().is_multiple_of(2) && s.bytes().all(|b| b.is_ascii_hexdigit())
}
