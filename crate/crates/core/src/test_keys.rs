//! RSA-4096 keys shared by unit tests; generation is seeded and done once.

use std::sync::OnceLock;

use crate::identity::{generate_keypair, KeyPair};

fn cached(cell: &'static OnceLock<KeyPair>, seed: u64) -> &'static KeyPair {
    cell.get_or_init(|| generate_keypair(Some(seed)).expect("seeded key generation"))
}

pub fn subject() -> &'static KeyPair {
    static K: OnceLock<KeyPair> = OnceLock::new();
    cached(&K, 1)
}

pub fn controller() -> &'static KeyPair {
    static K: OnceLock<KeyPair> = OnceLock::new();
    cached(&K, 2)
}

pub fn platform() -> &'static KeyPair {
    static K: OnceLock<KeyPair> = OnceLock::new();
    cached(&K, 3)
}

pub fn tsa() -> &'static KeyPair {
    static K: OnceLock<KeyPair> = OnceLock::new();
    cached(&K, 4)
}
