use std::sync::OnceLock;

use oconsent::identity::{generate_keypair, generate_keypair_with_bits, KeyPair};

fn cached(cell: &'static OnceLock<KeyPair>, seed: u64) -> &'static KeyPair {
    cell.get_or_init(|| generate_keypair(Some(seed)).expect("seeded key generation"))
}

pub fn subject() -> &'static KeyPair {
    static K: OnceLock<KeyPair> = OnceLock::new();
    cached(&K, 11)
}

pub fn controller() -> &'static KeyPair {
    static K: OnceLock<KeyPair> = OnceLock::new();
    cached(&K, 12)
}

pub fn platform() -> &'static KeyPair {
    static K: OnceLock<KeyPair> = OnceLock::new();
    cached(&K, 13)
}

pub fn tsa() -> &'static KeyPair {
    static K: OnceLock<KeyPair> = OnceLock::new();
    cached(&K, 14)
}

/// Small keys for bulk fixtures where only throughput of other code matters.
pub fn small(seed: u64) -> KeyPair {
    generate_keypair_with_bits(Some(seed), 1024).expect("seeded key generation")
}
