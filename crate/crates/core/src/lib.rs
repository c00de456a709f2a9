//! Open consent management: signed consent agreements, trusted timestamps,
//! a local sidechain with contract state machines, main-chain fingerprints,
//! NGAC access decisions and a consent state cache.

pub mod canonical;
pub mod consent;
pub mod fingerprint;
pub mod flow;
pub mod identity;
pub mod ngac;
pub mod sidechain;
pub mod state_store;
pub mod timestamp;

#[cfg(test)]
pub(crate) mod test_keys;
