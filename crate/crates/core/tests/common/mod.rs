//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod keys;
pub mod merkle_oracle;
pub mod ngac_oracle;
