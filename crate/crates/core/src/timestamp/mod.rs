//! Trusted timestamps: a simulated signing authority, NIST-style beacon
//! pulses, drand-style rounds and Bitcoin header nTime anchors.
//!
//! Network providers are replaced by recorded fixtures and deterministic
//! simulators; the verification path is the same for both.

mod beacon;
mod bitcoin;
mod drand;
mod tsa;

pub use beacon::{
    parse_beacon_record, pulse_certificate_public_key, pulse_output_matches, pulse_signing_bytes,
    render_beacon_record, select_pulse_after, verify_pulse_signature, BeaconPulse,
    NistBeaconProvider, SimulatedBeacon, NIST_PERIOD_MS,
};
pub use bitcoin::{BitcoinNTimeProvider, BtcHeaderAnchor};
pub use drand::{DrandProvider, DrandRound};
pub use tsa::SimulatedTsa;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{is_hex, is_hex_digest};
use crate::identity::IdentityError;

#[derive(Debug, Error)]
pub enum TimestampError {
    #[error("digest must be 64 hex characters, got {0:?}")]
    InvalidDigest(String),
    #[error("timestamp provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("unknown timestamp provider {0}")]
    UnknownProvider(String),
    #[error("beacon record: {0}")]
    RecordParse(String),
    #[error("no pulse at or after {0}")]
    NoPulseAvailable(DateTime<Utc>),
    #[error("beacon certificate: {0}")]
    Certificate(String),
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProviderKind {
    SimulatedTsa,
    NistBeacon,
    Drand,
    BitcoinNTime,
    /// Anything this build does not recognize.
    #[serde(other)]
    Unknown,
}

impl ProviderKind {
    /// Worst-case distance between the event and `anchor_time`.
    pub fn time_precision(self) -> Duration {
        match self {
            ProviderKind::SimulatedTsa => Duration::seconds(1),
            ProviderKind::NistBeacon => Duration::milliseconds(NIST_PERIOD_MS as i64),
            ProviderKind::Drand => Duration::seconds(drand::DRAND_PERIOD_SECS as i64),
            ProviderKind::BitcoinNTime => Duration::hours(2),
            ProviderKind::Unknown => Duration::zero(),
        }
    }
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "tsa" | "simulated-tsa" => Ok(ProviderKind::SimulatedTsa),
            "nist" | "nist-beacon" => Ok(ProviderKind::NistBeacon),
            "drand" => Ok(ProviderKind::Drand),
            "btc" | "bitcoin" | "bitcoin-ntime" => Ok(ProviderKind::BitcoinNTime),
            other => Err(format!("unknown timestamp provider {other:?}")),
        }
    }
}

/// What a verifier needs besides the proof itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    None,
    Tsa {
        pulse_index: i64,
        pulse_output: String,
        signer_key_id: String,
    },
    NistPulse(Box<BeaconPulse>),
    DrandRound(DrandRound),
    BtcHeader(BtcHeaderAnchor),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampProof {
    pub provider: ProviderKind,
    /// Beacon output value, block hash, or TSA signature.
    pub anchor_value: String,
    pub anchor_time: DateTime<Utc>,
    pub time_precision_secs: i64,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamped_digest: Option<String>,
    pub evidence: Evidence,
}

impl TimestampProof {
    pub fn time_precision(&self) -> Duration {
        Duration::seconds(self.time_precision_secs)
    }
}

pub trait TimestampProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    /// Bind `digest` (already validated) to this provider's notion of `now`.
    fn stamp(&self, digest: &str, now: DateTime<Utc>) -> Result<TimestampProof, TimestampError>;

    /// Key the verifier should check provider signatures with, if any.
    fn public_key(&self) -> Option<Vec<u8>>;
}

pub fn request_timestamp(
    digest: &str,
    provider: &dyn TimestampProvider,
    now: DateTime<Utc>,
) -> Result<TimestampProof, TimestampError> {
    if !is_hex_digest(digest) {
        return Err(TimestampError::InvalidDigest(digest.to_owned()));
    }
    provider.stamp(&digest.to_ascii_lowercase(), now)
}

/// True iff the proof binds `digest` and every provider signature it
/// carries checks out. Beacon signatures are checked with
/// `provider_public_key`, falling back to a certificate embedded in the pulse.
pub fn verify_timestamp(
    proof: &TimestampProof,
    digest: &str,
    provider_public_key: Option<&[u8]>,
) -> Result<bool, TimestampError> {
    if proof.provider == ProviderKind::Unknown {
        return Err(TimestampError::UnknownProvider(proof.uri.clone()));
    }
    let binds = proof
        .stamped_digest
        .as_deref()
        .is_some_and(|d| is_hex_digest(d) && d.eq_ignore_ascii_case(digest));
    if !binds || !is_hex(&proof.anchor_value) {
        return Ok(false);
    }
    if proof.provider == ProviderKind::BitcoinNTime {
        if proof.time_precision() > proof.provider.time_precision() {
            return Ok(false);
        }
    } else if proof.time_precision() != proof.provider.time_precision() {
        return Ok(false);
    }
    let ok = match (proof.provider, &proof.evidence) {
        (ProviderKind::SimulatedTsa, Evidence::Tsa { .. }) => {
            tsa::verify(proof, digest, provider_public_key)
        }
        (ProviderKind::NistBeacon, Evidence::NistPulse(pulse)) => {
            beacon::verify_proof(proof, pulse, provider_public_key)
        }
        (ProviderKind::Drand, Evidence::DrandRound(round)) => {
            drand::verify_proof(proof, round, provider_public_key)
        }
        (ProviderKind::BitcoinNTime, Evidence::BtcHeader(header)) => {
            bitcoin::verify_proof(proof, header)
        }
        _ => false,
    };
    Ok(ok)
}
