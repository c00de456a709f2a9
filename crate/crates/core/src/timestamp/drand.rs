use chrono::{DateTime, Duration, SecondsFormat, Utc};
use rsa::Pkcs1v15Sign;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Evidence, ProviderKind, TimestampError, TimestampProof, TimestampProvider};
use crate::identity::{parse_public_key, KeyPair};

pub const DRAND_PERIOD_SECS: u64 = 30;

/// One round of a drand-style unchained beacon: the signature covers the
/// round number and time, and the randomness is the hash of the signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrandRound {
    pub round: u64,
    pub time: DateTime<Utc>,
    pub randomness: String,
    pub signature: String,
}

fn round_message(round: u64, time: &DateTime<Utc>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(round.to_be_bytes());
    h.update(time.to_rfc3339_opts(SecondsFormat::Secs, true).as_bytes());
    h.finalize().into()
}

pub struct DrandProvider {
    key: KeyPair,
    genesis: DateTime<Utc>,
}

impl DrandProvider {
    pub fn new(key: KeyPair, genesis: DateTime<Utc>) -> Self {
        DrandProvider { key, genesis }
    }

    pub fn round_time(&self, round: u64) -> DateTime<Utc> {
        self.genesis + Duration::seconds((round.saturating_sub(1) * DRAND_PERIOD_SECS) as i64)
    }

    /// The first round emitted at or after `t`.
    pub fn round_at_or_after(&self, t: DateTime<Utc>) -> u64 {
        let elapsed = (t - self.genesis).num_milliseconds();
        if elapsed <= 0 {
            return 1;
        }
        let period = (DRAND_PERIOD_SECS * 1000) as i64;
        ((elapsed + period - 1) / period + 1) as u64
    }

    pub fn round(&self, round: u64) -> Result<DrandRound, TimestampError> {
        let time = self.round_time(round);
        let signature = self.key.sign_prehashed(&round_message(round, &time))?;
        Ok(DrandRound {
            round,
            time,
            randomness: hex::encode(Sha256::digest(&signature)),
            signature: hex::encode(signature),
        })
    }
}

impl TimestampProvider for DrandProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Drand
    }

    fn stamp(&self, digest: &str, now: DateTime<Utc>) -> Result<TimestampProof, TimestampError> {
        let round = self.round(self.round_at_or_after(now))?;
        Ok(TimestampProof {
            provider: ProviderKind::Drand,
            anchor_value: round.randomness.clone(),
            anchor_time: round.time,
            time_precision_secs: DRAND_PERIOD_SECS as i64,
            uri: format!("sim://drand/public/{}", round.round),
            stamped_digest: Some(digest.to_owned()),
            evidence: Evidence::DrandRound(round),
        })
    }

    fn public_key(&self) -> Option<Vec<u8>> {
        Some(self.key.public_key().to_vec())
    }
}

pub(super) fn verify_proof(proof: &TimestampProof, round: &DrandRound, public_key: Option<&[u8]>) -> bool {
    let Some(public_key) = public_key else {
        return false;
    };
    let Ok(key) = parse_public_key(public_key) else {
        return false;
    };
    let Ok(signature) = hex::decode(&round.signature) else {
        return false;
    };
    proof.anchor_value.eq_ignore_ascii_case(&round.randomness)
        && proof.anchor_time == round.time
        && hex::encode(Sha256::digest(&signature)) == round.randomness.to_ascii_lowercase()
        && key
            .verify(
                Pkcs1v15Sign::new::<Sha256>(),
                &round_message(round.round, &round.time),
                &signature,
            )
            .is_ok()
}
