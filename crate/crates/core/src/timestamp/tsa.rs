use chrono::{DateTime, SecondsFormat, Utc};
use rsa::Pkcs1v15Sign;
use sha2::{Digest, Sha256, Sha512};

use super::{Evidence, ProviderKind, TimestampError, TimestampProof, TimestampProvider};
use crate::canonical::sha256_hex;
use crate::identity::{parse_public_key, KeyPair};

/// An RFC 3161-style authority that signs `(digest, time, clock pulse)`
/// with its own key. The clock pulse changes once a minute.
pub struct SimulatedTsa {
    key: KeyPair,
}

fn pulse_output(key_id: &str, pulse_index: i64) -> String {
    let mut h = Sha512::new();
    h.update(key_id.as_bytes());
    h.update(pulse_index.to_be_bytes());
    hex::encode(h.finalize())
}

fn signed_digest(digest: &str, anchor_time: &DateTime<Utc>, pulse_output: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(digest.to_ascii_lowercase().as_bytes());
    h.update(anchor_time.to_rfc3339_opts(SecondsFormat::AutoSi, true).as_bytes());
    h.update(pulse_output.as_bytes());
    h.finalize().into()
}

impl SimulatedTsa {
    pub fn new(key: KeyPair) -> Self {
        SimulatedTsa { key }
    }

    pub fn key_id(&self) -> &str {
        self.key.key_id()
    }
}

impl TimestampProvider for SimulatedTsa {
    fn kind(&self) -> ProviderKind {
        ProviderKind::SimulatedTsa
    }

    fn stamp(&self, digest: &str, now: DateTime<Utc>) -> Result<TimestampProof, TimestampError> {
        let pulse_index = now.timestamp().div_euclid(60);
        let pulse_output = pulse_output(self.key.key_id(), pulse_index);
        let signature = self
            .key
            .sign_prehashed(&signed_digest(digest, &now, &pulse_output))?;
        Ok(TimestampProof {
            provider: ProviderKind::SimulatedTsa,
            anchor_value: hex::encode(signature),
            anchor_time: now,
            time_precision_secs: ProviderKind::SimulatedTsa.time_precision().num_seconds(),
            uri: format!("sim://tsa/{}", &self.key.key_id()[..16]),
            stamped_digest: Some(digest.to_owned()),
            evidence: Evidence::Tsa {
                pulse_index,
                pulse_output,
                signer_key_id: self.key.key_id().to_owned(),
            },
        })
    }

    fn public_key(&self) -> Option<Vec<u8>> {
        Some(self.key.public_key().to_vec())
    }
}

pub(super) fn verify(proof: &TimestampProof, digest: &str, public_key: Option<&[u8]>) -> bool {
    let Evidence::Tsa {
        pulse_index,
        pulse_output: claimed_pulse,
        signer_key_id,
    } = &proof.evidence
    else {
        return false;
    };
    let Some(public_key) = public_key else {
        return false;
    };
    let Ok(key) = parse_public_key(public_key) else {
        return false;
    };
    let key_id = match rsa::pkcs8::EncodePublicKey::to_public_key_der(&key) {
        Ok(der) => sha256_hex(der.as_bytes()),
        Err(_) => return false,
    };
    if *signer_key_id != key_id
        || *pulse_index != proof.anchor_time.timestamp().div_euclid(60)
        || *claimed_pulse != pulse_output(&key_id, *pulse_index)
    {
        return false;
    }
    let Ok(signature) = hex::decode(&proof.anchor_value) else {
        return false;
    };
    let digest = signed_digest(digest, &proof.anchor_time, claimed_pulse);
    key.verify(Pkcs1v15Sign::new::<Sha256>(), &digest, &signature)
        .is_ok()
}
