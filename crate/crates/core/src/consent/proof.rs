use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{verify_signed_agreement_hash, ConsentAgreement, ConsentError, OCONSENT_CONTEXT};
use crate::canonical::{sha256_hex, to_canonical_bytes};
use crate::identity::{sign_digest, verify_signature, KeyPair, SignatureBundle};
use crate::timestamp::{Evidence, ProviderKind, TimestampProof};

pub const PROOF_TYPE: &str = "OConsent - Open Consent Proof";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampProofs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nist_randomness_beacon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub btc_ntime_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drand_hash: Option<serde_json::Value>,
}

impl TimestampProofs {
    pub fn is_empty(&self) -> bool {
        self.nist_randomness_beacon.is_none() && self.btc_ntime_hash.is_none() && self.drand_hash.is_none()
    }
}

/// The JSON-LD consent proof document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentProof {
    #[serde(rename = "@context")]
    pub context_uri: String,
    #[serde(rename = "type")]
    pub doc_type: String,
    pub agreement_hash_id: Uuid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_agreement_hash_id: Option<Uuid>,
    pub signed_agreement_hash_id: String,
    pub timestamp_proofs: TimestampProofs,
    #[serde(rename = "URIs", default)]
    pub uris: Vec<String>,
    /// Full provider evidence for offline verification.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timestamp_evidence: Vec<TimestampProof>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform_signature: Option<SignatureBundle>,
}

impl ConsentProof {
    /// Canonical bytes of the proof without its platform signature.
    pub fn signing_bytes(&self) -> Result<Vec<u8>, ConsentError> {
        let mut unsigned = self.clone();
        unsigned.platform_signature = None;
        Ok(to_canonical_bytes(&unsigned)?)
    }

    /// SHA-256 of the full canonical document, signature included.
    pub fn digest(&self) -> Result<String, ConsentError> {
        Ok(sha256_hex(&to_canonical_bytes(self)?))
    }

    pub fn validate(&self) -> Result<(), ConsentError> {
        if self.doc_type != PROOF_TYPE {
            return Err(ConsentError::Validation(format!("type must be {PROOF_TYPE:?}")));
        }
        if self.timestamp_proofs.is_empty() && self.timestamp_evidence.is_empty() {
            return Err(ConsentError::MissingTimestamp);
        }
        Ok(())
    }

    pub fn verify_platform_signature(&self, platform_public_key: &[u8]) -> Result<bool, ConsentError> {
        match &self.platform_signature {
            Some(sig) => Ok(verify_signature(&self.signing_bytes()?, sig, platform_public_key)?),
            None => Ok(false),
        }
    }

    /// The proof refers to `agreement` and its signed hash checks out
    /// under the data subject's key.
    pub fn verify_against(
        &self,
        agreement: &ConsentAgreement,
        subject_public_key: &[u8],
    ) -> Result<bool, ConsentError> {
        Ok(self.agreement_hash_id == agreement.agreement_hash_id
            && self.linked_agreement_hash_id == agreement.linked_agreement_hash_id
            && verify_signed_agreement_hash(agreement, &self.signed_agreement_hash_id, subject_public_key)?)
    }
}

pub fn build_proof(
    agreement: &ConsentAgreement,
    signed_hash: &str,
    timestamps: &[TimestampProof],
    platform_key: &KeyPair,
) -> Result<ConsentProof, ConsentError> {
    if timestamps.is_empty() {
        return Err(ConsentError::MissingTimestamp);
    }
    let mut fields = TimestampProofs::default();
    let mut uris = Vec::new();
    for ts in timestamps {
        match (ts.provider, &ts.evidence) {
            (ProviderKind::NistBeacon, _) => {
                fields.nist_randomness_beacon = Some(ts.anchor_value.clone());
            }
            (ProviderKind::BitcoinNTime, _) => {
                fields.btc_ntime_hash = Some(ts.anchor_value.clone());
            }
            (ProviderKind::Drand, Evidence::DrandRound(round)) => {
                fields.drand_hash = Some(serde_json::to_value(round)?);
            }
            _ => {}
        }
        if !uris.contains(&ts.uri) {
            uris.push(ts.uri.clone());
        }
    }
    let mut proof = ConsentProof {
        context_uri: OCONSENT_CONTEXT.to_owned(),
        doc_type: PROOF_TYPE.to_owned(),
        agreement_hash_id: agreement.agreement_hash_id,
        linked_agreement_hash_id: agreement.linked_agreement_hash_id,
        signed_agreement_hash_id: signed_hash.to_owned(),
        timestamp_proofs: fields,
        uris,
        timestamp_evidence: timestamps.to_vec(),
        platform_signature: None,
    };
    proof.platform_signature = Some(sign_digest(&proof.signing_bytes()?, platform_key)?);
    Ok(proof)
}
