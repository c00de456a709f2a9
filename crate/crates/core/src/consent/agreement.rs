use std::collections::HashSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{AgreementVersion, ConsentError};
use crate::canonical::{sha256_hex, to_canonical_bytes};

pub const OCONSENT_CONTEXT: &str = "https://w3id.org/oconsent/v1";
pub const AGREEMENT_TYPE: &str = "OConsent - Open Consent Agreement";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Party {
    pub name: String,
    pub id: String,
}

/// One purpose and the data it covers. Separate purposes need separate entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeEntry {
    pub purpose: String,
    /// `<dataset>:<attribute>` references.
    pub data_attributes: Vec<String>,
    pub expiry: NaiveDate,
}

impl ScopeEntry {
    pub fn covers(&self, attribute: &str) -> bool {
        self.data_attributes.iter().any(|a| a == attribute)
    }
}

pub(crate) fn is_attribute_ref(s: &str) -> bool {
    let part_ok = |p: &str| {
        !p.is_empty()
            && p.bytes()
                .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
    };
    matches!(s.split_once(':'), Some((dataset, attr)) if part_ok(dataset) && part_ok(attr))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementMetadata {
    pub data_subject: Party,
    pub data_controller: Party,
    #[serde(default)]
    pub data_controller_aux: Vec<Party>,
    pub agreement_date: NaiveDate,
    pub is_transferrable: bool,
}

/// The JSON-LD consent agreement document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentAgreement {
    #[serde(rename = "@context")]
    pub context_uri: String,
    #[serde(rename = "type")]
    pub doc_type: String,
    pub agreement_hash_id: Uuid,
    pub agreement_version: AgreementVersion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_agreement_hash_id: Option<Uuid>,
    pub metadata: AgreementMetadata,
    pub consent_scope: Vec<ScopeEntry>,
    pub monetization_enabled: bool,
    /// Carried opaquely; never interpreted.
    #[serde(default)]
    pub monetization_scope: serde_json::Value,
}

impl ConsentAgreement {
    pub fn data_subject(&self) -> &Party {
        &self.metadata.data_subject
    }

    pub fn data_controller(&self) -> &Party {
        &self.metadata.data_controller
    }

    pub fn scope_for(&self, purpose: &str) -> Option<&ScopeEntry> {
        self.consent_scope.iter().find(|s| s.purpose == purpose)
    }

    pub fn validate(&self) -> Result<(), ConsentError> {
        let fail = |msg: String| Err(ConsentError::Validation(msg));
        if self.context_uri != OCONSENT_CONTEXT {
            return fail(format!("unexpected @context {:?}", self.context_uri));
        }
        if self.doc_type != AGREEMENT_TYPE {
            return fail(format!("unexpected type {:?}", self.doc_type));
        }
        if self.agreement_hash_id.get_version_num() != 4 {
            return fail(format!("agreement_hash_id {} is not a UUID v4", self.agreement_hash_id));
        }
        if !self.agreement_version.is_initial() && self.linked_agreement_hash_id.is_none() {
            return fail(format!(
                "version {} needs linked_agreement_hash_id",
                self.agreement_version
            ));
        }
        if self.linked_agreement_hash_id == Some(self.agreement_hash_id) {
            return fail("agreement links to itself".into());
        }
        if self.consent_scope.is_empty() {
            return fail("consent_scope is empty".into());
        }
        let mut purposes = HashSet::new();
        for entry in &self.consent_scope {
            if entry.purpose.is_empty() {
                return fail("empty purpose".into());
            }
            if !purposes.insert(entry.purpose.as_str()) {
                return fail(format!("purpose {:?} appears twice", entry.purpose));
            }
            if entry.expiry <= self.metadata.agreement_date {
                return fail(format!(
                    "{} expiry {} is not after agreement date {}",
                    entry.purpose, entry.expiry, self.metadata.agreement_date
                ));
            }
            if entry.data_attributes.is_empty() {
                return fail(format!("{} lists no data attributes", entry.purpose));
            }
            if let Some(bad) = entry.data_attributes.iter().find(|a| !is_attribute_ref(a)) {
                return fail(format!("{bad:?} is not a <dataset>:<attribute> reference"));
            }
        }
        Ok(())
    }
}

/// Sorted-key, whitespace-free UTF-8 JSON. Validates first.
pub fn canonical_serialize(agreement: &ConsentAgreement) -> Result<Vec<u8>, ConsentError> {
    agreement.validate()?;
    Ok(to_canonical_bytes(agreement)?)
}

/// Lowercase hex SHA-256 of the canonical bytes.
pub fn compute_agreement_hash(agreement: &ConsentAgreement) -> Result<String, ConsentError> {
    Ok(sha256_hex(&canonical_serialize(agreement)?))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const SAMPLE_JSON: &str = include_str!("../../fixtures/agreements/sample.agreement.json");

    pub fn sample() -> ConsentAgreement {
        serde_json::from_str(SAMPLE_JSON).unwrap()
    }

    /// Initial version the sample document links back to.
    pub fn sample_parent() -> ConsentAgreement {
        let mut a = sample();
        a.agreement_hash_id = "365b5f44-cac8-4e78-8bfa-8d07899c6385".parse().unwrap();
        a.agreement_version = AgreementVersion::initial();
        a.linked_agreement_hash_id = None;
        a
    }
}
