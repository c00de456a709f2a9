//! Consent manager and context handler: turns consent requests into signed,
//! timestamped, embedded agreements and gates data access on them.

mod audit;
mod context;
mod dak;
mod platform;

pub use audit::{verify_audit_chain, AuditEvent, AuditExport, AuditLog, AuditRecord, LeaseSnapshot};
pub use context::{
    draft_for_context, validate_context, ConsentRequest, ContextOutcome, RejectReason, ScopeRequest,
};
pub use dak::{DakBody, DataAccessKey};
pub use platform::{
    AccessOutcome, AccessRequest, AgreementRecord, AnchorSummary, CreationOutcome, DenialReason, Platform,
    ProofVerification, SubjectDecision,
};

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::consent::ConsentError;
use crate::fingerprint::FingerprintError;
use crate::identity::IdentityError;
use crate::ngac::NgacError;
use crate::sidechain::SidechainError;
use crate::state_store::StateStoreError;
use crate::timestamp::TimestampError;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid context: {0}")]
    Context(String),
    #[error("unknown party {0}")]
    UnknownParty(String),
    #[error("unknown agreement {0}")]
    UnknownAgreement(Uuid),
    #[error("{caller} is not the data subject of {agreement}")]
    NotSubject { caller: String, agreement: Uuid },
    #[error("request rejected: {0:?}")]
    Rejected(RejectReason),
    #[error("subject signature does not verify under the registered key")]
    SubjectSignature,
    #[error("fault injected at {0:?}")]
    Injected(FlowStep),
    #[error("audit log broken at record {seq}: {reason}")]
    AuditTampered { seq: u64, reason: String },
    #[error(transparent)]
    Consent(#[from] ConsentError),
    #[error(transparent)]
    Timestamp(#[from] TimestampError),
    #[error(transparent)]
    Sidechain(#[from] SidechainError),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    StateStore(#[from] StateStoreError),
    #[error(transparent)]
    Ngac(#[from] NgacError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The creation steps after the seed has been verified, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStep {
    AgreementHash,
    SubjectSignature,
    Timestamp,
    ProofBuild,
    Embed,
}

impl FlowStep {
    pub const ALL: [FlowStep; 5] = [
        FlowStep::AgreementHash,
        FlowStep::SubjectSignature,
        FlowStep::Timestamp,
        FlowStep::ProofBuild,
        FlowStep::Embed,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Expiry applied to scope entries that do not state one.
    pub default_expiry_days: i64,
    /// Per purpose overrides of `default_expiry_days`.
    pub purpose_expiry_days: BTreeMap<String, i64>,
    pub default_lease_days: u32,
    /// Operations granted to a controller on the attributes it was consented.
    pub default_ops: BTreeSet<String>,
    /// Mirror each agreement's scope into the NGAC policy graph.
    pub provision_policy: bool,
    /// Sender id for the platform's sidechain transactions.
    pub platform_id: String,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            default_expiry_days: 90,
            purpose_expiry_days: BTreeMap::new(),
            default_lease_days: 365,
            default_ops: BTreeSet::from(["r".to_owned()]),
            provision_policy: true,
            platform_id: "oconsent-platform".to_owned(),
        }
    }
}

impl FlowConfig {
    pub fn expiry_days_for(&self, purpose: &str) -> i64 {
        self.purpose_expiry_days
            .get(purpose)
            .copied()
            .unwrap_or(self.default_expiry_days)
    }
}

/// A scope expiry date covers access strictly before its first instant.
pub fn expiry_instant(date: NaiveDate) -> DateTime<Utc> {
    date.and_time(NaiveTime::MIN).and_utc()
}
