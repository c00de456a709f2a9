//! Consent agreements and proofs: the signed JSON-LD documents, their
//! canonical encoding, version lineage and lifecycle.

mod agreement;
mod lifecycle;
mod lineage;
mod proof;
mod signing;
mod version;

pub use agreement::{
    canonical_serialize, compute_agreement_hash, AgreementMetadata, ConsentAgreement, Party,
    ScopeEntry, AGREEMENT_TYPE, OCONSENT_CONTEXT,
};
pub use lifecycle::{advance_lifecycle, LifecycleEvent, LifecycleStage, LifecycleState};
pub use lineage::{link_version, VersionLineage};
pub use proof::{build_proof, ConsentProof, TimestampProofs, PROOF_TYPE};
pub use signing::{
    create_seed, create_seed_with_rng, sign_agreement, verify_provability, verify_seed,
    verify_signed_agreement_hash, VerifiedSeed,
};
pub use version::AgreementVersion;

#[cfg(test)]
pub(crate) use agreement::fixtures;

use thiserror::Error;
use uuid::Uuid;

use crate::identity::{IdentityError, Role};

#[derive(Debug, Error)]
pub enum ConsentError {
    #[error("invalid agreement: {0}")]
    Validation(String),
    #[error("{actual:?} cannot {action}; requires {required:?}")]
    Role {
        required: Role,
        actual: Role,
        action: &'static str,
    },
    #[error("data controller seed signature not verified")]
    SeedNotVerified,
    #[error("a consent proof needs at least one timestamp proof")]
    MissingTimestamp,
    #[error("illegal lifecycle transition: {event:?} from {from:?}")]
    LifecycleTransition {
        from: LifecycleStage,
        event: LifecycleEvent,
    },
    #[error("broken lineage: new agreement links to {found:?}, head is {expected}")]
    Lineage { expected: Uuid, found: Option<Uuid> },
    #[error("version {new} does not follow head version {head}")]
    VersionOrder {
        head: AgreementVersion,
        new: AgreementVersion,
    },
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
