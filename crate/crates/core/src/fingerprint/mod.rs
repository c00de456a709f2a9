//! Fingerprinting: Merkle batch hashes over sidechain state, anchoring on
//! simulated Bitcoin and Ethereum chains, and reconciliation proofs.

mod mainchain;
mod merkle;
mod service;

pub use mainchain::{
    verify_receipt, AnchorReceipt, CarrierField, MainChainKind, MainChainSim, ReceiptStatus,
    SimBlock, SimTx, OP_RETURN_MAX_BYTES,
};
pub use merkle::{
    build_batch_hash, leaf_node_hash, prove_inclusion, verify_inclusion, Batch, BatchHash,
    BatchTrigger, InclusionPath,
};
pub use service::{
    anchor, reconcile, schedule_tick, verify_fingerprint_doc, BatchRecord, FingerprintProofDoc,
    FingerprintService, FingerprintVerification, PendingQueue, SchedulePolicy, SidechainRef,
    FINGERPRINT_PROOF_TYPE,
};

use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("a batch needs at least one leaf")]
    EmptyBatch,
    #[error("leaf {0} appears twice in the batch")]
    DuplicateLeaf(String),
    #[error("leaf {0:?} is not a 64-character hex digest")]
    InvalidLeaf(String),
    #[error("leaf {0} is not in the batch")]
    LeafNotFound(String),
    #[error("unknown batch {0}")]
    UnknownBatch(Uuid),
    #[error("{chain:?} produced {got} of {wanted} confirmations before halting")]
    ConfirmationTimeout {
        chain: MainChainKind,
        wanted: u64,
        got: u64,
    },
    #[error("carrier payload of {0} bytes exceeds the field limit")]
    CarrierTooLarge(usize),
    #[error("agreement {0} is not anchored")]
    NotAnchored(Uuid),
    #[error("agreement {} is anchored on one chain only", .0.agreement_hash_id)]
    PartialAnchor(Box<FingerprintProofDoc>),
    #[error("main chain store corrupted at height {height}: {reason}")]
    StoreIntegrity { height: u64, reason: String },
    #[error(transparent)]
    Sidechain(#[from] crate::sidechain::SidechainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
