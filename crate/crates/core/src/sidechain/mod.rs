//! The local sidechain: blocks embedding consent-proof digests, the contract
//! state machines they drive, anchor-aware fork choice and batch exits.

mod chain;
mod contracts;
mod exit;
mod fork;

pub use chain::{ProxyOp, 
    append_block, embed_proof, Block, Chain, ChainState, EmbedRecord, Tx, TxKind, TxPayload,
    ZERO_HASH,
};
pub use contracts::{
    lease_check, ownership_transfer, proxy_call, register_changelink, storage_get, Contract,
    ContractBody, LeaseAction, LeaseState, OwnershipState, ProxyLogEntry, ProxyState,
    RegisterState, RelayedCall, StorageState, TransferLogEntry,
};
pub use exit::{finalize_exit, lock_for_exit, ExitRegistry, ExitTicket, SidechainInclusion};
pub use fork::fork_choice;

use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum SidechainError {
    #[error("transaction {index} rejected: {source}")]
    TxValidation {
        index: usize,
        #[source]
        source: Box<SidechainError>,
    },
    #[error("{caller} does not own contract {contract_id}")]
    NotOwner { contract_id: String, caller: String },
    #[error("new owner must not be the null id")]
    ZeroAddress,
    #[error("no contract {0}")]
    UnknownContract(String),
    #[error("contract {contract_id} is not a {expected} contract")]
    ContractKind {
        contract_id: String,
        expected: &'static str,
    },
    #[error("contract id {0} already in use")]
    DuplicateContract(String),
    #[error("lease {0} has expired")]
    LeaseExpired(String),
    #[error("lease {0} has not expired yet")]
    LeaseNotExpired(String),
    #[error("proof for agreement {0} already embedded")]
    DuplicateEmbed(Uuid),
    #[error("invalid consent proof: {0}")]
    InvalidProof(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("block time {now} precedes parent block time {parent}")]
    BlockTime {
        now: chrono::DateTime<chrono::Utc>,
        parent: chrono::DateTime<chrono::Utc>,
    },
    #[error("chain integrity violated at height {height}: {reason}")]
    Integrity { height: u64, reason: String },
    #[error("chains do not share a genesis block")]
    GenesisMismatch,
    #[error("both chains omit an anchored block")]
    AnchorViolation,
    #[error("lock proof: {0}")]
    LockProof(String),
    #[error("batch {0} already exited")]
    AlreadyExited(Uuid),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
