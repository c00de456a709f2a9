//! Moving a batch of consents off the sidechain: lock against a main-chain
//! anchor, then finalize with proof that the batch sits in a sidechain block.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::chain::Chain;
use super::SidechainError;
use crate::fingerprint::AnchorReceipt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitTicket {
    pub batch_id: Uuid,
    pub batch_root: String,
    pub lock_receipt: AnchorReceipt,
    pub locked_at_height: u64,
}

/// Where a batch root was recorded on the sidechain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidechainInclusion {
    pub height: u64,
    pub block_hash: String,
}

impl SidechainInclusion {
    pub fn find(chain: &Chain, batch_root: &str) -> Option<SidechainInclusion> {
        chain
            .blocks()
            .iter()
            .find(|b| b.extra_data.as_deref().is_some_and(|x| x.eq_ignore_ascii_case(batch_root)))
            .map(|b| SidechainInclusion {
                height: b.height,
                block_hash: b.block_hash.clone(),
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitRegistry {
    locked: BTreeMap<Uuid, ExitTicket>,
    exited: BTreeSet<Uuid>,
}

impl ExitRegistry {
    pub fn is_locked(&self, batch_id: &Uuid) -> bool {
        self.locked.contains_key(batch_id)
    }

    pub fn has_exited(&self, batch_id: &Uuid) -> bool {
        self.exited.contains(batch_id)
    }
}

pub fn lock_for_exit(
    registry: &mut ExitRegistry,
    chain: &Chain,
    batch_id: Uuid,
    batch_root: &str,
    receipt: Option<&AnchorReceipt>,
) -> Result<ExitTicket, SidechainError> {
    if registry.exited.contains(&batch_id) {
        return Err(SidechainError::AlreadyExited(batch_id));
    }
    let receipt = receipt.ok_or_else(|| SidechainError::LockProof("no main-chain lock receipt".into()))?;
    if !receipt.anchored_root.eq_ignore_ascii_case(batch_root) || !receipt.is_well_formed() {
        return Err(SidechainError::LockProof("receipt does not anchor this batch".into()));
    }
    let ticket = ExitTicket {
        batch_id,
        batch_root: batch_root.to_ascii_lowercase(),
        lock_receipt: receipt.clone(),
        locked_at_height: chain.height(),
    };
    registry.locked.insert(batch_id, ticket.clone());
    Ok(ticket)
}

pub fn finalize_exit(
    registry: &mut ExitRegistry,
    chain: &Chain,
    ticket: &ExitTicket,
    inclusion: &SidechainInclusion,
) -> Result<(), SidechainError> {
    if registry.exited.contains(&ticket.batch_id) {
        return Err(SidechainError::AlreadyExited(ticket.batch_id));
    }
    if registry.locked.get(&ticket.batch_id) != Some(ticket) {
        return Err(SidechainError::LockProof("batch was never locked".into()));
    }
    let included = chain.block(inclusion.height).is_some_and(|b| {
        b.block_hash == inclusion.block_hash
            && b.extra_data.as_deref().is_some_and(|x| x.eq_ignore_ascii_case(&ticket.batch_root))
    });
    if !included {
        return Err(SidechainError::LockProof("batch root is not in the cited sidechain block".into()));
    }
    registry.locked.remove(&ticket.batch_id);
    registry.exited.insert(ticket.batch_id);
    Ok(())
}
