use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::contracts::{
    lease_check, ownership_transfer, proxy_call, register_changelink, Contract, ContractBody,
    LeaseAction, LeaseState, OwnershipState, ProxyState, RegisterState, RelayedCall, StorageState,
};
use super::SidechainError;
use crate::canonical::{is_hex_digest, sha256_hex, to_canonical_bytes};
use crate::consent::ConsentProof;

pub const ZERO_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxKind {
    EmbedProof,
    OwnershipTransfer,
    LeaseCreate,
    LeaseGrant,
    LeaseWithdraw,
    RegisterChangeLink,
    StoragePut,
    ProxyCall,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ProxyOp {
    /// Deploys the proxy when it does not exist yet.
    UpdateTarget { new_target: String },
    Relay { call: RelayedCall },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TxPayload {
    EmbedProof {
        agreement_hash_id: Uuid,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        linked_agreement_hash_id: Option<Uuid>,
        /// The digest the platform signed.
        proof_digest: String,
    },
    OwnershipTransfer {
        contract_id: String,
        new_owner: String,
    },
    LeaseCreate {
        lease_id: String,
        agreement_hash_id: Uuid,
        duration_days: u32,
    },
    LeaseGrant {
        lease_id: String,
    },
    LeaseWithdraw {
        lease_id: String,
    },
    /// Deploys the register when it does not exist yet.
    RegisterChangeLink {
        contract_id: String,
        new_link: Uuid,
    },
    /// Deploys the storage contract when it does not exist yet.
    StoragePut {
        contract_id: String,
        key: String,
        value: u64,
    },
    ProxyCall {
        contract_id: String,
        #[serde(flatten)]
        op: ProxyOp,
    },
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::EmbedProof { .. } => TxKind::EmbedProof,
            TxPayload::OwnershipTransfer { .. } => TxKind::OwnershipTransfer,
            TxPayload::LeaseCreate { .. } => TxKind::LeaseCreate,
            TxPayload::LeaseGrant { .. } => TxKind::LeaseGrant,
            TxPayload::LeaseWithdraw { .. } => TxKind::LeaseWithdraw,
            TxPayload::RegisterChangeLink { .. } => TxKind::RegisterChangeLink,
            TxPayload::StoragePut { .. } => TxKind::StoragePut,
            TxPayload::ProxyCall { .. } => TxKind::ProxyCall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tx {
    pub sender: String,
    pub payload: TxPayload,
    pub tx_hash: String,
}

#[derive(Serialize)]
struct TxBody<'a> {
    sender: &'a str,
    payload: &'a TxPayload,
}

impl Tx {
    pub fn new(sender: impl Into<String>, payload: TxPayload) -> Tx {
        let sender = sender.into();
        let tx_hash = Self::hash_of(&sender, &payload);
        Tx {
            sender,
            payload,
            tx_hash,
        }
    }

    fn hash_of(sender: &str, payload: &TxPayload) -> String {
        let bytes = to_canonical_bytes(&TxBody { sender, payload }).expect("tx serializes");
        sha256_hex(&bytes)
    }

    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    pub fn hash_is_valid(&self) -> bool {
        self.tx_hash == Self::hash_of(&self.sender, &self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_hash: String,
    /// Batch hash slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_data: Option<String>,
    pub transactions: Vec<Tx>,
    pub ntime: DateTime<Utc>,
    pub block_hash: String,
}

#[derive(Serialize)]
struct BlockBody<'a> {
    height: u64,
    parent_hash: &'a str,
    extra_data: &'a Option<String>,
    transactions: &'a [Tx],
    ntime: &'a DateTime<Utc>,
}

impl Block {
    pub fn compute_hash(&self) -> String {
        let body = BlockBody {
            height: self.height,
            parent_hash: &self.parent_hash,
            extra_data: &self.extra_data,
            transactions: &self.transactions,
            ntime: &self.ntime,
        };
        sha256_hex(&to_canonical_bytes(&body).expect("block serializes"))
    }

    fn seal(
        height: u64,
        parent_hash: String,
        extra_data: Option<String>,
        transactions: Vec<Tx>,
        ntime: DateTime<Utc>,
    ) -> Block {
        let mut b = Block {
            height,
            parent_hash,
            extra_data,
            transactions,
            ntime,
            block_hash: String::new(),
        };
        b.block_hash = b.compute_hash();
        b
    }

    pub fn genesis(ntime: DateTime<Utc>) -> Block {
        Block::seal(0, ZERO_HASH.to_owned(), None, Vec::new(), ntime)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRecord {
    pub height: u64,
    pub tx_hash: String,
    pub proof_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_agreement_hash_id: Option<Uuid>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub embeds: BTreeMap<Uuid, EmbedRecord>,
    pub contracts: BTreeMap<String, Contract>,
}

impl ChainState {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("state serializes")
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.canonical_bytes())
    }
}

/// Changes made by a block under assembly. Dropped on failure.
struct Staged<'a> {
    base: &'a ChainState,
    embeds: BTreeMap<Uuid, EmbedRecord>,
    contracts: BTreeMap<String, Contract>,
}

impl<'a> Staged<'a> {
    fn new(base: &'a ChainState) -> Self {
        Staged {
            base,
            embeds: BTreeMap::new(),
            contracts: BTreeMap::new(),
        }
    }

    fn has_embed(&self, id: &Uuid) -> bool {
        self.embeds.contains_key(id) || self.base.embeds.contains_key(id)
    }

    fn contract(&self, id: &str) -> Option<&Contract> {
        self.contracts.get(id).or_else(|| self.base.contracts.get(id))
    }

    fn existing(&self, id: &str) -> Result<Contract, SidechainError> {
        self.contract(id)
            .cloned()
            .ok_or_else(|| SidechainError::UnknownContract(id.to_owned()))
    }

    fn put(&mut self, contract: Contract) {
        self.contracts.insert(contract.id().to_owned(), contract);
    }
}

fn kind_error(contract_id: &str, expected: &'static str) -> SidechainError {
    SidechainError::ContractKind {
        contract_id: contract_id.to_owned(),
        expected,
    }
}

fn storage_key(key: &str) -> Result<String, SidechainError> {
    if is_hex_digest(key) {
        Ok(key.to_ascii_lowercase())
    } else {
        Err(SidechainError::InvalidPayload(format!("storage key must be 32 bytes of hex, got {key:?}")))
    }
}

/// Runs `call` against `target` on behalf of `caller`. Nothing is written
/// unless the call succeeds.
fn exec_call(
    staged: &mut Staged,
    target: &str,
    caller: &str,
    call: &RelayedCall,
    now: DateTime<Utc>,
) -> Result<(), SidechainError> {
    let mut contract = staged.existing(target)?;
    match (call, &mut contract.body) {
        (RelayedCall::LeaseGrant, ContractBody::Lease(lease)) => {
            if lease.withdrawn || !lease_check(lease, now, LeaseAction::Grant) {
                return Err(SidechainError::LeaseExpired(lease.lease_id.clone()));
            }
            lease.grants += 1;
        }
        (RelayedCall::LeaseWithdraw, ContractBody::Lease(lease)) => {
            contract.ownership.require_owner(caller)?;
            if !lease_check(lease, now, LeaseAction::Withdraw) {
                return Err(SidechainError::LeaseNotExpired(lease.lease_id.clone()));
            }
            lease.withdrawn = true;
        }
        (RelayedCall::RegisterChangeLink { new_link }, ContractBody::Register(reg)) => {
            contract.ownership.require_owner(caller)?;
            *reg = register_changelink(reg, *new_link).0;
        }
        (RelayedCall::StoragePut { key, value }, ContractBody::Storage(storage)) => {
            contract.ownership.require_owner(caller)?;
            storage.map.insert(storage_key(key)?, *value);
        }
        (RelayedCall::LeaseGrant | RelayedCall::LeaseWithdraw, _) => return Err(kind_error(target, "lease")),
        (RelayedCall::RegisterChangeLink { .. }, _) => return Err(kind_error(target, "register")),
        (RelayedCall::StoragePut { .. }, _) => return Err(kind_error(target, "storage")),
    }
    staged.put(contract);
    Ok(())
}

fn apply_tx(staged: &mut Staged, tx: &Tx, height: u64, now: DateTime<Utc>) -> Result<(), SidechainError> {
    if !tx.hash_is_valid() {
        return Err(SidechainError::InvalidPayload("tx_hash does not match contents".into()));
    }
    let sender = tx.sender.as_str();
    match &tx.payload {
        TxPayload::EmbedProof {
            agreement_hash_id,
            linked_agreement_hash_id,
            proof_digest,
        } => {
            if !is_hex_digest(proof_digest) {
                return Err(SidechainError::InvalidPayload("proof digest must be 64 hex characters".into()));
            }
            if staged.has_embed(agreement_hash_id) {
                return Err(SidechainError::DuplicateEmbed(*agreement_hash_id));
            }
            staged.embeds.insert(
                *agreement_hash_id,
                EmbedRecord {
                    height,
                    tx_hash: tx.tx_hash.clone(),
                    proof_digest: proof_digest.to_ascii_lowercase(),
                    linked_agreement_hash_id: *linked_agreement_hash_id,
                },
            );
        }
        TxPayload::OwnershipTransfer {
            contract_id,
            new_owner,
        } => {
            let mut c = staged.existing(contract_id)?;
            c.ownership = ownership_transfer(&c.ownership, sender, new_owner, height)?;
            staged.put(c);
        }
        TxPayload::LeaseCreate {
            lease_id,
            agreement_hash_id,
            duration_days,
        } => {
            if staged.contract(lease_id).is_some() {
                return Err(SidechainError::DuplicateContract(lease_id.clone()));
            }
            if *duration_days == 0 {
                return Err(SidechainError::InvalidPayload("lease duration must be at least one day".into()));
            }
            staged.put(Contract {
                ownership: OwnershipState::new(lease_id.clone(), sender),
                body: ContractBody::Lease(LeaseState::new(lease_id.clone(), *agreement_hash_id, *duration_days, now)),
            });
        }
        TxPayload::LeaseGrant { lease_id } => exec_call(staged, lease_id, sender, &RelayedCall::LeaseGrant, now)?,
        TxPayload::LeaseWithdraw { lease_id } => {
            exec_call(staged, lease_id, sender, &RelayedCall::LeaseWithdraw, now)?
        }
        TxPayload::RegisterChangeLink {
            contract_id,
            new_link,
        } => match staged.contract(contract_id) {
            Some(_) => exec_call(
                staged,
                contract_id,
                sender,
                &RelayedCall::RegisterChangeLink { new_link: *new_link },
                now,
            )?,
            None => staged.put(Contract {
                ownership: OwnershipState::new(contract_id.clone(), sender),
                body: ContractBody::Register(RegisterState {
                    contract_id: contract_id.clone(),
                    linked_contract: *new_link,
                    previous_links: Vec::new(),
                }),
            }),
        },
        TxPayload::StoragePut {
            contract_id,
            key,
            value,
        } => match staged.contract(contract_id) {
            Some(_) => exec_call(
                staged,
                contract_id,
                sender,
                &RelayedCall::StoragePut {
                    key: key.clone(),
                    value: *value,
                },
                now,
            )?,
            None => staged.put(Contract {
                ownership: OwnershipState::new(contract_id.clone(), sender),
                body: ContractBody::Storage(StorageState {
                    contract_id: contract_id.clone(),
                    map: BTreeMap::from([(storage_key(key)?, *value)]),
                }),
            }),
        },
        TxPayload::ProxyCall { contract_id, op } => match op {
            ProxyOp::UpdateTarget { new_target } => {
                if staged.contract(new_target).is_none() {
                    return Err(SidechainError::UnknownContract(new_target.clone()));
                }
                match staged.contract(contract_id).cloned() {
                    None => staged.put(Contract {
                        ownership: OwnershipState::new(contract_id.clone(), sender),
                        body: ContractBody::Proxy(ProxyState {
                            contract_id: contract_id.clone(),
                            curr_ver: new_target.clone(),
                            call_log: Vec::new(),
                        }),
                    }),
                    Some(mut c) => {
                        c.ownership.require_owner(sender)?;
                        let ContractBody::Proxy(proxy) = &mut c.body else {
                            return Err(kind_error(contract_id, "proxy"));
                        };
                        proxy.curr_ver = new_target.clone();
                        staged.put(c);
                    }
                }
            }
            ProxyOp::Relay { call } => {
                let mut c = staged.existing(contract_id)?;
                let ContractBody::Proxy(proxy) = &c.body else {
                    return Err(kind_error(contract_id, "proxy"));
                };
                let (mut next, target) = proxy_call(proxy, sender, &tx.tx_hash, height);
                if let Err(e) = exec_call(staged, &target, sender, call, now) {
                    next.call_log.last_mut().expect("entry just logged").error = Some(e.to_string());
                }
                c.body = ContractBody::Proxy(next);
                staged.put(c);
            }
        },
    }
    Ok(())
}

/// The local chain and the contract state its blocks produce.
#[derive(Debug, Clone)]
pub struct Chain {
    blocks: Vec<Block>,
    state: ChainState,
}

impl Chain {
    pub fn new(genesis_time: DateTime<Utc>) -> Chain {
        Chain {
            blocks: vec![Block::genesis(genesis_time)],
            state: ChainState::default(),
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("chain has a genesis block")
    }

    pub fn height(&self) -> u64 {
        self.head().height
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn contract(&self, id: &str) -> Option<&Contract> {
        self.state.contracts.get(id)
    }

    pub fn lookup(&self, agreement_hash_id: &Uuid) -> Option<&EmbedRecord> {
        self.state.embeds.get(agreement_hash_id)
    }

    pub fn embed_tx(&self, agreement_hash_id: &Uuid) -> Option<(&Block, &Tx)> {
        let rec = self.lookup(agreement_hash_id)?;
        let block = self.block(rec.height)?;
        let tx = block.transactions.iter().find(|t| t.tx_hash == rec.tx_hash)?;
        Some((block, tx))
    }

    fn stage<'a>(&'a self, txs: &[Tx], height: u64, now: DateTime<Utc>) -> Result<Staged<'a>, SidechainError> {
        let parent = self.head();
        if now < parent.ntime {
            return Err(SidechainError::BlockTime {
                now,
                parent: parent.ntime,
            });
        }
        let mut staged = Staged::new(&self.state);
        for (index, tx) in txs.iter().enumerate() {
            apply_tx(&mut staged, tx, height, now).map_err(|e| SidechainError::TxValidation {
                index,
                source: Box::new(e),
            })?;
        }
        Ok(staged)
    }

    /// Check that `txs` would apply on top of the current head.
    pub fn validate_txs(&self, txs: &[Tx], now: DateTime<Utc>) -> Result<(), SidechainError> {
        self.stage(txs, self.height() + 1, now).map(|_| ())
    }

    pub fn append_block(&mut self, txs: Vec<Tx>, now: DateTime<Utc>) -> Result<&Block, SidechainError> {
        self.append_block_with_extra(txs, now, None)
    }

    /// Apply every transaction or none of them, then seal the block.
    pub fn append_block_with_extra(
        &mut self,
        txs: Vec<Tx>,
        now: DateTime<Utc>,
        extra_data: Option<String>,
    ) -> Result<&Block, SidechainError> {
        let height = self.height() + 1;
        let staged = self.stage(&txs, height, now)?;
        let Staged { embeds, contracts, .. } = staged;
        self.state.embeds.extend(embeds);
        self.state.contracts.extend(contracts);
        let block = Block::seal(height, self.head().block_hash.clone(), extra_data, txs, now);
        self.blocks.push(block);
        Ok(self.head())
    }

    /// Append an externally produced block after checking its links and
    /// re-executing its transactions.
    pub fn import_block(&mut self, block: Block) -> Result<(), SidechainError> {
        let parent = self.head();
        let integrity = |reason: &str| SidechainError::Integrity {
            height: block.height,
            reason: reason.to_owned(),
        };
        if block.height != parent.height + 1 {
            return Err(integrity("height does not follow parent"));
        }
        if block.parent_hash != parent.block_hash {
            return Err(integrity("parent hash mismatch"));
        }
        if block.block_hash != block.compute_hash() {
            return Err(integrity("block hash does not recompute"));
        }
        let staged = self.stage(&block.transactions, block.height, block.ntime)?;
        let Staged { embeds, contracts, .. } = staged;
        self.state.embeds.extend(embeds);
        self.state.contracts.extend(contracts);
        self.blocks.push(block);
        Ok(())
    }

    /// Rebuild a chain and its state from genesis by re-executing every block.
    pub fn replay(blocks: &[Block]) -> Result<Chain, SidechainError> {
        let genesis = blocks.first().ok_or(SidechainError::Integrity {
            height: 0,
            reason: "no genesis block".into(),
        })?;
        if *genesis != Block::genesis(genesis.ntime) {
            return Err(SidechainError::Integrity {
                height: 0,
                reason: "malformed genesis block".into(),
            });
        }
        let mut chain = Chain::new(genesis.ntime);
        for b in &blocks[1..] {
            chain.import_block(b.clone())?;
        }
        Ok(chain)
    }

    /// Recompute every block hash and parent link.
    pub fn audit(&self) -> Result<(), SidechainError> {
        audit_blocks(&self.blocks)
    }

    /// The chain cut back to `height`, with state rebuilt.
    pub fn truncated(&self, height: u64) -> Result<Chain, SidechainError> {
        let end = (height as usize + 1).min(self.blocks.len());
        Chain::replay(&self.blocks[..end])
    }

    pub fn append_jsonl(path: &Path, block: &Block) -> Result<(), SidechainError> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = to_canonical_bytes(block)?;
        line.push(b'\n');
        f.write_all(&line)?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), SidechainError> {
        let mut f = File::create(path)?;
        for b in &self.blocks {
            let mut line = to_canonical_bytes(b)?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Chain, SidechainError> {
        let mut blocks = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                blocks.push(serde_json::from_str(&line)?);
            }
        }
        Chain::replay(&blocks)
    }
}

pub(super) fn audit_blocks(blocks: &[Block]) -> Result<(), SidechainError> {
    for (i, b) in blocks.iter().enumerate() {
        let fail = |reason: &str| {
            Err(SidechainError::Integrity {
                height: b.height,
                reason: reason.to_owned(),
            })
        };
        if b.height != i as u64 {
            return fail("height out of sequence");
        }
        if b.block_hash != b.compute_hash() {
            return fail("block hash does not recompute");
        }
        let expected_parent = if i == 0 { ZERO_HASH } else { blocks[i - 1].block_hash.as_str() };
        if b.parent_hash != expected_parent {
            return fail("parent hash mismatch");
        }
    }
    Ok(())
}

pub fn append_block(chain: &mut Chain, txs: Vec<Tx>, now: DateTime<Utc>) -> Result<Block, SidechainError> {
    chain.append_block(txs, now).cloned()
}

/// The embed transaction for a platform-signed proof.
pub fn embed_proof(chain: &Chain, proof: &ConsentProof, sender: &str) -> Result<Tx, SidechainError> {
    proof
        .validate()
        .map_err(|e| SidechainError::InvalidProof(e.to_string()))?;
    let signature = proof
        .platform_signature
        .as_ref()
        .ok_or_else(|| SidechainError::InvalidProof("proof lacks a platform signature".into()))?;
    if chain.lookup(&proof.agreement_hash_id).is_some() {
        return Err(SidechainError::DuplicateEmbed(proof.agreement_hash_id));
    }
    Ok(Tx::new(
        sender,
        TxPayload::EmbedProof {
            agreement_hash_id: proof.agreement_hash_id,
            linked_agreement_hash_id: proof.linked_agreement_hash_id,
            proof_digest: signature.signed_digest.clone(),
        },
    ))
}
