//! Minimal main-chain simulators: fixed-interval blocks, one carrier field
//! per transaction, and an append-only JSONL store.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::FingerprintError;
use crate::canonical::{is_hex, sha256_hex, to_canonical_bytes};
use crate::sidechain::ZERO_HASH;

pub const OP_RETURN_MAX_BYTES: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MainChainKind {
    BitcoinSim,
    EthereumSim,
}

impl MainChainKind {
    pub fn carrier(self) -> CarrierField {
        match self {
            MainChainKind::BitcoinSim => CarrierField::OpReturn,
            MainChainKind::EthereumSim => CarrierField::ExtraData,
        }
    }

    pub fn block_interval(self) -> Duration {
        match self {
            MainChainKind::BitcoinSim => Duration::minutes(10),
            MainChainKind::EthereumSim => Duration::seconds(13),
        }
    }

    pub fn store_name(self) -> &'static str {
        match self {
            MainChainKind::BitcoinSim => "btc.jsonl",
            MainChainKind::EthereumSim => "eth.jsonl",
        }
    }

    fn uri_scheme(self) -> &'static str {
        match self {
            MainChainKind::BitcoinSim => "btcsim",
            MainChainKind::EthereumSim => "ethsim",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CarrierField {
    OpReturn,
    ExtraData,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTx {
    pub tx_id: String,
    pub carrier_field: CarrierField,
    /// Hex payload of the carrier field.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimBlock {
    pub height: u64,
    pub parent_hash: String,
    pub time: DateTime<Utc>,
    pub txs: Vec<SimTx>,
    pub block_hash: String,
}

#[derive(Serialize)]
struct SimBlockBody<'a> {
    height: u64,
    parent_hash: &'a str,
    time: &'a DateTime<Utc>,
    txs: &'a [SimTx],
}

impl SimBlock {
    pub fn compute_hash(&self) -> String {
        let body = SimBlockBody {
            height: self.height,
            parent_hash: &self.parent_hash,
            time: &self.time,
            txs: &self.txs,
        };
        sha256_hex(&to_canonical_bytes(&body).expect("sim block serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorReceipt {
    pub chain: MainChainKind,
    pub tx_id: String,
    pub carrier_field: CarrierField,
    pub anchored_root: String,
    pub confirmations: u64,
    pub anchor_block_hash: String,
    pub anchor_height: u64,
}

impl AnchorReceipt {
    pub fn uri(&self) -> String {
        format!("{}://tx/{}", self.chain.uri_scheme(), self.tx_id)
    }

    /// The carrier field matches the chain.
    pub fn is_well_formed(&self) -> bool {
        self.carrier_field == self.chain.carrier()
    }
}

pub struct MainChainSim {
    kind: MainChainKind,
    blocks: Vec<SimBlock>,
    genesis_time: DateTime<Utc>,
    tx_counter: u64,
    /// Blocks the sim may still produce; `None` is unlimited.
    budget: Option<u64>,
    store: Option<PathBuf>,
}

impl MainChainSim {
    pub fn new(kind: MainChainKind, genesis_time: DateTime<Utc>) -> Self {
        MainChainSim {
            kind,
            blocks: Vec::new(),
            genesis_time,
            tx_counter: 0,
            budget: None,
            store: None,
        }
    }

    /// Open (or create) the JSONL store for `kind` in `dir`.
    pub fn open(kind: MainChainKind, dir: &Path, genesis_time: DateTime<Utc>) -> Result<Self, FingerprintError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(kind.store_name());
        let mut sim = MainChainSim::new(kind, genesis_time);
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    sim.blocks.push(serde_json::from_str(&line)?);
                }
            }
            sim.audit()?;
            sim.tx_counter = sim.blocks.iter().map(|b| b.txs.len() as u64).sum();
        }
        sim.store = Some(path);
        Ok(sim)
    }

    pub fn kind(&self) -> MainChainKind {
        self.kind
    }

    pub fn blocks(&self) -> &[SimBlock] {
        &self.blocks
    }

    pub fn tip_height(&self) -> Option<u64> {
        self.blocks.last().map(|b| b.height)
    }

    /// Stop producing blocks after `remaining` more; `None` resumes.
    pub fn halt_after(&mut self, remaining: Option<u64>) {
        self.budget = remaining;
    }

    /// Forget every block, including the on-disk store.
    pub fn wipe(&mut self) -> Result<(), FingerprintError> {
        self.blocks.clear();
        if let Some(path) = &self.store {
            if path.exists() {
                fs::remove_file(path)?;
            }
        }
        Ok(())
    }

    fn next_time(&self) -> DateTime<Utc> {
        match self.blocks.last() {
            Some(b) => b.time + self.kind.block_interval(),
            None => self.genesis_time,
        }
    }

    pub fn mine_block(&mut self, txs: Vec<SimTx>) -> Result<&SimBlock, FingerprintError> {
        if let Some(budget) = &mut self.budget {
            if *budget == 0 {
                return Err(FingerprintError::ConfirmationTimeout {
                    chain: self.kind,
                    wanted: 1,
                    got: 0,
                });
            }
            *budget -= 1;
        }
        let (height, parent_hash) = match self.blocks.last() {
            Some(b) => (b.height + 1, b.block_hash.clone()),
            None => (0, ZERO_HASH.to_owned()),
        };
        let mut block = SimBlock {
            height,
            parent_hash,
            time: self.next_time(),
            txs,
            block_hash: String::new(),
        };
        block.block_hash = block.compute_hash();
        if let Some(path) = &self.store {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = to_canonical_bytes(&block)?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        self.blocks.push(block);
        Ok(self.blocks.last().expect("just pushed"))
    }

    fn carrier_tx(&mut self, data: &str) -> Result<SimTx, FingerprintError> {
        if !is_hex(data) {
            return Err(FingerprintError::InvalidLeaf(data.to_owned()));
        }
        let carrier_field = self.kind.carrier();
        if carrier_field == CarrierField::OpReturn && data.len() / 2 > OP_RETURN_MAX_BYTES {
            return Err(FingerprintError::CarrierTooLarge(data.len() / 2));
        }
        self.tx_counter += 1;
        let tx_id = sha256_hex(format!("{:?}:{}:{}", self.kind, self.tx_counter, data).as_bytes());
        Ok(SimTx {
            tx_id,
            carrier_field,
            data: data.to_ascii_lowercase(),
        })
    }

    pub fn find_tx(&self, tx_id: &str) -> Option<(&SimBlock, &SimTx)> {
        self.blocks
            .iter()
            .find_map(|b| b.txs.iter().find(|t| t.tx_id == tx_id).map(|t| (b, t)))
    }

    /// Place `root` in the carrier field, mine it, then wait for
    /// `wait_confirmations` further blocks.
    pub fn anchor(&mut self, root: &str, wait_confirmations: u64) -> Result<AnchorReceipt, FingerprintError> {
        let tx = self.carrier_tx(root)?;
        let tx_id = tx.tx_id.clone();
        let kind = self.kind;
        let block = self
            .mine_block(vec![tx])
            .map_err(|_| FingerprintError::ConfirmationTimeout {
                chain: kind,
                wanted: wait_confirmations,
                got: 0,
            })?;
        let (anchor_height, anchor_block_hash) = (block.height, block.block_hash.clone());
        for got in 0..wait_confirmations {
            if self.mine_block(Vec::new()).is_err() {
                return Err(FingerprintError::ConfirmationTimeout {
                    chain: self.kind,
                    wanted: wait_confirmations,
                    got,
                });
            }
        }
        Ok(AnchorReceipt {
            chain: self.kind,
            tx_id,
            carrier_field: self.kind.carrier(),
            anchored_root: root.to_ascii_lowercase(),
            confirmations: wait_confirmations,
            anchor_block_hash,
            anchor_height,
        })
    }

    pub fn audit(&self) -> Result<(), FingerprintError> {
        for (i, b) in self.blocks.iter().enumerate() {
            let fail = |reason: &str| {
                Err(FingerprintError::StoreIntegrity {
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
            let parent = if i == 0 { ZERO_HASH } else { self.blocks[i - 1].block_hash.as_str() };
            if b.parent_hash != parent {
                return fail("parent hash mismatch");
            }
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn blocks_mut(&mut self) -> &mut Vec<SimBlock> {
        &mut self.blocks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiptStatus {
    Verified,
    /// The store has no data for the receipt (e.g. it was wiped).
    Unavailable,
    Contradicted,
}

pub fn verify_receipt(receipt: &AnchorReceipt, sim: &MainChainSim) -> ReceiptStatus {
    if receipt.chain != sim.kind() || !receipt.is_well_formed() {
        return ReceiptStatus::Contradicted;
    }
    if sim.tip_height().is_none_or(|tip| tip < receipt.anchor_height) {
        return ReceiptStatus::Unavailable;
    }
    if sim.audit().is_err() {
        return ReceiptStatus::Contradicted;
    }
    let block = &sim.blocks()[receipt.anchor_height as usize];
    let tip = sim.tip_height().expect("non-empty");
    let ok = block.block_hash == receipt.anchor_block_hash
        && tip - block.height >= receipt.confirmations
        && block.txs.iter().any(|t| {
            t.tx_id == receipt.tx_id
                && t.carrier_field == receipt.carrier_field
                && t.data.eq_ignore_ascii_case(&receipt.anchored_root)
        });
    if ok {
        ReceiptStatus::Verified
    } else {
        ReceiptStatus::Contradicted
    }
}
