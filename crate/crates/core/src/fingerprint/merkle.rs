use std::collections::HashSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use super::FingerprintError;
use crate::canonical::is_hex_digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchTrigger {
    ByTime,
    ByVolume,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: Uuid,
    pub leaf_hashes: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub trigger: BatchTrigger,
}

fn check_leaves(leaves: &[String]) -> Result<(), FingerprintError> {
    if leaves.is_empty() {
        return Err(FingerprintError::EmptyBatch);
    }
    let mut seen = HashSet::with_capacity(leaves.len());
    for leaf in leaves {
        if !is_hex_digest(leaf) {
            return Err(FingerprintError::InvalidLeaf(leaf.clone()));
        }
        if !seen.insert(leaf.to_ascii_lowercase()) {
            return Err(FingerprintError::DuplicateLeaf(leaf.clone()));
        }
    }
    Ok(())
}

impl Batch {
    pub fn new(
        leaf_hashes: Vec<String>,
        created_at: DateTime<Utc>,
        trigger: BatchTrigger,
    ) -> Result<Batch, FingerprintError> {
        check_leaves(&leaf_hashes)?;
        Ok(Batch {
            batch_id: Uuid::new_v4(),
            leaf_hashes: leaf_hashes.into_iter().map(|l| l.to_ascii_lowercase()).collect(),
            created_at,
            trigger,
        })
    }

    pub fn contains(&self, leaf: &str) -> bool {
        self.leaf_hashes.iter().any(|l| l.eq_ignore_ascii_case(leaf))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchHash {
    pub root: String,
    pub tree_depth: u32,
    pub leaf_count: u64,
}

type Node = [u8; 32];

fn leaf_bytes(leaf: &str) -> Node {
    let mut out = [0u8; 32];
    hex::decode_to_slice(leaf, &mut out).expect("leaf validated as hex digest");
    out
}

fn hash_leaf(leaf: &Node) -> Node {
    let mut h = Sha256::new();
    h.update([0x00]);
    h.update(leaf);
    h.finalize().into()
}

fn hash_inner(left: &Node, right: &Node) -> Node {
    let mut h = Sha256::new();
    h.update([0x01]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

/// SHA-256(0x00 || leaf) as hex.
pub fn leaf_node_hash(leaf: &str) -> Result<String, FingerprintError> {
    if !is_hex_digest(leaf) {
        return Err(FingerprintError::InvalidLeaf(leaf.to_owned()));
    }
    Ok(hex::encode(hash_leaf(&leaf_bytes(leaf))))
}

/// Every level of the tree, leaves first. An odd node is promoted unchanged.
fn levels(leaves: &[String]) -> Vec<Vec<Node>> {
    let mut levels = vec![leaves.iter().map(|l| hash_leaf(&leaf_bytes(l))).collect::<Vec<_>>()];
    while levels.last().expect("at least one level").len() > 1 {
        let prev = levels.last().expect("at least one level");
        let next = prev
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => hash_inner(l, r),
                [single] => *single,
                _ => unreachable!(),
            })
            .collect();
        levels.push(next);
    }
    levels
}

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

pub fn build_batch_hash(leaves: &[String]) -> Result<BatchHash, FingerprintError> {
    check_leaves(leaves)?;
    let levels = levels(leaves);
    Ok(BatchHash {
        root: hex::encode(levels.last().expect("non-empty")[0]),
        tree_depth: ceil_log2(leaves.len() as u64),
        leaf_count: leaves.len() as u64,
    })
}

/// Sibling hashes from leaf to root. Positions are implied by
/// `leaf_index` and `leaf_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionPath {
    pub leaf_index: u64,
    pub leaf_count: u64,
    pub siblings: Vec<String>,
}

pub fn prove_inclusion(batch: &Batch, leaf: &str) -> Result<InclusionPath, FingerprintError> {
    let index = batch
        .leaf_hashes
        .iter()
        .position(|l| l.eq_ignore_ascii_case(leaf))
        .ok_or_else(|| FingerprintError::LeafNotFound(leaf.to_owned()))?;
    let levels = levels(&batch.leaf_hashes);
    let mut siblings = Vec::new();
    let mut i = index;
    for level in &levels[..levels.len() - 1] {
        let sibling = if i % 2 == 1 { Some(i - 1) } else if i + 1 < level.len() { Some(i + 1) } else { None };
        if let Some(s) = sibling {
            siblings.push(hex::encode(level[s]));
        }
        i /= 2;
    }
    Ok(InclusionPath {
        leaf_index: index as u64,
        leaf_count: batch.leaf_hashes.len() as u64,
        siblings,
    })
}

pub fn verify_inclusion(root: &str, leaf: &str, path: &InclusionPath) -> bool {
    if !is_hex_digest(leaf) || path.leaf_index >= path.leaf_count {
        return false;
    }
    let mut siblings = path.siblings.iter();
    let mut node = hash_leaf(&leaf_bytes(leaf));
    let (mut i, mut n) = (path.leaf_index, path.leaf_count);
    while n > 1 {
        let has_sibling = i % 2 == 1 || i + 1 < n;
        if has_sibling {
            let Some(s) = siblings.next() else {
                return false;
            };
            let mut sib = [0u8; 32];
            if hex::decode_to_slice(s, &mut sib).is_err() {
                return false;
            }
            node = if i % 2 == 1 { hash_inner(&sib, &node) } else { hash_inner(&node, &sib) };
        }
        i /= 2;
        n = n.div_ceil(2);
    }
    siblings.next().is_none() && hex::encode(node).eq_ignore_ascii_case(root)
}
