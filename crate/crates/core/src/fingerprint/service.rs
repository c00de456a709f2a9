use std::collections::{BTreeMap, VecDeque};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::mainchain::{verify_receipt, AnchorReceipt, MainChainKind, MainChainSim, ReceiptStatus};
use super::merkle::{build_batch_hash, prove_inclusion, verify_inclusion, Batch, BatchHash, BatchTrigger, InclusionPath};
use super::FingerprintError;
use crate::consent::OCONSENT_CONTEXT;
use crate::sidechain::{Chain, TxPayload};

pub const FINGERPRINT_PROOF_TYPE: &str = "OConsent - Fingerprint Proof";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePolicy {
    ByTime(#[serde(with = "secs")] Duration),
    ByVolume(usize),
}

mod secs {
    use chrono::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(d.num_seconds())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::seconds(i64::deserialize(d)?))
    }
}

/// Leaves waiting for a batch, in arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingQueue {
    items: VecDeque<String>,
    last_emit: DateTime<Utc>,
}

impl PendingQueue {
    pub fn new(now: DateTime<Utc>) -> Self {
        PendingQueue {
            items: VecDeque::new(),
            last_emit: now,
        }
    }

    /// Returns false if the leaf is already queued.
    pub fn push(&mut self, leaf: &str) -> bool {
        let leaf = leaf.to_ascii_lowercase();
        if self.items.contains(&leaf) {
            return false;
        }
        self.items.push_back(leaf);
        true
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, leaf: &str) -> bool {
        self.items.iter().any(|l| l.eq_ignore_ascii_case(leaf))
    }

    fn drain(&mut self, n: usize, now: DateTime<Utc>, trigger: BatchTrigger) -> Option<Batch> {
        let leaves: Vec<String> = self.items.drain(..n.min(self.items.len())).collect();
        self.last_emit = now;
        Some(Batch::new(leaves, now, trigger).expect("queued leaves are valid and distinct"))
    }

    /// Batch everything queued, regardless of policy.
    pub fn flush(&mut self, now: DateTime<Utc>) -> Option<Batch> {
        if self.items.is_empty() {
            return None;
        }
        self.drain(self.items.len(), now, BatchTrigger::Manual)
    }
}

/// Emit at most one batch if the policy fires.
pub fn schedule_tick(policy: SchedulePolicy, pending: &mut PendingQueue, now: DateTime<Utc>) -> Option<Batch> {
    match policy {
        SchedulePolicy::ByVolume(count) => {
            let count = count.max(1);
            (pending.len() >= count).then(|| pending.drain(count, now, BatchTrigger::ByVolume))?
        }
        SchedulePolicy::ByTime(period) => {
            if pending.is_empty() || now - pending.last_emit < period {
                return None;
            }
            pending.drain(pending.len(), now, BatchTrigger::ByTime)
        }
    }
}

pub fn anchor(root: &str, chain: &mut MainChainSim, wait_confirmations: u64) -> Result<AnchorReceipt, FingerprintError> {
    chain.anchor(root, wait_confirmations)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: Batch,
    pub hash: BatchHash,
    pub receipts: Vec<AnchorReceipt>,
    /// Sidechain block whose extra data carries the root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidechain_height: Option<u64>,
}

impl BatchRecord {
    fn anchored_on(&self) -> Vec<MainChainKind> {
        let mut kinds: Vec<_> = self.receipts.iter().map(|r| r.chain).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidechainRef {
    pub height: u64,
    pub block_hash: String,
    pub embed_tx_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_commit_height: Option<u64>,
}

/// The reconciliation document: agreement digest → sidechain block →
/// batch leaf → Merkle path → main-chain receipts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintProofDoc {
    #[serde(rename = "@context")]
    pub context_uri: String,
    #[serde(rename = "type")]
    pub doc_type: String,
    pub agreement_hash_id: Uuid,
    pub proof_digest: String,
    pub sidechain: SidechainRef,
    pub leaf_hash: String,
    pub batch_id: Uuid,
    pub batch_root: String,
    pub inclusion_path: InclusionPath,
    pub anchor_receipts: Vec<AnchorReceipt>,
    #[serde(rename = "URIs")]
    pub uris: Vec<String>,
    /// Set when the batch is anchored on only one main chain.
    #[serde(default)]
    pub partial_anchor: bool,
}

/// Batches, their anchors and the queue feeding them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintService {
    queue: PendingQueue,
    batches: BTreeMap<Uuid, BatchRecord>,
    leaf_to_batch: BTreeMap<String, Uuid>,
}

impl FingerprintService {
    pub fn new(now: DateTime<Utc>) -> Self {
        FingerprintService {
            queue: PendingQueue::new(now),
            batches: BTreeMap::new(),
            leaf_to_batch: BTreeMap::new(),
        }
    }

    /// Queue a leaf unless it is already queued or batched.
    pub fn enqueue(&mut self, leaf: &str) -> Result<bool, FingerprintError> {
        if !crate::canonical::is_hex_digest(leaf) {
            return Err(FingerprintError::InvalidLeaf(leaf.to_owned()));
        }
        if self.leaf_to_batch.contains_key(&leaf.to_ascii_lowercase()) {
            return Ok(false);
        }
        Ok(self.queue.push(leaf))
    }

    pub fn pending(&self) -> &PendingQueue {
        &self.queue
    }

    pub fn tick(&mut self, policy: SchedulePolicy, now: DateTime<Utc>) -> Result<Option<Uuid>, FingerprintError> {
        match schedule_tick(policy, &mut self.queue, now) {
            Some(batch) => Ok(Some(self.register_batch(batch)?)),
            None => Ok(None),
        }
    }

    pub fn flush(&mut self, now: DateTime<Utc>) -> Result<Option<Uuid>, FingerprintError> {
        match self.queue.flush(now) {
            Some(batch) => Ok(Some(self.register_batch(batch)?)),
            None => Ok(None),
        }
    }

    pub fn register_batch(&mut self, batch: Batch) -> Result<Uuid, FingerprintError> {
        if let Some(dup) = batch.leaf_hashes.iter().find(|l| self.leaf_to_batch.contains_key(*l)) {
            return Err(FingerprintError::DuplicateLeaf(dup.clone()));
        }
        let hash = build_batch_hash(&batch.leaf_hashes)?;
        let id = batch.batch_id;
        for leaf in &batch.leaf_hashes {
            self.leaf_to_batch.insert(leaf.clone(), id);
        }
        self.batches.insert(
            id,
            BatchRecord {
                batch,
                hash,
                receipts: Vec::new(),
                sidechain_height: None,
            },
        );
        Ok(id)
    }

    pub fn batch(&self, id: &Uuid) -> Option<&BatchRecord> {
        self.batches.get(id)
    }

    pub fn batches(&self) -> impl Iterator<Item = &BatchRecord> {
        self.batches.values()
    }

    pub fn batch_for_leaf(&self, leaf: &str) -> Option<&BatchRecord> {
        self.leaf_to_batch
            .get(&leaf.to_ascii_lowercase())
            .and_then(|id| self.batches.get(id))
    }

    pub fn anchor_batch(
        &mut self,
        id: &Uuid,
        sim: &mut MainChainSim,
        wait_confirmations: u64,
    ) -> Result<AnchorReceipt, FingerprintError> {
        let record = self.batches.get_mut(id).ok_or(FingerprintError::UnknownBatch(*id))?;
        let receipt = sim.anchor(&record.hash.root, wait_confirmations)?;
        record.receipts.push(receipt.clone());
        Ok(receipt)
    }

    /// Record the root in the extra data of a new sidechain block.
    pub fn commit_to_sidechain(
        &mut self,
        id: &Uuid,
        chain: &mut Chain,
        now: DateTime<Utc>,
    ) -> Result<u64, FingerprintError> {
        let record = self.batches.get_mut(id).ok_or(FingerprintError::UnknownBatch(*id))?;
        let height = chain
            .append_block_with_extra(Vec::new(), now, Some(record.hash.root.clone()))?
            .height;
        record.sidechain_height = Some(height);
        Ok(height)
    }

    pub fn reconcile(&self, agreement_hash_id: &Uuid, chain: &Chain) -> Result<FingerprintProofDoc, FingerprintError> {
        reconcile(self, chain, agreement_hash_id)
    }
}

pub fn reconcile(
    service: &FingerprintService,
    chain: &Chain,
    agreement_hash_id: &Uuid,
) -> Result<FingerprintProofDoc, FingerprintError> {
    let not_anchored = || FingerprintError::NotAnchored(*agreement_hash_id);
    let (block, tx) = chain.embed_tx(agreement_hash_id).ok_or_else(not_anchored)?;
    let TxPayload::EmbedProof { proof_digest, .. } = &tx.payload else {
        return Err(not_anchored());
    };
    let (leaf, record) = [proof_digest, &block.block_hash]
        .into_iter()
        .find_map(|leaf| service.batch_for_leaf(leaf).map(|r| (leaf.clone(), r)))
        .ok_or_else(not_anchored)?;
    if record.receipts.is_empty() {
        return Err(not_anchored());
    }
    let path = prove_inclusion(&record.batch, &leaf)?;
    let mut uris = vec![format!("oconsent://block/{}", block.height)];
    if let Some(h) = record.sidechain_height {
        uris.push(format!("oconsent://block/{h}"));
    }
    uris.extend(record.receipts.iter().map(|r| r.uri()));
    let partial = record.anchored_on().len() < 2;
    let doc = FingerprintProofDoc {
        context_uri: OCONSENT_CONTEXT.to_owned(),
        doc_type: FINGERPRINT_PROOF_TYPE.to_owned(),
        agreement_hash_id: *agreement_hash_id,
        proof_digest: proof_digest.clone(),
        sidechain: SidechainRef {
            height: block.height,
            block_hash: block.block_hash.clone(),
            embed_tx_hash: tx.tx_hash.clone(),
            batch_commit_height: record.sidechain_height,
        },
        leaf_hash: leaf,
        batch_id: record.batch.batch_id,
        batch_root: record.hash.root.clone(),
        inclusion_path: path,
        anchor_receipts: record.receipts.clone(),
        uris,
        partial_anchor: partial,
    };
    if partial {
        log::warn!("agreement {agreement_hash_id} is anchored on one main chain only");
        return Err(FingerprintError::PartialAnchor(Box::new(doc)));
    }
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintVerification {
    pub inclusion_ok: bool,
    /// `None` when no sidechain copy was supplied.
    pub sidechain_ok: Option<bool>,
    pub receipts: Vec<(MainChainKind, ReceiptStatus)>,
    pub passed: bool,
}

/// Check a document against the sidechain (if given) and the main-chain
/// stores. Passes when the Merkle path holds, nothing contradicts the
/// document, and at least one main-chain receipt is confirmed.
pub fn verify_fingerprint_doc(
    doc: &FingerprintProofDoc,
    chain: Option<&Chain>,
    sims: &[&MainChainSim],
) -> FingerprintVerification {
    let leaf_ok = doc.leaf_hash.eq_ignore_ascii_case(&doc.proof_digest)
        || doc.leaf_hash.eq_ignore_ascii_case(&doc.sidechain.block_hash);
    let inclusion_ok = leaf_ok && verify_inclusion(&doc.batch_root, &doc.leaf_hash, &doc.inclusion_path);

    let sidechain_ok = chain.map(|chain| {
        let embed_ok = chain.block(doc.sidechain.height).is_some_and(|b| {
            b.block_hash == doc.sidechain.block_hash
                && b.transactions.iter().any(|t| {
                    t.tx_hash == doc.sidechain.embed_tx_hash
                        && matches!(&t.payload, TxPayload::EmbedProof { agreement_hash_id, proof_digest, .. }
                            if *agreement_hash_id == doc.agreement_hash_id
                                && proof_digest.eq_ignore_ascii_case(&doc.proof_digest))
                })
        });
        let commit_ok = doc.sidechain.batch_commit_height.is_none_or(|h| {
            chain
                .block(h)
                .and_then(|b| b.extra_data.as_deref())
                .is_some_and(|x| x.eq_ignore_ascii_case(&doc.batch_root))
        });
        chain.audit().is_ok() && embed_ok && commit_ok
    });

    let receipts: Vec<_> = doc
        .anchor_receipts
        .iter()
        .map(|r| {
            let status = if !r.anchored_root.eq_ignore_ascii_case(&doc.batch_root) {
                ReceiptStatus::Contradicted
            } else {
                sims.iter()
                    .find(|s| s.kind() == r.chain)
                    .map_or(ReceiptStatus::Unavailable, |s| verify_receipt(r, s))
            };
            (r.chain, status)
        })
        .collect();
    let any_verified = receipts.iter().any(|(_, s)| *s == ReceiptStatus::Verified);
    let any_contradicted = receipts.iter().any(|(_, s)| *s == ReceiptStatus::Contradicted);
    let passed = doc.doc_type == FINGERPRINT_PROOF_TYPE
        && inclusion_ok
        && sidechain_ok != Some(false)
        && any_verified
        && !any_contradicted;
    FingerprintVerification {
        inclusion_ok,
        sidechain_ok,
        receipts,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::canonical::sha256_hex;

    fn t0() -> DateTime<Utc> {
        "2024-01-01T00:00:00Z".parse().unwrap()
    }

    fn leaf(i: u64) -> String {
        sha256_hex(&i.to_be_bytes())
    }

    #[test]
    fn volume_policy_drains_in_fixed_sizes() {
        let mut q = PendingQueue::new(t0());
        for i in 0..9 {
            q.push(&leaf(i));
        }
        assert!(schedule_tick(SchedulePolicy::ByVolume(10), &mut q, t0()).is_none());
        for i in 9..23 {
            q.push(&leaf(i));
        }
        let b1 = schedule_tick(SchedulePolicy::ByVolume(10), &mut q, t0()).unwrap();
        let b2 = schedule_tick(SchedulePolicy::ByVolume(10), &mut q, t0()).unwrap();
        assert!(schedule_tick(SchedulePolicy::ByVolume(10), &mut q, t0()).is_none());
        assert_eq!((b1.leaf_hashes.len(), b2.leaf_hashes.len(), q.len()), (10, 10, 3));
        let oracle: Vec<String> = (0..20).map(leaf).collect();
        assert_eq!([b1.leaf_hashes, b2.leaf_hashes].concat(), oracle);
    }

    #[test]
    fn time_policy_fires_after_period() {
        let mut q = PendingQueue::new(t0());
        q.push(&leaf(1));
        let policy = SchedulePolicy::ByTime(Duration::seconds(60));
        assert!(schedule_tick(policy, &mut q, t0() + Duration::seconds(59)).is_none());
        let b = schedule_tick(policy, &mut q, t0() + Duration::seconds(61)).unwrap();
        assert_eq!(b.leaf_hashes, vec![leaf(1)]);
        assert_eq!(b.trigger, BatchTrigger::ByTime);
        assert!(schedule_tick(policy, &mut q, t0() + Duration::seconds(200)).is_none());
    }

    #[test]
    fn randomized_schedules_batch_every_leaf_once() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for run in 0..50 {
            let mut svc = FingerprintService::new(t0());
            let mut now = t0();
            let total = rng.gen_range(1..300u64);
            let mut next = 0u64;
            while next < total {
                for _ in 0..rng.gen_range(0..20) {
                    if next < total {
                        assert!(svc.enqueue(&leaf(next)).unwrap());
                        next += 1;
                    }
                }
                // Re-submitting an already seen leaf never duplicates it.
                if next > 0 {
                    assert!(!svc.enqueue(&leaf(rng.gen_range(0..next))).unwrap());
                }
                now += Duration::seconds(rng.gen_range(0..90));
                let policy = if rng.gen_bool(0.5) {
                    SchedulePolicy::ByVolume(rng.gen_range(1..30))
                } else {
                    SchedulePolicy::ByTime(Duration::seconds(rng.gen_range(1..120)))
                };
                svc.tick(policy, now).unwrap();
            }
            svc.flush(now).unwrap();
            let mut seen: Vec<String> = svc.batches().flat_map(|b| b.batch.leaf_hashes.clone()).collect();
            seen.sort();
            let mut expected: Vec<String> = (0..total).map(leaf).collect();
            expected.sort();
            assert_eq!(seen, expected, "run {run}");
            assert!(svc.pending().is_empty());
        }
    }

    #[test]
    fn duplicate_registration_is_rejected() {
        let mut svc = FingerprintService::new(t0());
        svc.register_batch(Batch::new(vec![leaf(1), leaf(2)], t0(), BatchTrigger::Manual).unwrap())
            .unwrap();
        assert!(matches!(
            svc.register_batch(Batch::new(vec![leaf(2)], t0(), BatchTrigger::Manual).unwrap()),
            Err(FingerprintError::DuplicateLeaf(_))
        ));
        assert!(!svc.enqueue(&leaf(1)).unwrap());
    }
}
