use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::audit::{AuditEvent, AuditExport, AuditLog, AuditRecord, LeaseSnapshot};
use super::context::{draft_for_context, ConsentRequest, ContextOutcome, RejectReason};
use super::dak::{DakBody, DataAccessKey};
use super::{expiry_instant, FlowConfig, FlowError, FlowStep};
use crate::consent::{
    advance_lifecycle, build_proof, compute_agreement_hash, link_version, sign_agreement,
    verify_signed_agreement_hash, verify_seed, ConsentAgreement, ConsentProof, LifecycleEvent, LifecycleStage,
    LifecycleState, Party, ScopeEntry, VerifiedSeed, VersionLineage,
};
use crate::fingerprint::{
    AnchorReceipt, FingerprintProofDoc, FingerprintService, MainChainKind, MainChainSim,
};
use crate::identity::{Identity, KeyPair, Role, SignatureBundle};
use crate::ngac::{list_permissions, NodeKind, PolicyDoc, PolicyGraph};
use crate::sidechain::{embed_proof, lease_check, Chain, LeaseAction, ProxyOp, RelayedCall, Tx, TxPayload};
use crate::state_store::{InvalidationEvent, StateEntry, StateKey, StateStore};
use crate::timestamp::{request_timestamp, verify_timestamp, TimestampProvider};

/// The subject's answer to a consent template. There is no default: consent
/// is only given by an explicit `Accept`.
pub enum SubjectDecision<'a> {
    Accept { subject_key: &'a KeyPair },
    Decline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CreationOutcome {
    Created {
        agreement_hash_id: Uuid,
        version: String,
        height: u64,
        proof: Box<ConsentProof>,
    },
    Declined,
    Rejected {
        reason: RejectReason,
    },
}

/// The authoritative record of one agreement version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub agreement: ConsentAgreement,
    pub proof: ConsentProof,
    pub lifecycle: LifecycleState,
    pub seed_signature: SignatureBundle,
    pub signed_hash: String,
    /// First agreement of the lineage this version belongs to.
    pub root: Uuid,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub requester: String,
    pub agreement_hash_id: Uuid,
    pub purpose: String,
    pub ops: BTreeSet<String>,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DenialReason {
    UnknownAgreement,
    NotAuthorized,
    NotTransferable,
    Revoked,
    Superseded { head: Uuid },
    Inactive { stage: LifecycleStage },
    LeaseExpired,
    NothingRequested,
    PurposeNotConsented { purpose: String },
    OutOfScope { attribute: String },
    ScopeExpired { purpose: String },
    PolicyDenied { attribute: String, op: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum AccessOutcome {
    Granted { dak: Box<DataAccessKey> },
    Denied { reason: DenialReason },
}

impl AccessOutcome {
    pub fn is_granted(&self) -> bool {
        matches!(self, AccessOutcome::Granted { .. })
    }

    pub fn dak(&self) -> Option<&DataAccessKey> {
        match self {
            AccessOutcome::Granted { dak } => Some(dak),
            AccessOutcome::Denied { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSummary {
    pub batch_id: Uuid,
    pub root: String,
    pub leaves: usize,
    pub receipts: Vec<AnchorReceipt>,
    pub failures: Vec<String>,
    pub sidechain_height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofVerification {
    pub platform_signature: bool,
    pub timestamps: Vec<bool>,
    pub embedded: bool,
    /// Checked when the agreement is known to the platform.
    pub subject_signature: Option<bool>,
}

impl ProofVerification {
    pub fn passed(&self) -> bool {
        self.platform_signature
            && !self.timestamps.is_empty()
            && self.timestamps.iter().all(|t| *t)
            && self.embedded
            && self.subject_signature != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PartyRecord {
    identity: Identity,
    #[serde(with = "hex::serde")]
    public_key: Vec<u8>,
}

/// Everything besides the chains and the audit log, persisted as one file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Store {
    parties: BTreeMap<String, PartyRecord>,
    records: BTreeMap<Uuid, AgreementRecord>,
    lineages: BTreeMap<Uuid, VersionLineage>,
    /// `"subject|controller"` to lineage root.
    pairs: BTreeMap<String, Uuid>,
    revoked: BTreeSet<Uuid>,
    daks: BTreeMap<Uuid, BTreeSet<Uuid>>,
    voided: BTreeSet<Uuid>,
}

impl Store {
    fn lineage_of(&self, id: &Uuid) -> Option<&VersionLineage> {
        self.records.get(id).and_then(|r| self.lineages.get(&r.root))
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    store: Store,
    fingerprint: FingerprintService,
    policy: PolicyDoc,
}

fn pair_key(subject: &str, controller: &str) -> String {
    format!("{subject}|{controller}")
}

fn lease_id(agreement: &Uuid) -> String {
    format!("lease:{agreement}")
}

fn proxy_id(agreement: &Uuid) -> String {
    format!("proxy:{agreement}")
}

fn register_id(root: &Uuid) -> String {
    format!("register:{root}")
}

fn user_node(party: &str) -> String {
    format!("u:{party}")
}

fn object_node(attribute: &str) -> String {
    format!("o:{attribute}")
}

const POLICY_CLASS: &str = "pc:consent";

pub struct Platform {
    config: FlowConfig,
    key: KeyPair,
    providers: Vec<Box<dyn TimestampProvider>>,
    store: RwLock<Store>,
    chain: Mutex<Chain>,
    cache: StateStore,
    policy: RwLock<PolicyGraph>,
    audit: Mutex<AuditLog>,
    fingerprint: Mutex<FingerprintService>,
    btc: Mutex<MainChainSim>,
    eth: Mutex<MainChainSim>,
    /// Serializes operations per lineage.
    locks: Mutex<HashMap<Uuid, Arc<Mutex<()>>>>,
    creation: Mutex<()>,
    fault: Mutex<Option<FlowStep>>,
    stale_cache_reads: AtomicU64,
    data_dir: Option<PathBuf>,
}

impl Platform {
    pub fn new(
        key: KeyPair,
        providers: Vec<Box<dyn TimestampProvider>>,
        config: FlowConfig,
        genesis: DateTime<Utc>,
    ) -> Platform {
        Platform {
            config,
            key,
            providers,
            store: RwLock::new(Store::default()),
            chain: Mutex::new(Chain::new(genesis)),
            cache: StateStore::new(),
            policy: RwLock::new(PolicyGraph::new()),
            audit: Mutex::new(AuditLog::in_memory()),
            fingerprint: Mutex::new(FingerprintService::new(genesis)),
            btc: Mutex::new(MainChainSim::new(MainChainKind::BitcoinSim, genesis)),
            eth: Mutex::new(MainChainSim::new(MainChainKind::EthereumSim, genesis)),
            locks: Mutex::new(HashMap::new()),
            creation: Mutex::new(()),
            fault: Mutex::new(None),
            stale_cache_reads: AtomicU64::new(0),
            data_dir: None,
        }
    }

    /// Open a platform persisted in `dir`, or start a new one there. The
    /// cache starts cold and refills from the authoritative records.
    pub fn open(
        dir: impl AsRef<Path>,
        key: KeyPair,
        providers: Vec<Box<dyn TimestampProvider>>,
        config: FlowConfig,
        genesis: DateTime<Utc>,
    ) -> Result<Platform, FlowError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut p = Platform::new(key, providers, config, genesis);
        let chain_path = dir.join("sidechain.jsonl");
        if chain_path.exists() {
            *p.chain.get_mut() = Chain::load_jsonl(&chain_path)?;
        }
        let state_path = dir.join("state.json");
        if state_path.exists() {
            let snap: Snapshot = serde_json::from_slice(&fs::read(&state_path)?)?;
            *p.store.get_mut() = snap.store;
            *p.fingerprint.get_mut() = snap.fingerprint;
            *p.policy.get_mut() = PolicyGraph::from_doc(&snap.policy)?;
        }
        *p.audit.get_mut() = AuditLog::open(dir.join("audit.jsonl"))?;
        *p.btc.get_mut() = MainChainSim::open(MainChainKind::BitcoinSim, dir, genesis)?;
        *p.eth.get_mut() = MainChainSim::open(MainChainKind::EthereumSim, dir, genesis)?;
        p.data_dir = Some(dir.to_path_buf());
        Ok(p)
    }

    /// Write the state snapshot and sidechain. The audit log and main chain
    /// simulators persist on every append.
    pub fn save(&self) -> Result<(), FlowError> {
        let Some(dir) = &self.data_dir else {
            return Ok(());
        };
        let snap = Snapshot {
            store: self.store.read().clone(),
            fingerprint: self.fingerprint.lock().clone(),
            policy: self.policy.read().to_doc(),
        };
        let tmp = dir.join("state.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&snap)?)?;
        fs::rename(&tmp, dir.join("state.json"))?;
        self.chain.lock().save_jsonl(&dir.join("sidechain.jsonl"))?;
        Ok(())
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn public_key(&self) -> &[u8] {
        self.key.public_key()
    }

    pub fn register_party(&self, identity: Identity, public_key: Vec<u8>) {
        self.store.write().parties.insert(
            identity.id().to_owned(),
            PartyRecord { identity, public_key },
        );
    }

    fn party(&self, id: &str, role: Role) -> Result<(Identity, Vec<u8>), FlowError> {
        let store = self.store.read();
        let rec = store
            .parties
            .get(id)
            .filter(|r| r.identity.role() == role)
            .ok_or_else(|| FlowError::UnknownParty(format!("{id} as {role:?}")))?;
        Ok((rec.identity.clone(), rec.public_key.clone()))
    }

    pub fn party_public_key(&self, id: &str) -> Option<Vec<u8>> {
        self.store.read().parties.get(id).map(|r| r.public_key.clone())
    }

    pub fn cache(&self) -> &StateStore {
        &self.cache
    }

    /// Cache hits that returned an entry of a revoked agreement. Stays zero
    /// while invalidation works.
    pub fn stale_cache_reads(&self) -> u64 {
        self.stale_cache_reads.load(Ordering::Relaxed)
    }

    pub fn with_chain<R>(&self, f: impl FnOnce(&Chain) -> R) -> R {
        f(&self.chain.lock())
    }

    pub fn with_main_chains<R>(&self, f: impl FnOnce(&MainChainSim, &MainChainSim) -> R) -> R {
        f(&self.btc.lock(), &self.eth.lock())
    }

    pub fn with_main_chains_mut<R>(&self, f: impl FnOnce(&mut MainChainSim, &mut MainChainSim) -> R) -> R {
        f(&mut self.btc.lock(), &mut self.eth.lock())
    }

    pub fn policy(&self) -> PolicyGraph {
        self.policy.read().clone()
    }

    pub fn set_policy(&self, policy: PolicyGraph) {
        *self.policy.write() = policy;
    }

    pub fn record(&self, id: &Uuid) -> Option<AgreementRecord> {
        self.store.read().records.get(id).cloned()
    }

    pub fn agreement_ids(&self) -> Vec<Uuid> {
        self.store.read().records.keys().copied().collect()
    }

    pub fn lineage(&self, id: &Uuid) -> Option<VersionLineage> {
        self.store.read().lineage_of(id).cloned()
    }

    pub fn audit_records(&self) -> Vec<AuditRecord> {
        self.audit.lock().records().to_vec()
    }

    pub fn pending_leaves(&self) -> usize {
        self.fingerprint.lock().pending().len()
    }

    /// Make the next creation flow fail at `step`.
    pub fn set_fault(&self, step: Option<FlowStep>) {
        *self.fault.lock() = step;
    }

    fn check_fault(&self, step: FlowStep) -> Result<(), FlowError> {
        if *self.fault.lock() == Some(step) {
            return Err(FlowError::Injected(step));
        }
        Ok(())
    }

    fn lineage_lock(&self, root: Uuid) -> Arc<Mutex<()>> {
        self.locks.lock().entry(root).or_default().clone()
    }

    fn audit(&self, agreement: Uuid, at: DateTime<Utc>, event: AuditEvent) -> Result<(), FlowError> {
        self.audit.lock().append(agreement, at, event)?;
        Ok(())
    }

    fn verified_context(
        &self,
        request: &ConsentRequest,
        now: DateTime<Utc>,
    ) -> Result<(ContextOutcome, VerifiedSeed), FlowError> {
        let (controller, controller_pk) = self.party(&request.controller_id, Role::DataController)?;
        let seed = verify_seed(request.seed, &request.seed_signature, &controller_pk)?;
        let (subject, _) = self.party(&request.subject_id, Role::DataSubject)?;
        let head = {
            let store = self.store.read();
            store
                .pairs
                .get(&pair_key(&request.subject_id, &request.controller_id))
                .and_then(|root| store.lineages.get(root))
                .and_then(|l| store.records.get(&l.head))
                .map(|r| r.agreement.clone())
        };
        let as_party = |i: &Identity| Party {
            name: i.display_name.clone(),
            id: i.id().to_owned(),
        };
        let outcome = draft_for_context(
            request,
            as_party(&subject),
            as_party(&controller),
            head.as_ref(),
            &self.config,
            now,
        )?;
        Ok((outcome, seed))
    }

    /// Verify the controller's seed and classify the request.
    pub fn handle_context(&self, request: &ConsentRequest, now: DateTime<Utc>) -> Result<ContextOutcome, FlowError> {
        Ok(self.verified_context(request, now)?.0)
    }

    /// Seed, agreement hash, subject signature, timestamps, proof, embed.
    /// Nothing is recorded anywhere unless the embed block is committed.
    pub fn run_creation_flow(
        &self,
        request: &ConsentRequest,
        decision: SubjectDecision<'_>,
        now: DateTime<Utc>,
    ) -> Result<CreationOutcome, FlowError> {
        let _creation = self.creation.lock();
        let (outcome, seed) = self.verified_context(request, now)?;
        let (draft, supersedes) = match outcome {
            ContextOutcome::NewTemplate { draft } => (*draft, None),
            ContextOutcome::AddendumRequired { draft, supersedes } => (*draft, Some(supersedes)),
            ContextOutcome::Rejected { reason } => {
                self.audit(
                    request.seed,
                    now,
                    AuditEvent::Rejected {
                        reason: format!("{reason:?}"),
                    },
                )?;
                return Ok(CreationOutcome::Rejected { reason });
            }
        };
        let subject_key = match decision {
            SubjectDecision::Accept { subject_key } => subject_key,
            SubjectDecision::Decline => {
                self.audit(request.seed, now, AuditEvent::Declined)?;
                return Ok(CreationOutcome::Declined);
            }
        };
        let (_, subject_pk) = self.party(&request.subject_id, Role::DataSubject)?;

        self.check_fault(FlowStep::AgreementHash)?;
        let hash = compute_agreement_hash(&draft)?;

        self.check_fault(FlowStep::SubjectSignature)?;
        let signed_hash = sign_agreement(&draft, &seed, subject_key)?;
        if !verify_signed_agreement_hash(&draft, &signed_hash, &subject_pk)? {
            return Err(FlowError::SubjectSignature);
        }

        self.check_fault(FlowStep::Timestamp)?;
        let stamps = self
            .providers
            .iter()
            .map(|p| request_timestamp(&hash, p.as_ref(), now))
            .collect::<Result<Vec<_>, _>>()?;

        self.check_fault(FlowStep::ProofBuild)?;
        let proof = build_proof(&draft, &signed_hash, &stamps, &self.key)?;

        let id = draft.agreement_hash_id;
        let (root, lineage) = {
            let store = self.store.read();
            match supersedes {
                None => (id, VersionLineage::new(&draft)),
                Some(prev) => {
                    let prev_rec = store.records.get(&prev).ok_or(FlowError::UnknownAgreement(prev))?;
                    let current = &store.lineages[&prev_rec.root];
                    (prev_rec.root, link_version(current, &draft)?)
                }
            }
        };
        let lineage_lock = self.lineage_lock(root);
        let _lineage = lineage_lock.lock();

        self.check_fault(FlowStep::Embed)?;
        let height = {
            let mut chain = self.chain.lock();
            let sender = self.config.platform_id.as_str();
            let lease = lease_id(&id);
            let mut txs = vec![
                embed_proof(&chain, &proof, sender)?,
                Tx::new(
                    sender,
                    TxPayload::LeaseCreate {
                        lease_id: lease.clone(),
                        agreement_hash_id: id,
                        duration_days: request.lease_days.unwrap_or(self.config.default_lease_days),
                    },
                ),
                Tx::new(
                    sender,
                    TxPayload::RegisterChangeLink {
                        contract_id: register_id(&root),
                        new_link: id,
                    },
                ),
            ];
            if draft.metadata.is_transferrable {
                txs.push(Tx::new(
                    sender,
                    TxPayload::ProxyCall {
                        contract_id: proxy_id(&id),
                        op: ProxyOp::UpdateTarget { new_target: lease },
                    },
                ));
            }
            chain.append_block(txs, now)?.height
        };

        // Committed on the sidechain; the rest is bookkeeping that cannot fail
        // on bad input.
        let lifecycle = [LifecycleEvent::Store, LifecycleEvent::Process]
            .into_iter()
            .try_fold(LifecycleState::collected(now), |s, e| advance_lifecycle(s, e, now))?;
        {
            let mut store = self.store.write();
            if let Some(prev) = supersedes {
                if let Some(rec) = store.records.get_mut(&prev) {
                    if let Ok(next) = advance_lifecycle(rec.lifecycle, LifecycleEvent::Modify, now) {
                        rec.lifecycle = next;
                    }
                }
            }
            store.records.insert(
                id,
                AgreementRecord {
                    agreement: draft.clone(),
                    proof: proof.clone(),
                    lifecycle,
                    seed_signature: request.seed_signature.clone(),
                    signed_hash,
                    root,
                    height,
                },
            );
            store.lineages.insert(root, lineage);
            store
                .pairs
                .insert(pair_key(&request.subject_id, &request.controller_id), root);
        }
        if let Some(prev) = supersedes {
            self.cache.invalidate_agreement(InvalidationEvent::VersionChange, &prev);
        }
        self.prime_cache(&draft, lifecycle, now)?;
        if self.config.provision_policy {
            self.provision_policy(&draft)?;
        }
        if let Some(sig) = &proof.platform_signature {
            self.fingerprint.lock().enqueue(&sig.signed_digest)?;
        }
        self.audit(
            id,
            now,
            AuditEvent::Created {
                version: draft.agreement_version.to_string(),
                height,
            },
        )?;
        Ok(CreationOutcome::Created {
            agreement_hash_id: id,
            version: draft.agreement_version.to_string(),
            height,
            proof: Box::new(proof),
        })
    }

    fn prime_cache(&self, agreement: &ConsentAgreement, lifecycle: LifecycleState, now: DateTime<Utc>) -> Result<(), FlowError> {
        for entry in &agreement.consent_scope {
            let key = StateKey::new(
                &agreement.data_subject().id,
                &agreement.data_controller().id,
                &entry.purpose,
            )?;
            let entry = StateEntry::new(agreement.agreement_hash_id, lifecycle, expiry_instant(entry.expiry), now);
            self.cache.put(key, entry)?;
        }
        Ok(())
    }

    /// Mirror the scope into the policy graph: the controller (and any
    /// auxiliary controller of a transferable agreement) gets the default
    /// operations on each consented attribute, one attribute pair per purpose.
    fn provision_policy(&self, agreement: &ConsentAgreement) -> Result<(), FlowError> {
        let mut g = self.policy.write();
        let ensure = |g: &mut PolicyGraph, id: &str, name: &str, kind: NodeKind| -> Result<(), FlowError> {
            if g.node(id).is_err() {
                g.create_node(id, name, kind)?;
            }
            Ok(())
        };
        let assign = |g: &mut PolicyGraph, c: &str, p: &str| -> Result<(), FlowError> {
            if !g.parents(c).any(|x| x == p) {
                g.assign(c, p)?;
            }
            Ok(())
        };
        ensure(&mut g, POLICY_CLASS, "consent", NodeKind::PC)?;
        let mut users = vec![agreement.data_controller().id.clone()];
        if agreement.metadata.is_transferrable {
            users.extend(agreement.metadata.data_controller_aux.iter().map(|p| p.id.clone()));
        }
        for entry in &agreement.consent_scope {
            let ua = format!("ua:{}:{}", agreement.agreement_hash_id, entry.purpose);
            let oa = format!("oa:{}:{}", agreement.agreement_hash_id, entry.purpose);
            ensure(&mut g, &ua, &entry.purpose, NodeKind::UA)?;
            ensure(&mut g, &oa, &entry.purpose, NodeKind::OA)?;
            assign(&mut g, &ua, POLICY_CLASS)?;
            assign(&mut g, &oa, POLICY_CLASS)?;
            for user in &users {
                ensure(&mut g, &user_node(user), user, NodeKind::U)?;
                assign(&mut g, &user_node(user), &ua)?;
            }
            for attr in &entry.data_attributes {
                ensure(&mut g, &object_node(attr), attr, NodeKind::O)?;
                assign(&mut g, &object_node(attr), &oa)?;
            }
            g.associate(&ua, self.config.default_ops.iter().cloned(), &oa)?;
        }
        Ok(())
    }

    fn lease_snapshot(&self, agreement: &Uuid, now: DateTime<Utc>) -> Option<LeaseSnapshot> {
        let chain = self.chain.lock();
        let lease = chain.contract(&lease_id(agreement))?.as_lease()?.clone();
        Some(LeaseSnapshot {
            grant_allowed: !lease.withdrawn && lease_check(&lease, now, LeaseAction::Grant),
            lease_id: lease.lease_id,
            expires_at: lease.expires_at,
        })
    }

    /// Every check must pass for a key to be issued, and every call leaves
    /// exactly one audit record.
    pub fn request_access(&self, request: &AccessRequest, now: DateTime<Utc>) -> Result<AccessOutcome, FlowError> {
        let id = request.agreement_hash_id;
        let Some(root) = self.store.read().records.get(&id).map(|r| r.root) else {
            self.audit(
                id,
                now,
                AuditEvent::AccessDenied {
                    requester: request.requester.clone(),
                    reason: DenialReason::UnknownAgreement,
                    ops: request.ops.clone(),
                    attributes: request.attributes.clone(),
                    ngac: Vec::new(),
                    lease: None,
                },
            )?;
            return Err(FlowError::UnknownAgreement(id));
        };
        let lock = self.lineage_lock(root);
        let _guard = lock.lock();

        let mut ngac = Vec::new();
        let lease = self.lease_snapshot(&id, now);
        let decision = self.decide_access(request, now, lease.as_ref(), &mut ngac);
        let event = match decision {
            Ok(body) => {
                let dak = DataAccessKey::issue(body, &self.key)?;
                self.store.write().daks.entry(id).or_default().insert(dak.id());
                let event = AuditEvent::AccessGranted {
                    requester: request.requester.clone(),
                    dak_id: dak.id(),
                    ops: request.ops.clone(),
                    attributes: request.attributes.clone(),
                    ngac,
                    lease,
                };
                self.audit(id, now, event)?;
                return Ok(AccessOutcome::Granted { dak: Box::new(dak) });
            }
            Err(Denial::Reason(reason)) => AuditEvent::AccessDenied {
                requester: request.requester.clone(),
                reason,
                ops: request.ops.clone(),
                attributes: request.attributes.clone(),
                ngac,
                lease,
            },
            Err(Denial::Error(e)) => return Err(e),
        };
        let AuditEvent::AccessDenied { reason, .. } = &event else {
            unreachable!()
        };
        let outcome = AccessOutcome::Denied { reason: reason.clone() };
        self.audit(id, now, event)?;
        Ok(outcome)
    }

    fn decide_access(
        &self,
        request: &AccessRequest,
        now: DateTime<Utc>,
        lease: Option<&LeaseSnapshot>,
        ngac: &mut Vec<(String, BTreeSet<String>)>,
    ) -> Result<DakBody, Denial> {
        let id = request.agreement_hash_id;
        let (record, head, revoked) = {
            let store = self.store.read();
            let record = store.records[&id].clone();
            let head = store.lineages[&record.root].head;
            (record, head, store.revoked.contains(&id))
        };
        let agreement = &record.agreement;

        let proxied = if request.requester == agreement.data_controller().id {
            false
        } else if agreement.metadata.data_controller_aux.iter().any(|p| p.id == request.requester) {
            if !agreement.metadata.is_transferrable {
                return Err(Denial::Reason(DenialReason::NotTransferable));
            }
            true
        } else {
            return Err(Denial::Reason(DenialReason::NotAuthorized));
        };

        // Cache first, authoritative record on a miss.
        let cached = StateKey::new(&agreement.data_subject().id, &agreement.data_controller().id, &request.purpose)
            .ok()
            .and_then(|key| self.cache.get_live(&key, now))
            .filter(|e| e.agreement_hash_id == id);
        let lifecycle = match cached {
            Some(_) if revoked => {
                self.stale_cache_reads.fetch_add(1, Ordering::Relaxed);
                record.lifecycle
            }
            Some(entry) => entry.lifecycle,
            None => {
                if record.lifecycle.state.is_active() && head == id && !revoked {
                    self.prime_cache(agreement, record.lifecycle, now).map_err(Denial::Error)?;
                }
                record.lifecycle
            }
        };

        if revoked || lifecycle.state == LifecycleStage::Revocation {
            return Err(Denial::Reason(DenialReason::Revoked));
        }
        if head != id {
            return Err(Denial::Reason(DenialReason::Superseded { head }));
        }
        if !lifecycle.state.is_active() {
            return Err(Denial::Reason(DenialReason::Inactive { stage: lifecycle.state }));
        }
        let Some(lease) = lease.filter(|l| l.grant_allowed) else {
            return Err(Denial::Reason(DenialReason::LeaseExpired));
        };
        if request.ops.is_empty() || request.attributes.is_empty() {
            return Err(Denial::Reason(DenialReason::NothingRequested));
        }
        let Some(entry) = agreement.scope_for(&request.purpose) else {
            return Err(Denial::Reason(DenialReason::PurposeNotConsented {
                purpose: request.purpose.clone(),
            }));
        };
        if let Some(attr) = request.attributes.iter().find(|a| !entry.covers(a)) {
            return Err(Denial::Reason(DenialReason::OutOfScope { attribute: attr.clone() }));
        }
        let scope_end = expiry_instant(entry.expiry);
        if scope_end <= now {
            return Err(Denial::Reason(DenialReason::ScopeExpired {
                purpose: entry.purpose.clone(),
            }));
        }

        {
            let g = self.policy.read();
            let user = user_node(&request.requester);
            for attr in &request.attributes {
                let ops = list_permissions(&g, &user, &object_node(attr))
                    .map(|d| d.ops)
                    .unwrap_or_default();
                let missing = request.ops.iter().find(|op| !ops.contains(*op)).cloned();
                ngac.push((attr.clone(), ops));
                if let Some(op) = missing {
                    return Err(Denial::Reason(DenialReason::PolicyDenied {
                        attribute: attr.clone(),
                        op,
                    }));
                }
            }
        }

        if proxied {
            let mut chain = self.chain.lock();
            let tx = Tx::new(
                request.requester.as_str(),
                TxPayload::ProxyCall {
                    contract_id: proxy_id(&id),
                    op: ProxyOp::Relay {
                        call: RelayedCall::LeaseGrant,
                    },
                },
            );
            let at = now.max(chain.head().ntime);
            chain
                .append_block(vec![tx], at)
                .map_err(|e| Denial::Error(e.into()))?;
            let relayed_ok = chain
                .contract(&proxy_id(&id))
                .and_then(|c| c.as_proxy())
                .and_then(|p| p.call_log.last())
                .is_some_and(|entry| entry.error.is_none());
            if !relayed_ok {
                return Err(Denial::Reason(DenialReason::LeaseExpired));
            }
        }

        Ok(DakBody {
            dak_id: Uuid::new_v4(),
            agreement_hash_id: id,
            holder: request.requester.clone(),
            ops: request.ops.clone(),
            granted_scope: vec![ScopeEntry {
                purpose: entry.purpose.clone(),
                data_attributes: request.attributes.clone(),
                expiry: entry.expiry,
            }],
            issued_at: now,
            expires_at: scope_end.min(lease.expires_at),
        })
    }

    /// Withdraw consent for the whole lineage of `agreement`. The cache is
    /// invalidated and every issued key voided before this returns.
    pub fn revoke(&self, caller: &str, agreement: &Uuid, now: DateTime<Utc>) -> Result<(), FlowError> {
        let Some(root) = self.store.read().records.get(agreement).map(|r| r.root) else {
            return Err(FlowError::UnknownAgreement(*agreement));
        };
        let lock = self.lineage_lock(root);
        let _guard = lock.lock();
        let (members, voided) = {
            let mut store = self.store.write();
            let record = &store.records[agreement];
            if record.agreement.data_subject().id != caller {
                return Err(FlowError::NotSubject {
                    caller: caller.to_owned(),
                    agreement: *agreement,
                });
            }
            if store.revoked.contains(agreement) {
                return Ok(());
            }
            let lineage = store.lineages[&root].clone();
            let head = store.records.get_mut(&lineage.head).expect("head recorded");
            head.lifecycle = advance_lifecycle(head.lifecycle, LifecycleEvent::Revoke, now)?;
            let members: Vec<Uuid> = lineage.links.iter().map(|(_, id)| *id).collect();
            let mut voided = 0;
            for id in &members {
                store.revoked.insert(*id);
                let daks: Vec<Uuid> = store.daks.get(id).into_iter().flatten().copied().collect();
                voided += daks.len();
                store.voided.extend(daks);
            }
            (members, voided)
        };
        for id in &members {
            self.cache.invalidate_agreement(InvalidationEvent::Revocation, id);
        }
        self.audit(*agreement, now, AuditEvent::Revoked { voided_daks: voided })
    }

    pub fn validate_dak(&self, dak: &DataAccessKey, now: DateTime<Utc>) -> bool {
        if !dak.signature_valid(self.key.public_key()) || now >= dak.body.expires_at {
            return false;
        }
        let store = self.store.read();
        let id = dak.body.agreement_hash_id;
        let current = store.lineage_of(&id).is_some_and(|l| l.is_head(&id));
        let active = store.records.get(&id).is_some_and(|r| r.lifecycle.state.is_active());
        current && active && !store.revoked.contains(&id) && !store.voided.contains(&dak.id())
    }

    /// Batch the pending proof digests, anchor the root on both simulated
    /// main chains and record it in a sidechain block.
    pub fn anchor_now(
        &self,
        now: DateTime<Utc>,
        btc_confirmations: u64,
        eth_confirmations: u64,
    ) -> Result<Option<AnchorSummary>, FlowError> {
        let mut fp = self.fingerprint.lock();
        let Some(batch_id) = fp.flush(now)? else {
            return Ok(None);
        };
        let mut receipts = Vec::new();
        let mut failures = Vec::new();
        for (sim, n) in [(&self.btc, btc_confirmations), (&self.eth, eth_confirmations)] {
            match fp.anchor_batch(&batch_id, &mut sim.lock(), n) {
                Ok(r) => receipts.push(r),
                Err(e) => {
                    log::warn!("anchoring batch {batch_id} failed: {e}");
                    failures.push(e.to_string());
                }
            }
        }
        let mut chain = self.chain.lock();
        let at = now.max(chain.head().ntime);
        let sidechain_height = fp.commit_to_sidechain(&batch_id, &mut chain, at)?;
        let record = fp.batch(&batch_id).expect("just registered");
        Ok(Some(AnchorSummary {
            batch_id,
            root: record.hash.root.clone(),
            leaves: record.batch.leaf_hashes.len(),
            receipts,
            failures,
            sidechain_height,
        }))
    }

    pub fn reconcile(&self, agreement: &Uuid) -> Result<FingerprintProofDoc, FlowError> {
        let fp = self.fingerprint.lock();
        let chain = self.chain.lock();
        Ok(fp.reconcile(agreement, &chain)?)
    }

    pub fn export_audit(&self, agreement: &Uuid) -> Result<AuditExport, FlowError> {
        if !self.store.read().records.contains_key(agreement) {
            return Err(FlowError::UnknownAgreement(*agreement));
        }
        let records = self.audit.lock().export(&BTreeSet::from([*agreement]))?;
        Ok(AuditExport {
            agreement_hash_id: *agreement,
            records,
            fingerprint_proof: self.reconcile(agreement).ok(),
        })
    }

    /// Offline checks of a consent proof against what this platform knows.
    pub fn verify_consent_proof(&self, proof: &ConsentProof) -> ProofVerification {
        let platform_signature = proof.verify_platform_signature(self.key.public_key()).unwrap_or(false);
        let embedded = {
            let chain = self.chain.lock();
            let digest = proof.platform_signature.as_ref().map(|s| s.signed_digest.as_str());
            chain
                .lookup(&proof.agreement_hash_id)
                .is_some_and(|e| Some(e.proof_digest.as_str()) == digest)
        };
        let record = self.record(&proof.agreement_hash_id);
        let timestamps = proof
            .timestamp_evidence
            .iter()
            .map(|ts| {
                let Some(agreement) = &record else {
                    return false;
                };
                let Ok(hash) = compute_agreement_hash(&agreement.agreement) else {
                    return false;
                };
                let key = self.providers.iter().find(|p| p.kind() == ts.provider).and_then(|p| p.public_key());
                verify_timestamp(ts, &hash, key.as_deref()).unwrap_or(false)
            })
            .collect();
        let subject_signature = record.as_ref().map(|r| {
            self.party_public_key(&r.agreement.data_subject().id)
                .is_some_and(|pk| proof.verify_against(&r.agreement, &pk).unwrap_or(false))
        });
        ProofVerification {
            platform_signature,
            timestamps,
            embedded,
            subject_signature,
        }
    }
}

enum Denial {
    Reason(DenialReason),
    Error(FlowError),
}
