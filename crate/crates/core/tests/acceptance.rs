//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p oconsent-core --test acceptance` runs everything; numeric
//! arguments after `--` select criteria.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration as StdDuration, Instant};

use chrono::{DateTime, Duration, Utc};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

use common::{keys, merkle_oracle, ngac_oracle};
use oconsent::consent::{
    build_proof, compute_agreement_hash, create_seed_with_rng, sign_agreement, verify_provability, verify_seed,
    AgreementVersion, ConsentAgreement, ConsentProof, LifecycleStage, LifecycleState,
};
use oconsent::fingerprint::{
    build_batch_hash, prove_inclusion, verify_fingerprint_doc, Batch, BatchTrigger,
};
use oconsent::flow::{
    AccessRequest, ConsentRequest, CreationOutcome, FlowConfig, Platform, ScopeRequest, SubjectDecision,
};
use oconsent::identity::{Identity, KeyPair, Role};
use oconsent::ngac::{list_permissions, sample_policy};
use oconsent::sidechain::{
    embed_proof, fork_choice, lease_check, Block, Chain, LeaseAction, ProxyOp, RelayedCall, Tx, TxPayload,
};
use oconsent::state_store::{StateEntry, StateKey, StateStore};
use oconsent::timestamp::{
    parse_beacon_record, pulse_certificate_public_key, request_timestamp, verify_pulse_signature,
    verify_timestamp, BitcoinNTimeProvider, Evidence, NistBeaconProvider, SimulatedBeacon, SimulatedTsa,
    TimestampProof, TimestampProvider,
};

const DS: &str = "7a2a83b1694940f38d6a2a8f50e4d979";
const DC: &str = "478ecb5f2b674ad18976007d64c069de";
const SAMPLE_AGREEMENT: &str = include_str!("../fixtures/agreements/sample.agreement.json");
const NIST_OUTPUT: &str = "CCDDD16135C36C673237328ECE38D01A3E1DAC817BB7005237088FA10502B6B186291AD6059B09BC2B5B7744AA135BFDAB89FBE0E11E8FA1C99A665FB41CDF5B";

struct Verdict {
    pass: bool,
    detail: String,
    /// Failure already recorded as unattainable; reported but not fatal.
    known_gap: bool,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
            known_gap: false,
        }
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn t0() -> DateTime<Utc> {
    "2026-03-01T12:00:00Z".parse().unwrap()
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("sample policy permissions", c1_sample_policy),
        ("ngac oracle equivalence", c2_ngac_oracle),
        ("end-to-end protocol run", c3_end_to_end),
        ("anchor safety fuzzing", c4_anchor_safety),
        ("timestamp fixtures and mutations", c5_timestamps),
        ("revocation circuit breaker", c6_revocation),
        ("lease semantics", c7_leases),
        ("embed throughput", c8_throughput),
        ("replay determinism and merkle oracle", c9_determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut fatal = false;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let tag = match (verdict.pass, verdict.known_gap) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => "FAIL",
        };
        println!(
            "[{tag}] {n}. {name}: {} ({:.1} s)",
            verdict.detail,
            started.elapsed().as_secs_f64()
        );
        fatal |= !verdict.pass && !verdict.known_gap;
    }
    if fatal {
        std::process::exit(1);
    }
}

fn c1_sample_policy() -> Verdict {
    let started = Instant::now();
    let (g, ids) = sample_policy();
    let decision = list_permissions(&g, ids.user, ids.asset1).unwrap();
    let elapsed = started.elapsed();
    let ok = decision.ops.contains("r") && decision.ops.contains("w") && elapsed < StdDuration::from_secs(1);
    Verdict::new(ok, format!("ops {:?} in {:?}", decision.ops, elapsed))
}

fn c2_ngac_oracle() -> Verdict {
    let exhaustive = ngac_oracle::run_exhaustive(6, &["r", "w"]);
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut random = ngac_oracle::Tally::default();
    for _ in 0..10_000 {
        let spec = ngac_oracle::random_spec(&mut rng, 12, &["r", "w", "x"]);
        ngac_oracle::compare(&spec, &spec.build(), &spec.closure(), &mut random);
    }
    let mismatches = exhaustive.mismatches.len() + random.mismatches.len();
    Verdict::new(
        mismatches == 0 && random.graphs >= 10_000,
        format!(
            "exhaustive {} graphs / {} queries, random {} graphs / {} queries, {mismatches} mismatches",
            exhaustive.graphs, exhaustive.queries, random.graphs, random.queries
        ),
    )
}

fn controller() -> Identity {
    Identity::with_id(DC, Role::DataController, "ABC LLC.")
}

fn subject() -> Identity {
    Identity::with_id(DS, Role::DataSubject, "Mr. XYZ")
}

fn platform(providers: Vec<Box<dyn TimestampProvider>>) -> Platform {
    let p = Platform::new(keys::platform().clone(), providers, FlowConfig::default(), t0() - Duration::days(1));
    p.register_party(subject(), keys::subject().public_key().to_vec());
    p.register_party(controller(), keys::controller().public_key().to_vec());
    p
}

fn consent_request(seed: u64) -> ConsentRequest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (seed, seed_signature) = create_seed_with_rng(&controller(), keys::controller(), &mut rng).unwrap();
    ConsentRequest {
        controller_id: DC.into(),
        subject_id: DS.into(),
        context: "marketing".into(),
        requested_scope: vec![ScopeRequest {
            purpose: "marketing".into(),
            data_attributes: vec!["datasetA:attr1".into(), "datasetB:attr2".into()],
            expiry: None,
        }],
        seed,
        seed_signature,
        lease_days: None,
        is_transferrable: false,
        data_controller_aux: Vec::new(),
    }
}

fn warm_keys() {
    for k in [keys::subject(), keys::controller(), keys::platform(), keys::tsa()] {
        assert!(!k.public_key().is_empty());
    }
}

fn c3_end_to_end() -> Verdict {
    warm_keys();
    let started = Instant::now();
    let providers: Vec<Box<dyn TimestampProvider>> = vec![
        Box::new(SimulatedTsa::new(keys::tsa().clone())),
        Box::new(BitcoinNTimeProvider::synthetic(t0() - Duration::days(1), 300, 5)),
    ];
    let p = platform(providers);
    let outcome = p
        .run_creation_flow(
            &consent_request(1),
            SubjectDecision::Accept {
                subject_key: keys::subject(),
            },
            t0(),
        )
        .unwrap();
    let CreationOutcome::Created { agreement_hash_id: id, .. } = outcome else {
        return Verdict::new(false, format!("creation did not complete: {outcome:?}"));
    };
    let record = p.record(&id).unwrap();
    let sequential = verify_provability(
        &record.agreement,
        &record.seed_signature,
        keys::controller().public_key(),
        &record.signed_hash,
        keys::subject().public_key(),
    )
    .unwrap();
    let proof_check = p.verify_consent_proof(&record.proof);
    let summary = p.anchor_now(t0() + Duration::minutes(5), 6, 3).unwrap().unwrap();
    let doc = p.reconcile(&id).unwrap();
    let check = p.with_chain(|chain| p.with_main_chains(|btc, eth| verify_fingerprint_doc(&doc, Some(chain), &[btc, eth])));
    let elapsed = started.elapsed();
    let confirmations: Vec<u64> = summary.receipts.iter().map(|r| r.confirmations).collect();
    let ok = sequential
        && proof_check.passed()
        && proof_check.timestamps.len() == 2
        && summary.failures.is_empty()
        && confirmations == [6, 3]
        && !doc.partial_anchor
        && check.passed
        && check.sidechain_ok == Some(true)
        && elapsed < StdDuration::from_secs(5);
    Verdict::new(
        ok,
        format!(
            "provable {sequential}, proof checks {}, confirmations {confirmations:?}, doc verified {}, {:?} excluding key generation",
            proof_check.passed(),
            check.passed,
            elapsed
        ),
    )
}

fn storage_tx(rng: &mut ChaCha8Rng, sender: &str) -> Tx {
    let key = hex::encode(rng.gen::<[u8; 32]>());
    Tx::new(
        sender,
        TxPayload::StoragePut {
            contract_id: format!("storage:{sender}"),
            key,
            value: rng.gen(),
        },
    )
}

fn grow(chain: &mut Chain, blocks: u64, rng: &mut ChaCha8Rng, sender: &str, extra: Option<&str>) {
    for _ in 0..blocks {
        let txs = (0..rng.gen_range(0..3)).map(|_| storage_tx(rng, sender)).collect();
        let at = chain.head().ntime + Duration::seconds(rng.gen_range(1..600));
        chain.append_block_with_extra(txs, at, extra.map(str::to_owned)).unwrap();
    }
}

fn c4_anchor_safety() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf02c);
    let mut accepted = 0;
    let mut variants = [0u32; 4];
    let trials = 1000;
    for _ in 0..trials {
        let mut honest = Chain::new(t0());
        let len = rng.gen_range(2..30);
        grow(&mut honest, len, &mut rng, "honest", None);
        let h = rng.gen_range(1..=len);
        let mut anchors = BTreeSet::from([honest.block(h).unwrap().block_hash.clone()]);
        if rng.gen_bool(0.3) {
            anchors.insert(honest.block(rng.gen_range(1..=h)).unwrap().block_hash.clone());
        }
        let anchored = honest.block(h).unwrap().block_hash.clone();
        let fork_at = rng.gen_range(0..h);
        let mut fork = honest.truncated(fork_at).unwrap();
        let variant = rng.gen_range(0..4);
        variants[variant] += 1;
        let extra = (variant == 3).then_some(anchored.as_str());
        grow(&mut fork, len - fork_at + rng.gen_range(1..10), &mut rng, "attacker", extra);
        let mut blocks: Vec<Block> = fork.blocks().to_vec();
        match variant {
            // Splice the anchored block in verbatim over the attacker's block.
            1 => blocks[h as usize] = honest.block(h).unwrap().clone(),
            // Claim the anchored hash without matching contents.
            2 => blocks[h as usize].block_hash = anchored.clone(),
            _ => {}
        }
        assert!(blocks.len() > honest.blocks().len());
        for (a, b) in [(honest.blocks(), &blocks[..]), (&blocks[..], honest.blocks())] {
            match fork_choice(a, b, &anchors) {
                Ok(chosen) if chosen.last().unwrap().block_hash == honest.head().block_hash => {}
                _ => accepted += 1,
            }
        }
    }
    Verdict::new(
        accepted == 0,
        format!("{trials} longer forks ({variants:?} by variant), both argument orders, {accepted} acceptances"),
    )
}

fn flip_hex_bit(s: &str, bit: usize) -> String {
    let mut bytes = hex::decode(s).unwrap();
    let i = bit % (bytes.len() * 8);
    bytes[i / 8] ^= 1 << (i % 8);
    let out = hex::encode(bytes);
    if s.chars().any(|c| c.is_ascii_uppercase()) {
        out.to_uppercase()
    } else {
        out
    }
}

/// Hex fields of a proof that a verifier must bind.
fn mutation_targets(proof: &mut TimestampProof) -> Vec<&mut String> {
    let mut out = vec![&mut proof.anchor_value];
    if let Some(d) = proof.stamped_digest.as_mut() {
        out.push(d);
    }
    match &mut proof.evidence {
        Evidence::Tsa { pulse_output, .. } => out.push(pulse_output),
        Evidence::NistPulse(p) => {
            out.push(&mut p.signature);
            out.push(&mut p.output_value);
            out.push(&mut p.local_random_value);
        }
        Evidence::DrandRound(r) => {
            out.push(&mut r.signature);
            out.push(&mut r.randomness);
        }
        Evidence::BtcHeader(h) => out.push(&mut h.block_hash),
        Evidence::None => {}
    }
    out
}

fn c5_timestamps() -> Verdict {
    let pulse = parse_beacon_record(NistBeaconProvider::sample_record()).unwrap();
    let parsed = pulse.pulse_index == 1_084_642 && pulse.output_value.eq_ignore_ascii_case(NIST_OUTPUT);
    let cert = pulse_certificate_public_key(&pulse);
    let nist_signature = match &cert {
        Ok(pk) => verify_pulse_signature(&pulse, pk).unwrap_or(false),
        Err(_) => false,
    };

    let digest = oconsent::canonical::sha256_hex(b"acceptance agreement");
    let btc = BitcoinNTimeProvider::from_headers(vec![BitcoinNTimeProvider::fixture_659792()]);
    let btc_proof = request_timestamp(&digest, &btc, "2020-12-04T01:30:00Z".parse().unwrap()).unwrap();
    let btc_ok = btc_proof.anchor_value.starts_with("00000000000000000000aa23344f")
        && btc_proof.anchor_time == "2020-12-04T00:57:00Z".parse::<DateTime<Utc>>().unwrap()
        && verify_timestamp(&btc_proof, &digest, None).unwrap();

    let beacon_key = keys::small(31);
    let tsa = SimulatedTsa::new(keys::small(32));
    let nist = NistBeaconProvider::simulated(SimulatedBeacon::new(beacon_key, t0() - Duration::days(1), 9));
    let providers: [(&dyn TimestampProvider, DateTime<Utc>); 3] = [
        (&tsa, t0()),
        (&nist, t0()),
        (&btc, "2020-12-04T01:30:00Z".parse().unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x7157);
    let (mut trials, mut survivors) = (0, 0);
    for (provider, now) in providers {
        let key = provider.public_key();
        let proof = request_timestamp(&digest, provider, now).unwrap();
        assert!(verify_timestamp(&proof, &digest, key.as_deref()).unwrap());
        for _ in 0..400 {
            let mut p = proof.clone();
            let mut d = digest.clone();
            let targets = mutation_targets(&mut p);
            let pick = rng.gen_range(0..=targets.len());
            let bit = rng.gen_range(0..4096);
            match targets.into_iter().nth(pick) {
                Some(field) => *field = flip_hex_bit(field, bit),
                None => d = flip_hex_bit(&d, bit),
            }
            trials += 1;
            if verify_timestamp(&p, &d, key.as_deref()).unwrap_or(false) {
                survivors += 1;
            }
        }
    }
    let detail = format!(
        "pulse parsed {parsed}, certificate signature {} ({}), block 659792 anchor {btc_ok}, {survivors}/{trials} mutations verified",
        if nist_signature { "verified" } else { "not verified" },
        match &cert {
            Ok(_) => "certificate decoded".to_owned(),
            Err(e) => e.to_string(),
        }
    );
    let rest_ok = parsed && btc_ok && trials >= 1000 && survivors == 0;
    Verdict {
        pass: rest_ok && nist_signature,
        detail,
        // The published certificate text is damaged; see the decisions ledger.
        known_gap: rest_ok && !nist_signature,
    }
}

fn c6_revocation() -> Verdict {
    warm_keys();
    let p = platform(vec![Box::new(SimulatedTsa::new(keys::tsa().clone()))]);
    let CreationOutcome::Created { agreement_hash_id: id, .. } = p
        .run_creation_flow(
            &consent_request(2),
            SubjectDecision::Accept {
                subject_key: keys::subject(),
            },
            t0(),
        )
        .unwrap()
    else {
        return Verdict::new(false, "creation failed");
    };
    let request = AccessRequest {
        requester: DC.into(),
        agreement_hash_id: id,
        purpose: "marketing".into(),
        ops: BTreeSet::from(["r".to_owned()]),
        attributes: vec!["datasetA:attr1".into()],
    };
    let revoked = AtomicBool::new(false);
    let stop = AtomicBool::new(false);
    let (before, after, after_grants) = (AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0));
    let daks = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| {
                while !stop.load(Ordering::Acquire) {
                    let was_revoked = revoked.load(Ordering::Acquire);
                    let outcome = p.request_access(&request, t0() + Duration::minutes(1)).unwrap();
                    if was_revoked {
                        after.fetch_add(1, Ordering::Relaxed);
                        if outcome.is_granted() {
                            after_grants.fetch_add(1, Ordering::Relaxed);
                        }
                    } else {
                        before.fetch_add(1, Ordering::Relaxed);
                    }
                    if let Some(dak) = outcome.dak() {
                        daks.lock().push(dak.clone());
                    }
                }
            });
        }
        std::thread::sleep(StdDuration::from_millis(400));
        p.revoke(DS, &id, t0() + Duration::minutes(1)).unwrap();
        revoked.store(true, Ordering::Release);
        std::thread::sleep(StdDuration::from_millis(300));
        stop.store(true, Ordering::Release);
    });
    let daks = daks.into_inner();
    let live_daks = daks.iter().filter(|d| p.validate_dak(d, t0() + Duration::minutes(2))).count();
    let stale = p.stale_cache_reads();
    let ok = after_grants.load(Ordering::Relaxed) == 0
        && after.load(Ordering::Relaxed) > 0
        && !daks.is_empty()
        && live_daks == 0
        && stale == 0
        && !p.cache().holds_agreement(&id);
    Verdict::new(
        ok,
        format!(
            "8 requesters, {} requests before and {} after revoke, {} grants after, {} keys issued, {live_daks} still valid, {stale} stale cache reads",
            before.load(Ordering::Relaxed),
            after.load(Ordering::Relaxed),
            after_grants.load(Ordering::Relaxed),
            daks.len()
        ),
    )
}

fn c7_leases() -> Verdict {
    let created = t0();
    let mut chain = Chain::new(created - Duration::days(1));
    let txs = (1..=365u32)
        .map(|d| {
            Tx::new(
                "platform",
                TxPayload::LeaseCreate {
                    lease_id: format!("lease:{d}"),
                    agreement_hash_id: Uuid::new_v4(),
                    duration_days: d,
                },
            )
        })
        .collect();
    chain.append_block(txs, created).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ea5e);
    let mut cases: Vec<(u32, i64)> = Vec::new();
    for d in 1..=365u32 {
        let edge = i64::from(d) * 86_400;
        cases.extend([(d, 0), (d, edge - 1), (d, edge), (d, edge + 1)]);
    }
    for _ in 0..10_000 {
        let d = rng.gen_range(1..=365u32);
        cases.push((d, rng.gen_range(0..=2 * i64::from(d) * 86_400)));
    }
    let mut disagreements = 0;
    for &(d, offset) in &cases {
        let lease_id = format!("lease:{d}");
        let lease = chain.contract(&lease_id).and_then(|c| c.as_lease()).unwrap();
        let now = created + Duration::seconds(offset);
        let expected_grant = offset < i64::from(d) * 86_400;
        let grant = lease_check(lease, now, LeaseAction::Grant);
        let withdraw = lease_check(lease, now, LeaseAction::Withdraw);
        let grant_tx = Tx::new("platform", TxPayload::LeaseGrant { lease_id: lease_id.clone() });
        let withdraw_tx = Tx::new("platform", TxPayload::LeaseWithdraw { lease_id });
        let chain_grant = chain.validate_txs(&[grant_tx], now).is_ok();
        let chain_withdraw = chain.validate_txs(&[withdraw_tx], now).is_ok();
        if grant != expected_grant
            || withdraw == expected_grant
            || chain_grant != expected_grant
            || chain_withdraw == expected_grant
        {
            disagreements += 1;
        }
    }
    Verdict::new(
        disagreements == 0,
        format!("{} checks over durations 1-365, {disagreements} disagreements", cases.len()),
    )
}

struct ProofFactory {
    subject_key: KeyPair,
    controller_key: KeyPair,
    platform_key: KeyPair,
    btc: BitcoinNTimeProvider,
    template: ConsentAgreement,
    rng: ChaCha8Rng,
}

impl ProofFactory {
    fn new() -> Self {
        ProofFactory {
            subject_key: keys::small(41),
            controller_key: keys::small(42),
            platform_key: keys::small(43),
            btc: BitcoinNTimeProvider::synthetic(t0() - Duration::days(1), 300, 8),
            template: serde_json::from_str(SAMPLE_AGREEMENT).unwrap(),
            rng: ChaCha8Rng::seed_from_u64(0x8e8),
        }
    }

    fn proof(&mut self) -> ConsentProof {
        let dc = Identity::with_id(self.template.data_controller().id.clone(), Role::DataController, "controller");
        let (seed, bundle) = create_seed_with_rng(&dc, &self.controller_key, &mut self.rng).unwrap();
        let verified = verify_seed(seed, &bundle, self.controller_key.public_key()).unwrap();
        let mut agreement = self.template.clone();
        agreement.agreement_hash_id = seed;
        agreement.agreement_version = AgreementVersion::initial();
        agreement.linked_agreement_hash_id = None;
        let signed = sign_agreement(&agreement, &verified, &self.subject_key).unwrap();
        let hash = compute_agreement_hash(&agreement).unwrap();
        let ts = request_timestamp(&hash, &self.btc, t0()).unwrap();
        build_proof(&agreement, &signed, &[ts], &self.platform_key).unwrap()
    }
}

fn c8_throughput() -> Verdict {
    const OFFERED_PER_SEC: usize = 700;
    const TICKS_PER_SEC: usize = 10;
    const SECONDS: usize = 10;
    let per_tick = OFFERED_PER_SEC / TICKS_PER_SEC;
    let mut factory = ProofFactory::new();
    let proofs: Vec<ConsentProof> = (0..OFFERED_PER_SEC * SECONDS).map(|_| factory.proof()).collect();

    let mut chain = Chain::new(t0());
    let cache = StateStore::new();
    let lifecycle = LifecycleState {
        state: LifecycleStage::Process,
        entered_at: t0(),
    };
    let tick = StdDuration::from_secs(1) / TICKS_PER_SEC as u32;
    let mut window_counts = [0usize; SECONDS + 1];
    let mut busy = StdDuration::ZERO;
    let mut embedded = 0usize;
    let mut failures = 0usize;
    let start = Instant::now();
    for (k, batch) in proofs.chunks(per_tick).enumerate() {
        let due = start + tick * k as u32;
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        let began = Instant::now();
        let block_time = t0() + Duration::milliseconds(100 * (k as i64 + 1));
        let mut txs = Vec::with_capacity(batch.len());
        for proof in batch {
            match embed_proof(&chain, proof, "platform") {
                Ok(tx) => txs.push(tx),
                Err(_) => failures += 1,
            }
        }
        let count = txs.len();
        if chain.append_block(txs, block_time).is_err() {
            failures += count;
            continue;
        }
        for proof in batch {
            let key = StateKey::new(proof.agreement_hash_id.to_string(), DC, "marketing").unwrap();
            let entry = StateEntry::new(proof.agreement_hash_id, lifecycle, block_time + Duration::days(90), block_time);
            if cache.put(key, entry).is_err() {
                failures += 1;
            }
        }
        let done = Instant::now();
        busy += done - began;
        embedded += count;
        window_counts[((done - start).as_secs() as usize).min(SECONDS)] += count;
    }
    let wall = start.elapsed().max(StdDuration::from_secs(SECONDS as u64));
    let sustained = embedded as f64 / wall.as_secs_f64();
    let capacity = embedded as f64 / busy.as_secs_f64();
    let full_windows = &window_counts[..SECONDS];
    let worst = full_windows.iter().copied().min().unwrap_or(0);
    let ok = failures == 0
        && embedded == proofs.len()
        && sustained >= 500.0
        && worst >= 500
        && chain.state().embeds.len() == embedded
        && cache.len() == embedded;
    Verdict::new(
        ok,
        format!(
            "{embedded} embeds over {:.2} s = {sustained:.0}/s sustained, slowest 1 s window {worst}, busy-time capacity {capacity:.0}/s, {failures} failures",
            wall.as_secs_f64()
        ),
    )
}

/// Random valid transactions of every kind, accepted only if the chain would
/// take them.
fn mixed_chain(rng: &mut ChaCha8Rng, blocks: usize) -> Chain {
    let mut chain = Chain::new(t0());
    let owners = ["alice", "bob", "carol"];
    let mut leases: Vec<(String, String)> = Vec::new();
    let mut registers: Vec<(String, String)> = Vec::new();
    let mut storages: Vec<(String, String)> = Vec::new();
    let mut proxies: Vec<(String, String)> = Vec::new();
    for b in 0..blocks {
        let now = chain.head().ntime + Duration::hours(rng.gen_range(1..72));
        let mut accepted: Vec<Tx> = Vec::new();
        for _ in 0..rng.gen_range(1..8) {
            let owner = owners[rng.gen_range(0..owners.len())].to_owned();
            let pick = |v: &Vec<(String, String)>, rng: &mut ChaCha8Rng| v.get(rng.gen_range(0..v.len().max(1))).cloned();
            let tx = match rng.gen_range(0..9) {
                0 => Tx::new(
                    &owner,
                    TxPayload::EmbedProof {
                        agreement_hash_id: Uuid::from_bytes(rng.gen()),
                        linked_agreement_hash_id: rng.gen_bool(0.3).then(|| Uuid::from_bytes(rng.gen())),
                        proof_digest: hex::encode(rng.gen::<[u8; 32]>()),
                    },
                ),
                1 => {
                    let id = format!("lease:{b}:{}", accepted.len());
                    leases.push((id.clone(), owner.clone()));
                    Tx::new(
                        &owner,
                        TxPayload::LeaseCreate {
                            lease_id: id,
                            agreement_hash_id: Uuid::from_bytes(rng.gen()),
                            duration_days: rng.gen_range(1..5),
                        },
                    )
                }
                2 => match pick(&leases, rng) {
                    Some((id, o)) if rng.gen_bool(0.5) => Tx::new(o, TxPayload::LeaseWithdraw { lease_id: id }),
                    Some((id, _)) => Tx::new(&owner, TxPayload::LeaseGrant { lease_id: id }),
                    None => continue,
                },
                3 => {
                    let (id, o) = pick(&registers, rng)
                        .filter(|_| rng.gen_bool(0.6))
                        .unwrap_or_else(|| (format!("register:{b}:{}", accepted.len()), owner.clone()));
                    registers.push((id.clone(), o.clone()));
                    Tx::new(
                        o,
                        TxPayload::RegisterChangeLink {
                            contract_id: id,
                            new_link: Uuid::from_bytes(rng.gen()),
                        },
                    )
                }
                4 => {
                    let (id, o) = pick(&storages, rng)
                        .filter(|_| rng.gen_bool(0.6))
                        .unwrap_or_else(|| (format!("storage:{b}:{}", accepted.len()), owner.clone()));
                    storages.push((id.clone(), o.clone()));
                    Tx::new(
                        o,
                        TxPayload::StoragePut {
                            contract_id: id,
                            key: hex::encode(rng.gen::<[u8; 32]>()),
                            value: rng.gen(),
                        },
                    )
                }
                5 => match pick(&storages, rng) {
                    Some((id, o)) => {
                        let new_owner = owners[rng.gen_range(0..owners.len())].to_owned();
                        Tx::new(
                            o,
                            TxPayload::OwnershipTransfer {
                                contract_id: id,
                                new_owner,
                            },
                        )
                    }
                    None => continue,
                },
                6 => match pick(&leases, rng) {
                    Some((target, _)) => {
                        let id = format!("proxy:{b}:{}", accepted.len());
                        proxies.push((id.clone(), owner.clone()));
                        Tx::new(
                            &owner,
                            TxPayload::ProxyCall {
                                contract_id: id,
                                op: ProxyOp::UpdateTarget { new_target: target },
                            },
                        )
                    }
                    None => continue,
                },
                7 => match pick(&proxies, rng) {
                    Some((id, o)) => {
                        let call = if rng.gen_bool(0.5) {
                            RelayedCall::LeaseGrant
                        } else {
                            RelayedCall::LeaseWithdraw
                        };
                        Tx::new(
                            o,
                            TxPayload::ProxyCall {
                                contract_id: id,
                                op: ProxyOp::Relay { call },
                            },
                        )
                    }
                    None => continue,
                },
                _ => storage_tx(rng, &owner),
            };
            accepted.push(tx);
            if chain.validate_txs(&accepted, now).is_err() {
                accepted.pop();
            }
        }
        chain.append_block(accepted, now).unwrap();
    }
    chain
}

fn c9_determinism() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xde7);
    let chain = mixed_chain(&mut rng, 300);
    let txs: usize = chain.blocks().iter().map(|b| b.transactions.len()).sum();
    let kinds: BTreeSet<String> = chain
        .blocks()
        .iter()
        .flat_map(|b| b.transactions.iter().map(|t| format!("{:?}", t.kind())))
        .collect();
    let replayed = Chain::replay(chain.blocks()).unwrap();
    let again = Chain::replay(replayed.blocks()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.jsonl");
    chain.save_jsonl(&path).unwrap();
    let loaded = Chain::load_jsonl(&path).unwrap();
    let bytes = chain.state().canonical_bytes();
    let replay_ok = [&replayed, &again, &loaded]
        .iter()
        .all(|c| c.state().canonical_bytes() == bytes && c.head().block_hash == chain.head().block_hash);

    let mut mismatched = 0;
    let mut bad_paths = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=257);
        let leaves: Vec<String> = (0..n).map(|_| hex::encode(rng.gen::<[u8; 32]>())).collect();
        let root = build_batch_hash(&leaves).unwrap().root;
        if root != merkle_oracle::root_hex(&leaves) {
            mismatched += 1;
        }
        let batch = Batch::new(leaves.clone(), t0(), BatchTrigger::Manual).unwrap();
        let leaf = &leaves[rng.gen_range(0..n)];
        let path = prove_inclusion(&batch, leaf).unwrap();
        if path.siblings.len() > merkle_oracle::ceil_log2(n)
            || !oconsent::fingerprint::verify_inclusion(&root, leaf, &path)
        {
            bad_paths += 1;
        }
    }
    Verdict::new(
        replay_ok && kinds.len() == 8 && mismatched == 0 && bad_paths == 0,
        format!(
            "{} blocks / {txs} txs of {} kinds replayed byte-identical: {replay_ok}; 1000 merkle batches, {mismatched} root mismatches, {bad_paths} bad paths",
            chain.blocks().len(),
            kinds.len()
        ),
    )
}
