use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Duration, NaiveDate};
use serde::Serialize;
use serde_json::{json, Value};
use uuid::Uuid;

use oconsent::canonical::to_canonical_bytes;
use oconsent::consent::{create_seed, ConsentProof, Party, PROOF_TYPE};
use oconsent::fingerprint::{verify_fingerprint_doc, FingerprintProofDoc, FINGERPRINT_PROOF_TYPE};
use oconsent::flow::{
    AccessOutcome, AccessRequest, ConsentRequest, ContextOutcome, CreationOutcome, DataAccessKey, ScopeRequest,
    SubjectDecision,
};
use oconsent::identity::{Identity, Role};
use oconsent::ngac::{list_permissions, PolicyGraph};
use oconsent::sidechain::Chain;

use crate::workspace::Workspace;
use crate::{
    AccessArgs, AnchorArgs, AuditArgs, CacheCommand, ChainCommand, Cli, ClockCommand, Command, GrantArgs,
    NgacCommand, PartyCommand, RequestArgs, RevokeArgs, Verdict, VerifyArgs,
};

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<Verdict> {
    // Checking a standalone policy file needs no data directory.
    if let Command::Ngac(NgacCommand::Check {
        user,
        op,
        object,
        policy: Some(path),
    }) = &cli.command
    {
        let graph = PolicyGraph::from_json(&fs::read_to_string(path)?)?;
        return ngac_check(&graph, user, op, object);
    }
    let mut ws = Workspace::open(&cli.data_dir, cli.clock, cli.key_bits, &cli.passphrase)?;
    let verdict = match cli.command {
        Command::Party(cmd) => party(&ws, cmd)?,
        Command::Request(args) => request(&ws, args)?,
        Command::Grant(args) => grant(&ws, args)?,
        Command::Revoke(args) => revoke(&ws, args)?,
        Command::Access(args) => access(&ws, args)?,
        Command::VerifyProof(args) => verify(&ws, args)?,
        Command::AnchorNow(args) => anchor_now(&ws, args, cli.confirmations)?,
        Command::Audit(args) => audit(&ws, args)?,
        Command::Chain(ChainCommand::Export { height }) => chain_export(&ws, height)?,
        Command::Ngac(NgacCommand::Check { user, op, object, .. }) => {
            ngac_check(&ws.platform.policy(), &user, &op, &object)?
        }
        Command::Cache(CacheCommand::Stats) => {
            print(&ws.platform.cache().stats())?;
            Verdict::Positive
        }
        Command::Clock(ClockCommand::Now) => {
            print(&json!({ "now": ws.now }))?;
            Verdict::Positive
        }
        Command::Clock(ClockCommand::Advance { days, seconds }) => {
            ws.advance(Duration::days(days) + Duration::seconds(seconds))?;
            print(&json!({ "now": ws.now }))?;
            Verdict::Positive
        }
    };
    ws.close()?;
    Ok(verdict)
}

fn party(ws: &Workspace, cmd: PartyCommand) -> Result<Verdict> {
    match cmd {
        PartyCommand::Add { role, name, id } => {
            if role == Role::Platform {
                bail!("platform identities are created with the data directory");
            }
            let identity = match id {
                Some(id) if id.len() == 32 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) => {
                    Identity::with_id(id, role, name)
                }
                Some(id) => bail!("identity id must be 32 lowercase hex characters, got {id:?}"),
                None => Identity::new(role, name),
            };
            let key = ws.new_key()?;
            let key_id = key.key_id().to_owned();
            ws.identities.register(identity.clone(), Some(key))?;
            ws.platform.register_party(identity.clone(), ws.identities.public_key(identity.id())?);
            print(&json!({ "identity": identity, "key_id": key_id }))?;
        }
        PartyCommand::List => {
            let parties: Vec<Identity> = ws.identities.identities();
            print(&parties)?;
        }
    }
    Ok(Verdict::Positive)
}

fn parse_scope(text: &str) -> Result<ScopeRequest> {
    let (purpose, rest) = text
        .split_once('=')
        .with_context(|| format!("scope {text:?} must look like purpose=attr1,attr2[@YYYY-MM-DD]"))?;
    let (attrs, expiry) = match rest.rsplit_once('@') {
        Some((attrs, date)) => (
            attrs,
            Some(NaiveDate::parse_from_str(date, "%Y-%m-%d").with_context(|| format!("bad expiry date {date:?}"))?),
        ),
        None => (rest, None),
    };
    let data_attributes: Vec<String> = attrs.split(',').map(str::trim).filter(|a| !a.is_empty()).map(str::to_owned).collect();
    if purpose.trim().is_empty() || data_attributes.is_empty() {
        bail!("scope {text:?} needs a purpose and at least one attribute");
    }
    Ok(ScopeRequest {
        purpose: purpose.trim().to_owned(),
        data_attributes,
        expiry,
    })
}

fn request_path(ws: &Workspace, id: &Uuid) -> Result<PathBuf> {
    Ok(ws.subdir("requests")?.join(format!("{id}.json")))
}

fn request(ws: &Workspace, args: RequestArgs) -> Result<Verdict> {
    let controller = ws.identity(&args.controller)?;
    let (seed, seed_signature) = create_seed(&controller, &ws.key_of(controller.id())?)?;
    let aux = args
        .aux
        .iter()
        .map(|id| {
            let identity = ws.identity(id)?;
            Ok(Party {
                name: identity.display_name.clone(),
                id: identity.id().to_owned(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let req = ConsentRequest {
        controller_id: args.controller,
        subject_id: args.subject,
        context: args.context,
        requested_scope: args.scopes.iter().map(|s| parse_scope(s)).collect::<Result<_>>()?,
        seed,
        seed_signature,
        lease_days: args.lease_days,
        is_transferrable: args.transferrable,
        data_controller_aux: aux,
    };
    let outcome = ws.platform.handle_context(&req, ws.now)?;
    let verdict = match outcome {
        ContextOutcome::Rejected { .. } => Verdict::Negative,
        _ => {
            write_json(&request_path(ws, &seed)?, &req)?;
            Verdict::Positive
        }
    };
    print(&json!({ "request_id": seed, "context": outcome }))?;
    Ok(verdict)
}

fn grant(ws: &Workspace, args: GrantArgs) -> Result<Verdict> {
    let path = match args.request.parse::<Uuid>() {
        Ok(id) => request_path(ws, &id)?,
        Err(_) => PathBuf::from(&args.request),
    };
    let req: ConsentRequest = read_json(&path)?;
    let subject_key;
    let decision = if args.decline {
        SubjectDecision::Decline
    } else {
        subject_key = ws.key_of(&req.subject_id)?;
        SubjectDecision::Accept {
            subject_key: &subject_key,
        }
    };
    let outcome = ws.platform.run_creation_flow(&req, decision, ws.now)?;
    let verdict = match &outcome {
        CreationOutcome::Created { agreement_hash_id, proof, .. } => {
            let dir = ws.subdir("proofs")?;
            write_json(&dir.join(format!("{agreement_hash_id}.proof.json")), proof)?;
            if let Some(record) = ws.platform.record(agreement_hash_id) {
                write_json(&dir.join(format!("{agreement_hash_id}.agreement.json")), &record.agreement)?;
            }
            Verdict::Positive
        }
        _ => Verdict::Negative,
    };
    print(&outcome)?;
    Ok(verdict)
}

fn revoke(ws: &Workspace, args: RevokeArgs) -> Result<Verdict> {
    ws.platform.revoke(&args.subject, &args.agreement, ws.now)?;
    print(&json!({ "revoked": args.agreement, "at": ws.now }))?;
    Ok(Verdict::Positive)
}

fn access(ws: &Workspace, args: AccessArgs) -> Result<Verdict> {
    let req = AccessRequest {
        requester: args.requester,
        agreement_hash_id: args.agreement,
        purpose: args.purpose,
        ops: args.ops.into_iter().collect::<BTreeSet<_>>(),
        attributes: args.attributes,
    };
    let outcome = ws.platform.request_access(&req, ws.now)?;
    if let AccessOutcome::Granted { dak } = &outcome {
        write_json(&ws.subdir("daks")?.join(format!("{}.json", dak.id())), dak)?;
    }
    print(&outcome)?;
    Ok(if outcome.is_granted() { Verdict::Positive } else { Verdict::Negative })
}

fn verify(ws: &Workspace, args: VerifyArgs) -> Result<Verdict> {
    let doc: Value = read_json(&args.file)?;
    let (valid, report) = if doc.get("dak_id").is_some() {
        let dak: DataAccessKey = serde_json::from_value(doc)?;
        let signature = dak.signature_valid(ws.platform.public_key());
        let current = ws.platform.validate_dak(&dak, ws.now);
        (signature && current, json!({ "kind": "data_access_key", "signature": signature, "valid_now": current }))
    } else {
        match doc.get("type").and_then(Value::as_str) {
            Some(t) if t == PROOF_TYPE => {
                let proof: ConsentProof = serde_json::from_value(doc)?;
                let check = ws.platform.verify_consent_proof(&proof);
                (check.passed(), json!({ "kind": "consent_proof", "checks": check }))
            }
            Some(t) if t == FINGERPRINT_PROOF_TYPE => {
                let fp: FingerprintProofDoc = serde_json::from_value(doc)?;
                let check = ws.platform.with_chain(|chain| {
                    ws.platform
                        .with_main_chains(|btc, eth| verify_fingerprint_doc(&fp, Some(chain), &[btc, eth]))
                });
                (check.passed, json!({ "kind": "fingerprint_proof", "checks": check }))
            }
            other => bail!("{} is not a consent proof, fingerprint proof or access key (type {other:?})", args.file.display()),
        }
    };
    print(&json!({ "valid": valid, "report": report }))?;
    Ok(if valid { Verdict::Positive } else { Verdict::Negative })
}

fn anchor_now(ws: &Workspace, args: AnchorArgs, confirmations: u64) -> Result<Verdict> {
    let eth = args.eth_confirmations.unwrap_or(confirmations);
    let Some(summary) = ws.platform.anchor_now(ws.now, confirmations, eth)? else {
        print(&json!({ "anchored": false, "reason": "nothing pending" }))?;
        return Ok(Verdict::Positive);
    };
    let dir = ws.subdir("fingerprints")?;
    let mut written = Vec::new();
    for id in ws.platform.agreement_ids() {
        if let Ok(doc) = ws.platform.reconcile(&id) {
            if doc.batch_id == summary.batch_id {
                let path = dir.join(format!("{id}.fingerprint.json"));
                write_json(&path, &doc)?;
                written.push(path);
            }
        }
    }
    print(&json!({ "anchored": true, "summary": summary, "fingerprint_docs": written }))?;
    Ok(if summary.receipts.is_empty() { Verdict::Negative } else { Verdict::Positive })
}

fn audit(ws: &Workspace, args: AuditArgs) -> Result<Verdict> {
    let export = ws.platform.export_audit(&args.agreement)?;
    match args.out {
        Some(path) => {
            write_json(&path, &export)?;
            print(&json!({ "records": export.records.len(), "written": path }))?;
        }
        None => print(&export)?,
    }
    Ok(Verdict::Positive)
}

fn chain_export(ws: &Workspace, height: Option<u64>) -> Result<Verdict> {
    ws.platform.with_chain(|chain: &Chain| -> Result<Verdict> {
        let blocks = match height {
            Some(h) => vec![chain.block(h).with_context(|| format!("no block at height {h}; head is {}", chain.height()))?],
            None => chain.blocks().iter().collect(),
        };
        for block in blocks {
            println!("{}", String::from_utf8(to_canonical_bytes(block)?)?);
        }
        Ok(Verdict::Positive)
    })
}

fn ngac_check(graph: &PolicyGraph, user: &str, op: &str, object: &str) -> Result<Verdict> {
    let decision = list_permissions(graph, user, object)?;
    let allowed = decision.allows(op);
    print(&json!({ "allowed": allowed, "op": op, "decision": decision }))?;
    Ok(if allowed { Verdict::Positive } else { Verdict::Negative })
}
