use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::platform::DenialReason;
use super::FlowError;
use crate::canonical::{canonical_digest_hex, to_canonical_bytes};
use crate::fingerprint::FingerprintProofDoc;
use crate::sidechain::ZERO_HASH;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaseSnapshot {
    pub lease_id: String,
    pub expires_at: DateTime<Utc>,
    pub grant_allowed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Created {
        version: String,
        height: u64,
    },
    Declined,
    Rejected {
        reason: String,
    },
    AccessGranted {
        requester: String,
        dak_id: Uuid,
        ops: BTreeSet<String>,
        attributes: Vec<String>,
        /// Operations the policy graph allowed, per attribute.
        ngac: Vec<(String, BTreeSet<String>)>,
        lease: Option<LeaseSnapshot>,
    },
    AccessDenied {
        requester: String,
        reason: DenialReason,
        ops: BTreeSet<String>,
        attributes: Vec<String>,
        ngac: Vec<(String, BTreeSet<String>)>,
        lease: Option<LeaseSnapshot>,
    },
    Revoked {
        voided_daks: usize,
    },
}

impl AuditEvent {
    pub fn is_access(&self) -> bool {
        matches!(self, AuditEvent::AccessGranted { .. } | AuditEvent::AccessDenied { .. })
    }
}

/// One append-only entry; `record_hash` covers every other field, including
/// the previous record's hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub agreement_hash_id: Uuid,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: AuditEvent,
    pub prev_hash: String,
    pub record_hash: String,
}

#[derive(Serialize)]
struct RecordBody<'a> {
    seq: u64,
    agreement_hash_id: &'a Uuid,
    at: &'a DateTime<Utc>,
    #[serde(flatten)]
    event: &'a AuditEvent,
    prev_hash: &'a str,
}

impl AuditRecord {
    pub fn compute_hash(&self) -> String {
        canonical_digest_hex(&RecordBody {
            seq: self.seq,
            agreement_hash_id: &self.agreement_hash_id,
            at: &self.at,
            event: &self.event,
            prev_hash: &self.prev_hash,
        })
        .expect("audit records serialize")
    }
}

/// Recompute the hash chain from the first record.
pub fn verify_audit_chain(records: &[AuditRecord]) -> Result<(), FlowError> {
    let mut prev = ZERO_HASH.to_owned();
    for (i, r) in records.iter().enumerate() {
        let fail = |reason: &str| FlowError::AuditTampered {
            seq: r.seq,
            reason: reason.to_owned(),
        };
        if r.seq != i as u64 {
            return Err(fail("sequence gap"));
        }
        if r.prev_hash != prev {
            return Err(fail("previous hash mismatch"));
        }
        if r.compute_hash() != r.record_hash {
            return Err(fail("record hash mismatch"));
        }
        if i > 0 && r.at < records[i - 1].at {
            return Err(fail("time went backwards"));
        }
        prev = r.record_hash.clone();
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditExport {
    pub agreement_hash_id: Uuid,
    pub records: Vec<AuditRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint_proof: Option<FingerprintProofDoc>,
}

/// The platform-wide audit trail, optionally mirrored to a JSONL file.
#[derive(Debug, Default)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
    path: Option<PathBuf>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load and verify an existing file, or start one.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FlowError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() { Self::read_file(&path)? } else { Vec::new() };
        verify_audit_chain(&records)?;
        Ok(AuditLog {
            records,
            path: Some(path),
        })
    }

    pub fn read_file(path: &Path) -> Result<Vec<AuditRecord>, FlowError> {
        let mut out = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                let record = serde_json::from_str(&line).map_err(|e| FlowError::AuditTampered {
                    seq: out.len() as u64,
                    reason: format!("unreadable record: {e}"),
                })?;
                out.push(record);
            }
        }
        Ok(out)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&mut self, agreement_hash_id: Uuid, at: DateTime<Utc>, event: AuditEvent) -> Result<&AuditRecord, FlowError> {
        let prev_hash = self
            .records
            .last()
            .map(|r| r.record_hash.clone())
            .unwrap_or_else(|| ZERO_HASH.to_owned());
        // Keep the log monotone even if callers pass an earlier clock reading.
        let at = self.records.last().map_or(at, |r| r.at.max(at));
        let mut record = AuditRecord {
            seq: self.records.len() as u64,
            agreement_hash_id,
            at,
            event,
            prev_hash,
            record_hash: String::new(),
        };
        record.record_hash = record.compute_hash();
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = to_canonical_bytes(&record)?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    /// Verify the stored copy (the file when there is one) and return the
    /// records for the given agreements in order.
    pub fn export(&self, agreements: &BTreeSet<Uuid>) -> Result<Vec<AuditRecord>, FlowError> {
        let on_disk;
        let records = match &self.path {
            Some(path) => {
                on_disk = Self::read_file(path)?;
                &on_disk
            }
            None => &self.records,
        };
        verify_audit_chain(records)?;
        let head = |rs: &[AuditRecord]| rs.last().map(|r| r.record_hash.clone());
        if records.len() != self.records.len() || head(records) != head(&self.records) {
            return Err(FlowError::AuditTampered {
                seq: records.len() as u64,
                reason: "stored log differs from the live log".into(),
            });
        }
        Ok(records
            .iter()
            .filter(|r| agreements.contains(&r.agreement_hash_id))
            .cloned()
            .collect())
    }
}
