use std::collections::BTreeSet;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{FlowConfig, FlowError};
use crate::consent::{
    AgreementMetadata, AgreementVersion, ConsentAgreement, Party, ScopeEntry, AGREEMENT_TYPE, OCONSENT_CONTEXT,
};
use crate::identity::SignatureBundle;

/// One requested purpose. A missing expiry takes the configured default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeRequest {
    pub purpose: String,
    pub data_attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRequest {
    pub controller_id: String,
    pub subject_id: String,
    /// The purpose domain this request is about.
    pub context: String,
    pub requested_scope: Vec<ScopeRequest>,
    /// Becomes the agreement id.
    pub seed: Uuid,
    pub seed_signature: SignatureBundle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lease_days: Option<u32>,
    #[serde(default)]
    pub is_transferrable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data_controller_aux: Vec<Party>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "purpose", rename_all = "snake_case")]
pub enum RejectReason {
    /// Separate purposes need separate consent; this one is already held.
    DuplicatePurpose(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ContextOutcome {
    NewTemplate { draft: Box<ConsentAgreement> },
    AddendumRequired { draft: Box<ConsentAgreement>, supersedes: Uuid },
    Rejected { reason: RejectReason },
}

impl ContextOutcome {
    pub fn draft(&self) -> Option<&ConsentAgreement> {
        match self {
            ContextOutcome::NewTemplate { draft } | ContextOutcome::AddendumRequired { draft, .. } => Some(draft),
            ContextOutcome::Rejected { .. } => None,
        }
    }
}

/// Purpose domains are short lowercase tokens such as `marketing`.
pub fn validate_context(context: &str) -> Result<(), FlowError> {
    let ok = !context.is_empty()
        && context.len() <= 64
        && context.starts_with(|c: char| c.is_ascii_lowercase())
        && context
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(FlowError::Context(format!("{context:?} is not a purpose domain")))
    }
}

fn check_request(request: &ConsentRequest) -> Result<(), FlowError> {
    validate_context(&request.context)?;
    if request.requested_scope.is_empty() {
        return Err(FlowError::Context("no scope requested".into()));
    }
    let mut purposes = BTreeSet::new();
    for entry in &request.requested_scope {
        validate_context(&entry.purpose)?;
        if !purposes.insert(entry.purpose.as_str()) {
            return Err(FlowError::Context(format!("purpose {} requested twice", entry.purpose)));
        }
    }
    if !purposes.contains(request.context.as_str()) {
        return Err(FlowError::Context(format!(
            "context {} matches no requested purpose",
            request.context
        )));
    }
    Ok(())
}

fn scope_entries(request: &ConsentRequest, config: &FlowConfig, date: NaiveDate) -> Vec<ScopeEntry> {
    request
        .requested_scope
        .iter()
        .map(|s| ScopeEntry {
            purpose: s.purpose.clone(),
            data_attributes: s.data_attributes.clone(),
            expiry: s
                .expiry
                .unwrap_or_else(|| date + Duration::days(config.expiry_days_for(&s.purpose))),
        })
        .collect()
}

/// Decide what a request leads to given the current head agreement between
/// the same parties, if any. The seed must already be verified.
pub fn draft_for_context(
    request: &ConsentRequest,
    subject: Party,
    controller: Party,
    head: Option<&ConsentAgreement>,
    config: &FlowConfig,
    now: DateTime<Utc>,
) -> Result<ContextOutcome, FlowError> {
    check_request(request)?;
    let date = now.date_naive();
    let new_scope = scope_entries(request, config, date);
    let Some(head) = head else {
        let draft = ConsentAgreement {
            context_uri: OCONSENT_CONTEXT.to_owned(),
            doc_type: AGREEMENT_TYPE.to_owned(),
            agreement_hash_id: request.seed,
            agreement_version: AgreementVersion::initial(),
            linked_agreement_hash_id: None,
            metadata: AgreementMetadata {
                data_subject: subject,
                data_controller: controller,
                data_controller_aux: request.data_controller_aux.clone(),
                agreement_date: date,
                is_transferrable: request.is_transferrable,
            },
            consent_scope: new_scope,
            monetization_enabled: false,
            monetization_scope: serde_json::json!({}),
        };
        return Ok(ContextOutcome::NewTemplate { draft: Box::new(draft) });
    };
    if let Some(dup) = new_scope.iter().find(|s| head.scope_for(&s.purpose).is_some()) {
        return Ok(ContextOutcome::Rejected {
            reason: RejectReason::DuplicatePurpose(dup.purpose.clone()),
        });
    }
    let mut draft = head.clone();
    draft.agreement_hash_id = request.seed;
    draft.agreement_version = head.agreement_version.bump();
    draft.linked_agreement_hash_id = Some(head.agreement_hash_id);
    draft.metadata.agreement_date = date;
    // Entries that lapsed before the addendum date cannot be carried over.
    draft.consent_scope.retain(|s| s.expiry > date);
    draft.consent_scope.extend(new_scope);
    Ok(ContextOutcome::AddendumRequired {
        draft: Box::new(draft),
        supersedes: head.agreement_hash_id,
    })
}
