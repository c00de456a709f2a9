use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{AgreementVersion, ConsentAgreement, ConsentError};

/// All versions of one agreement, oldest first. Only `head` is enforced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionLineage {
    pub head: Uuid,
    pub links: Vec<(AgreementVersion, Uuid)>,
}

impl VersionLineage {
    pub fn new(root: &ConsentAgreement) -> Self {
        VersionLineage {
            head: root.agreement_hash_id,
            links: vec![(root.agreement_version.clone(), root.agreement_hash_id)],
        }
    }

    pub fn head_version(&self) -> &AgreementVersion {
        &self.links.last().expect("lineage is never empty").0
    }

    pub fn contains(&self, id: &Uuid) -> bool {
        self.links.iter().any(|(_, l)| l == id)
    }

    pub fn is_head(&self, id: &Uuid) -> bool {
        &self.head == id
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn link_version(
    lineage: &VersionLineage,
    new_agreement: &ConsentAgreement,
) -> Result<VersionLineage, ConsentError> {
    if new_agreement.linked_agreement_hash_id != Some(lineage.head) {
        return Err(ConsentError::Lineage {
            expected: lineage.head,
            found: new_agreement.linked_agreement_hash_id,
        });
    }
    if lineage.contains(&new_agreement.agreement_hash_id) {
        return Err(ConsentError::Lineage {
            expected: lineage.head,
            found: Some(new_agreement.agreement_hash_id),
        });
    }
    if new_agreement.agreement_version <= *lineage.head_version() {
        return Err(ConsentError::VersionOrder {
            head: lineage.head_version().clone(),
            new: new_agreement.agreement_version.clone(),
        });
    }
    let mut next = lineage.clone();
    next.links.push((
        new_agreement.agreement_version.clone(),
        new_agreement.agreement_hash_id,
    ));
    next.head = new_agreement.agreement_hash_id;
    Ok(next)
}
