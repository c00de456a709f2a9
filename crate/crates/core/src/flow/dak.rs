use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::canonical::to_canonical_bytes;
use crate::consent::ScopeEntry;
use crate::identity::{sign_digest, verify_signature, IdentityError, KeyPair, SignatureBundle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DakBody {
    pub dak_id: Uuid,
    pub agreement_hash_id: Uuid,
    pub holder: String,
    pub ops: BTreeSet<String>,
    /// The requested attributes, each under the scope entry that covers it.
    pub granted_scope: Vec<ScopeEntry>,
    pub issued_at: DateTime<Utc>,
    /// The earliest of the covering scope expiries and the lease expiry.
    pub expires_at: DateTime<Utc>,
}

/// A data access key: the platform-signed permission a controller shows to
/// the data holder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataAccessKey {
    #[serde(flatten)]
    pub body: DakBody,
    pub platform_signature: SignatureBundle,
}

impl DataAccessKey {
    pub fn issue(body: DakBody, platform_key: &KeyPair) -> Result<DataAccessKey, IdentityError> {
        let bytes = to_canonical_bytes(&body).expect("dak body serializes");
        Ok(DataAccessKey {
            platform_signature: sign_digest(&bytes, platform_key)?,
            body,
        })
    }

    pub fn signature_valid(&self, platform_public_key: &[u8]) -> bool {
        let bytes = to_canonical_bytes(&self.body).expect("dak body serializes");
        verify_signature(&bytes, &self.platform_signature, platform_public_key).unwrap_or(false)
    }

    pub fn id(&self) -> Uuid {
        self.body.dak_id
    }
}
