//! Actor identities, signing keys and surrogate identities.

mod keys;
mod store;
mod surrogate;

pub use keys::{
    generate_keypair, generate_keypair_with_bits, sign_digest, verify_signature, KeyPair,
    RsaPkcs1v15Sha256, SchemeRegistry, SignatureBundle, SignatureScheme, KEY_BITS,
    RSA_SHA256_PKCS1V15,
};
pub(crate) use keys::parse_public_key;
pub use store::{IdentityRecord, IdentityStore};
pub use surrogate::{derive_surrogate_id, SurrogateMap, SurrogateRegistry};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("refusing to sign an empty payload")]
    EmptyPayload,
    #[error("cannot parse key: {0}")]
    KeyParse(String),
    #[error("signing failed: {0}")]
    Signing(String),
    #[error("unsupported signature algorithm {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("unknown surrogate id {0}")]
    UnknownSurrogate(String),
    #[error("surrogate {surrogate} already maps to a different primary identity")]
    SurrogateCollision { surrogate: String },
    #[error("{role:?} callers may not {action}")]
    AccessDenied { role: Role, action: &'static str },
    #[error("unknown identity {0}")]
    UnknownIdentity(String),
    #[error("identity {0} already registered")]
    DuplicateIdentity(String),
    #[error("identity {0} has no signing key")]
    NoKey(String),
    #[error("key storage: {0}")]
    KeyStorage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The actors of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    DataSubject,
    DataController,
    AuxDataController,
    DataValidator,
    Platform,
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "data_subject" | "ds" => Ok(Role::DataSubject),
            "data_controller" | "dc" => Ok(Role::DataController),
            "aux_data_controller" | "adc" => Ok(Role::AuxDataController),
            "data_validator" | "dv" => Ok(Role::DataValidator),
            "platform" => Ok(Role::Platform),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

/// A registered actor. `id` is 32 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    id: String,
    role: Role,
    pub display_name: String,
}

impl Identity {
    /// New identity with a random id.
    pub fn new(role: Role, display_name: impl Into<String>) -> Self {
        Self::with_id(uuid::Uuid::new_v4().simple().to_string(), role, display_name)
    }

    pub fn with_id(id: impl Into<String>, role: Role, display_name: impl Into<String>) -> Self {
        Identity {
            id: id.into(),
            role,
            display_name: display_name.into(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Fixed at construction; there is no setter.
    pub fn role(&self) -> Role {
        self.role
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_ids_are_32_hex() {
        let a = Identity::new(Role::DataSubject, "Mr. XYZ");
        assert_eq!(a.id().len(), 32);
        assert!(a.id().bytes().all(|b| b.is_ascii_hexdigit()));
        assert_ne!(a.id(), Identity::new(Role::DataSubject, "Mr. XYZ").id());
    }

    #[test]
    fn role_parsing() {
        assert_eq!("data-controller".parse::<Role>().unwrap(), Role::DataController);
        assert_eq!("ADC".parse::<Role>().unwrap(), Role::AuxDataController);
        assert!("root".parse::<Role>().is_err());
    }
}
