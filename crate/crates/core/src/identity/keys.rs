use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rsa::pkcs8::{DecodePublicKey, EncodePublicKey, LineEnding};
use rsa::{Pkcs1v15Sign, RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::IdentityError;
use crate::canonical::{sha256, sha256_hex};

pub const KEY_BITS: usize = 4096;
pub const RSA_SHA256_PKCS1V15: &str = "RSA-SHA256-PKCS1v1.5";

/// An RSA signing key. The private half never leaves this type; callers
/// hand it payloads to sign.
#[derive(Clone)]
pub struct KeyPair {
    private_key: RsaPrivateKey,
    public_key: Vec<u8>,
    created_at: DateTime<Utc>,
    key_id: String,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("key_id", &self.key_id)
            .field("created_at", &self.created_at)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_private_key(
        private_key: RsaPrivateKey,
        created_at: DateTime<Utc>,
    ) -> Result<Self, IdentityError> {
        let public_key = private_key
            .to_public_key()
            .to_public_key_der()
            .map_err(|e| IdentityError::KeyParse(e.to_string()))?
            .as_bytes()
            .to_vec();
        let key_id = sha256_hex(&public_key);
        Ok(KeyPair {
            private_key,
            public_key,
            created_at,
            key_id,
        })
    }

    /// DER-encoded SubjectPublicKeyInfo.
    pub fn public_key(&self) -> &[u8] {
        &self.public_key
    }

    pub fn public_key_pem(&self) -> String {
        self.private_key
            .to_public_key()
            .to_public_key_pem(LineEnding::LF)
            .expect("public key re-encodes")
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn bits(&self) -> usize {
        use rsa::traits::PublicKeyParts;
        self.private_key.n().bits()
    }

    pub(crate) fn private_key(&self) -> &RsaPrivateKey {
        &self.private_key
    }

    /// PKCS#1 v1.5 signature over a SHA-256 digest.
    pub(crate) fn sign_prehashed(&self, digest: &[u8; 32]) -> Result<Vec<u8>, IdentityError> {
        self.private_key
            .sign(Pkcs1v15Sign::new::<Sha256>(), digest)
            .map_err(|e| IdentityError::Signing(e.to_string()))
    }
}

/// Generate an RSA-4096 key. A seed makes generation reproducible (test mode).
pub fn generate_keypair(seed: Option<u64>) -> Result<KeyPair, IdentityError> {
    generate_keypair_with_bits(seed, KEY_BITS)
}

pub fn generate_keypair_with_bits(seed: Option<u64>, bits: usize) -> Result<KeyPair, IdentityError> {
    let private_key = match seed {
        Some(seed) => RsaPrivateKey::new(&mut ChaCha20Rng::seed_from_u64(seed), bits),
        None => RsaPrivateKey::new(&mut rand::rngs::OsRng, bits),
    }
    .map_err(|e| IdentityError::KeyGeneration(e.to_string()))?;
    KeyPair::from_private_key(private_key, Utc::now())
}

/// A detached signature over the SHA-256 digest of a payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureBundle {
    pub signer_key_id: String,
    pub algorithm: String,
    #[serde(with = "hex::serde")]
    pub signature: Vec<u8>,
    pub signed_digest: String,
}

/// Equivalent of `openssl dgst -sha256 -sign key payload`.
pub fn sign_digest(payload: &[u8], key: &KeyPair) -> Result<SignatureBundle, IdentityError> {
    if payload.is_empty() {
        return Err(IdentityError::EmptyPayload);
    }
    let digest = sha256(payload);
    Ok(SignatureBundle {
        signer_key_id: key.key_id().to_owned(),
        algorithm: RSA_SHA256_PKCS1V15.to_owned(),
        signature: key.sign_prehashed(&digest)?,
        signed_digest: hex::encode(digest),
    })
}

/// Equivalent of `openssl dgst -sha256 -verify pub -signature sig payload`,
/// plus a check that the bundle's recorded digest matches the payload.
///
/// `public_key` may be DER SubjectPublicKeyInfo or its PEM armor.
pub fn verify_signature(
    payload: &[u8],
    bundle: &SignatureBundle,
    public_key: &[u8],
) -> Result<bool, IdentityError> {
    SchemeRegistry::global().verify(payload, bundle, public_key)
}

/// A signature algorithm that can check a bundle against a public key.
pub trait SignatureScheme: Send + Sync {
    fn algorithm(&self) -> &str;

    fn verify_prehashed(
        &self,
        public_key: &[u8],
        digest: &[u8; 32],
        signature: &[u8],
    ) -> Result<bool, IdentityError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RsaPkcs1v15Sha256;

pub(crate) fn parse_public_key(bytes: &[u8]) -> Result<RsaPublicKey, IdentityError> {
    let parsed = if bytes.starts_with(b"-----BEGIN") {
        let pem = std::str::from_utf8(bytes).map_err(|e| IdentityError::KeyParse(e.to_string()))?;
        RsaPublicKey::from_public_key_pem(pem)
    } else {
        RsaPublicKey::from_public_key_der(bytes)
    };
    parsed.map_err(|e| IdentityError::KeyParse(e.to_string()))
}

impl SignatureScheme for RsaPkcs1v15Sha256 {
    fn algorithm(&self) -> &str {
        RSA_SHA256_PKCS1V15
    }

    fn verify_prehashed(
        &self,
        public_key: &[u8],
        digest: &[u8; 32],
        signature: &[u8],
    ) -> Result<bool, IdentityError> {
        let key = parse_public_key(public_key)?;
        Ok(key
            .verify(Pkcs1v15Sign::new::<Sha256>(), digest, signature)
            .is_ok())
    }
}

/// Signature schemes by algorithm name.
#[derive(Clone)]
pub struct SchemeRegistry {
    schemes: HashMap<String, Arc<dyn SignatureScheme>>,
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        let mut registry = SchemeRegistry {
            schemes: HashMap::new(),
        };
        registry.register(Arc::new(RsaPkcs1v15Sha256));
        registry
    }
}

impl SchemeRegistry {
    pub fn global() -> &'static SchemeRegistry {
        static GLOBAL: OnceLock<SchemeRegistry> = OnceLock::new();
        GLOBAL.get_or_init(SchemeRegistry::default)
    }

    pub fn register(&mut self, scheme: Arc<dyn SignatureScheme>) {
        self.schemes.insert(scheme.algorithm().to_owned(), scheme);
    }

    pub fn verify(
        &self,
        payload: &[u8],
        bundle: &SignatureBundle,
        public_key: &[u8],
    ) -> Result<bool, IdentityError> {
        let scheme = self
            .schemes
            .get(&bundle.algorithm)
            .ok_or_else(|| IdentityError::UnsupportedAlgorithm(bundle.algorithm.clone()))?;
        let digest = sha256(payload);
        if !bundle.signed_digest.eq_ignore_ascii_case(&hex::encode(digest)) {
            // Still parse the key so malformed keys surface as errors.
            crate::identity::keys::parse_public_key(public_key)?;
            return Ok(false);
        }
        scheme.verify_prehashed(public_key, &digest, &bundle.signature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_keys;

    #[test]
    fn fixed_seed_is_deterministic() {
        let a = generate_keypair_with_bits(Some(7), 1024).unwrap();
        let b = generate_keypair_with_bits(Some(7), 1024).unwrap();
        assert_eq!(a.key_id(), b.key_id());
    }

    #[test]
    fn unseeded_keys_differ() {
        let a = generate_keypair_with_bits(None, 1024).unwrap();
        let b = generate_keypair_with_bits(None, 1024).unwrap();
        assert_ne!(a.key_id(), b.key_id());
    }

    #[test]
    fn default_key_is_rsa_4096_with_key_id_over_der() {
        let key = test_keys::subject();
        assert_eq!(key.bits(), 4096);
        assert_eq!(key.key_id(), sha256_hex(key.public_key()));
    }

    #[test]
    fn sign_verify_round_trip() {
        let key = test_keys::subject();
        let bundle = sign_digest(b"consent.json", key).unwrap();
        assert_eq!(bundle.signed_digest, sha256_hex(b"consent.json"));
        assert_eq!(bundle.signature.len(), 512);
        assert!(verify_signature(b"consent.json", &bundle, key.public_key()).unwrap());
        // PEM armor is accepted too.
        assert!(verify_signature(b"consent.json", &bundle, key.public_key_pem().as_bytes()).unwrap());
    }

    #[test]
    fn empty_payload_rejected() {
        assert!(matches!(
            sign_digest(b"", test_keys::subject()),
            Err(IdentityError::EmptyPayload)
        ));
    }

    #[test]
    fn tampering_detected() {
        let key = test_keys::subject();
        let mut bundle = sign_digest(b"payload", key).unwrap();
        assert!(!verify_signature(b"payload!", &bundle, key.public_key()).unwrap());
        assert!(!verify_signature(b"payload", &bundle, test_keys::controller().public_key()).unwrap());
        bundle.signature[10] ^= 0x01;
        assert!(!verify_signature(b"payload", &bundle, key.public_key()).unwrap());
    }

    #[test]
    fn malformed_key_is_parse_error() {
        let bundle = sign_digest(b"payload", test_keys::subject()).unwrap();
        assert!(matches!(
            verify_signature(b"payload", &bundle, b"not a key"),
            Err(IdentityError::KeyParse(_))
        ));
    }

    #[test]
    fn unknown_algorithm_rejected() {
        let key = test_keys::subject();
        let mut bundle = sign_digest(b"payload", key).unwrap();
        bundle.algorithm = "ed25519".into();
        assert!(matches!(
            verify_signature(b"payload", &bundle, key.public_key()),
            Err(IdentityError::UnsupportedAlgorithm(_))
        ));
    }
}
