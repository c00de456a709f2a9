//! Double signing: the data controller signs the seed, then the data
//! subject signs the agreement hash.

use rand::RngCore;
use uuid::Uuid;

use super::{compute_agreement_hash, ConsentAgreement, ConsentError};
use crate::identity::{sign_digest, verify_signature, Identity, KeyPair, Role, SignatureBundle};

/// A fresh UUID v4 seed signed by a data controller. The seed becomes the
/// agreement's `agreement_hash_id`.
pub fn create_seed(
    controller: &Identity,
    controller_key: &KeyPair,
) -> Result<(Uuid, SignatureBundle), ConsentError> {
    create_seed_with_rng(controller, controller_key, &mut rand::rngs::OsRng)
}

pub fn create_seed_with_rng(
    controller: &Identity,
    controller_key: &KeyPair,
    rng: &mut dyn RngCore,
) -> Result<(Uuid, SignatureBundle), ConsentError> {
    if controller.role() != Role::DataController {
        return Err(ConsentError::Role {
            required: Role::DataController,
            actual: controller.role(),
            action: "issue consent seeds",
        });
    }
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    let seed = uuid::Builder::from_random_bytes(bytes).into_uuid();
    let bundle = sign_digest(seed.hyphenated().to_string().as_bytes(), controller_key)?;
    Ok((seed, bundle))
}

/// Proof that a seed's controller signature checked out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedSeed {
    seed: Uuid,
    controller_key_id: String,
}

impl VerifiedSeed {
    pub fn seed(&self) -> Uuid {
        self.seed
    }

    pub fn controller_key_id(&self) -> &str {
        &self.controller_key_id
    }
}

pub fn verify_seed(
    seed: Uuid,
    bundle: &SignatureBundle,
    controller_public_key: &[u8],
) -> Result<VerifiedSeed, ConsentError> {
    let payload = seed.hyphenated().to_string();
    match verify_signature(payload.as_bytes(), bundle, controller_public_key) {
        Ok(true) => Ok(VerifiedSeed {
            seed,
            controller_key_id: bundle.signer_key_id.clone(),
        }),
        Ok(false) => Err(ConsentError::SeedNotVerified),
        Err(e) => Err(e.into()),
    }
}

/// The data subject's signature over the agreement hash, hex encoded.
/// This is the proof's `signed_agreement_hash_id`.
pub fn sign_agreement(
    agreement: &ConsentAgreement,
    seed: &VerifiedSeed,
    subject_key: &KeyPair,
) -> Result<String, ConsentError> {
    if seed.seed != agreement.agreement_hash_id {
        return Err(ConsentError::SeedNotVerified);
    }
    let hash = compute_agreement_hash(agreement)?;
    let bundle = sign_digest(hash.as_bytes(), subject_key)?;
    Ok(hex::encode(bundle.signature))
}

pub fn verify_signed_agreement_hash(
    agreement: &ConsentAgreement,
    signed_hash: &str,
    subject_public_key: &[u8],
) -> Result<bool, ConsentError> {
    let Ok(signature) = hex::decode(signed_hash) else {
        return Ok(false);
    };
    let hash = compute_agreement_hash(agreement)?;
    let bundle = SignatureBundle {
        signer_key_id: String::new(),
        algorithm: crate::identity::RSA_SHA256_PKCS1V15.to_owned(),
        signature,
        signed_digest: crate::canonical::sha256_hex(hash.as_bytes()),
    };
    Ok(verify_signature(hash.as_bytes(), &bundle, subject_public_key)?)
}

/// Apply the actors' public keys in protocol order: controller over the
/// seed, then subject over the agreement hash.
pub fn verify_provability(
    agreement: &ConsentAgreement,
    seed_bundle: &SignatureBundle,
    controller_public_key: &[u8],
    signed_hash: &str,
    subject_public_key: &[u8],
) -> Result<bool, ConsentError> {
    match verify_seed(agreement.agreement_hash_id, seed_bundle, controller_public_key) {
        Ok(_) => {}
        Err(ConsentError::SeedNotVerified) => return Ok(false),
        Err(e) => return Err(e),
    }
    verify_signed_agreement_hash(agreement, signed_hash, subject_public_key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consent::agreement::fixtures::sample;
    use crate::test_keys;

    fn dc() -> Identity {
        Identity::with_id("478ecb5f2b674ad18976007d64c069de", Role::DataController, "ABC LLC.")
    }

    #[test]
    fn seed_verifies_under_controller_key() {
        let key = test_keys::controller();
        let (seed, bundle) = create_seed(&dc(), key).unwrap();
        assert_eq!(seed.get_version_num(), 4);
        assert!(verify_signature(seed.to_string().as_bytes(), &bundle, key.public_key()).unwrap());
        assert_eq!(verify_seed(seed, &bundle, key.public_key()).unwrap().seed(), seed);
    }

    #[test]
    fn subjects_cannot_issue_seeds() {
        let ds = Identity::new(Role::DataSubject, "Mr. XYZ");
        assert!(matches!(
            create_seed(&ds, test_keys::subject()),
            Err(ConsentError::Role { .. })
        ));
    }

    #[test]
    fn seeds_are_fresh() {
        let key = test_keys::controller();
        assert_ne!(create_seed(&dc(), key).unwrap().0, create_seed(&dc(), key).unwrap().0);
    }

    #[test]
    fn double_signing_chain_verifies_sequentially() {
        let dc_key = test_keys::controller();
        let ds_key = test_keys::subject();
        let (seed, seed_bundle) = create_seed(&dc(), dc_key).unwrap();
        let mut agreement = sample();
        agreement.agreement_hash_id = seed;
        let verified = verify_seed(seed, &seed_bundle, dc_key.public_key()).unwrap();
        let signed = sign_agreement(&agreement, &verified, ds_key).unwrap();
        assert!(verify_signed_agreement_hash(&agreement, &signed, ds_key.public_key()).unwrap());
        assert!(verify_provability(
            &agreement,
            &seed_bundle,
            dc_key.public_key(),
            &signed,
            ds_key.public_key()
        )
        .unwrap());
        // Keys applied in the wrong roles fail.
        assert!(!verify_provability(
            &agreement,
            &seed_bundle,
            ds_key.public_key(),
            &signed,
            dc_key.public_key()
        )
        .unwrap());
    }

    #[test]
    fn bad_seed_signature_blocks_signing() {
        let dc_key = test_keys::controller();
        let (seed, mut bundle) = create_seed(&dc(), dc_key).unwrap();
        bundle.signature[0] ^= 0x80;
        assert!(matches!(
            verify_seed(seed, &bundle, dc_key.public_key()),
            Err(ConsentError::SeedNotVerified)
        ));
        // A seed verified for another agreement does not authorize this one.
        let (other, other_bundle) = create_seed(&dc(), dc_key).unwrap();
        let verified = verify_seed(other, &other_bundle, dc_key.public_key()).unwrap();
        let mut agreement = sample();
        agreement.agreement_hash_id = seed;
        assert!(matches!(
            sign_agreement(&agreement, &verified, test_keys::subject()),
            Err(ConsentError::SeedNotVerified)
        ));
    }
}
