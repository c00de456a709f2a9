//! One-to-many mapping from a data subject's primary id to surrogate ids.

use std::collections::HashMap;

use hmac::{Hmac, Mac};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::{Identity, IdentityError, Role};

/// hex(HMAC-SHA-256(salt, primary_id || index_be64)).
pub fn derive_surrogate_id(primary_id: &str, index: u64, salt: &[u8]) -> String {
    let mut mac = Hmac::<Sha256>::new_from_slice(salt).expect("HMAC accepts any key length");
    mac.update(primary_id.as_bytes());
    mac.update(&index.to_be_bytes());
    hex::encode(mac.finalize().into_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateMap {
    pub primary_id: String,
    pub surrogates: Vec<String>,
    #[serde(with = "hex::serde")]
    pub derivation_salt: Vec<u8>,
}

#[derive(Default)]
struct Inner {
    maps: HashMap<String, SurrogateMap>,
    primaries: HashMap<String, Identity>,
    reverse: HashMap<String, String>,
}

/// Writes are serialized behind a lock; reads are concurrent.
#[derive(Default)]
pub struct SurrogateRegistry {
    inner: RwLock<Inner>,
}

impl SurrogateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn derive(
        &self,
        primary: &Identity,
        index: u64,
        salt: &[u8],
    ) -> Result<String, IdentityError> {
        let surrogate = derive_surrogate_id(primary.id(), index, salt);
        debug_assert_ne!(surrogate, primary.id());
        let mut inner = self.inner.write();
        match inner.reverse.get(&surrogate) {
            Some(owner) if owner != primary.id() => {
                return Err(IdentityError::SurrogateCollision { surrogate })
            }
            Some(_) => return Ok(surrogate),
            None => {}
        }
        inner
            .primaries
            .entry(primary.id().to_owned())
            .or_insert_with(|| primary.clone());
        inner
            .reverse
            .insert(surrogate.clone(), primary.id().to_owned());
        let map = inner
            .maps
            .entry(primary.id().to_owned())
            .or_insert_with(|| SurrogateMap {
                primary_id: primary.id().to_owned(),
                surrogates: Vec::new(),
                derivation_salt: salt.to_vec(),
            });
        map.surrogates.push(surrogate.clone());
        Ok(surrogate)
    }

    /// Only the platform may unmask a surrogate.
    pub fn resolve(&self, surrogate: &str, caller: &Identity) -> Result<Identity, IdentityError> {
        if caller.role() != Role::Platform {
            return Err(IdentityError::AccessDenied {
                role: caller.role(),
                action: "resolve surrogate identities",
            });
        }
        self.resolve_unchecked(surrogate)
    }

    pub(crate) fn resolve_unchecked(&self, surrogate: &str) -> Result<Identity, IdentityError> {
        let inner = self.inner.read();
        inner
            .reverse
            .get(surrogate)
            .and_then(|primary| inner.primaries.get(primary))
            .cloned()
            .ok_or_else(|| IdentityError::UnknownSurrogate(surrogate.to_owned()))
    }

    pub fn is_surrogate(&self, id: &str) -> bool {
        self.inner.read().reverse.contains_key(id)
    }

    pub fn map_for(&self, primary_id: &str) -> Option<SurrogateMap> {
        self.inner.read().maps.get(primary_id).cloned()
    }

    pub fn maps(&self) -> Vec<SurrogateMap> {
        let mut maps: Vec<_> = self.inner.read().maps.values().cloned().collect();
        maps.sort_by(|a, b| a.primary_id.cmp(&b.primary_id));
        maps
    }

    /// Rebuild the indices from persisted maps.
    pub fn restore(&self, maps: Vec<SurrogateMap>, primaries: impl IntoIterator<Item = Identity>) {
        let mut inner = self.inner.write();
        for identity in primaries {
            inner.primaries.insert(identity.id().to_owned(), identity);
        }
        for map in maps {
            for s in &map.surrogates {
                inner.reverse.insert(s.clone(), map.primary_id.clone());
            }
            inner.maps.insert(map.primary_id.clone(), map);
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use hmac::{Hmac, Mac};

    fn subject() -> Identity {
        Identity::with_id("7a2a83b1694940f38d6a2a8f50e4d979", Role::DataSubject, "Mr. XYZ")
    }

    #[test]
    fn derivation_is_deterministic() {
        let reg = SurrogateRegistry::new();
        let a = reg.derive(&subject(), 3, b"salt").unwrap();
        let b = reg.derive(&subject(), 3, b"salt").unwrap();
        assert_eq!(a, b);
        assert_eq!(reg.map_for(subject().id()).unwrap().surrogates.len(), 1);
    }

    #[test]
    fn indices_give_distinct_surrogates_matching_independent_hmac() {
        let reg = SurrogateRegistry::new();
        let s0 = reg.derive(&subject(), 0, b"salt").unwrap();
        let s1 = reg.derive(&subject(), 1, b"salt").unwrap();
        assert_ne!(s0, s1);
        for (index, got) in [(0u64, &s0), (1, &s1)] {
            let mut msg = subject().id().as_bytes().to_vec();
            msg.extend_from_slice(&index.to_be_bytes());
            let mut mac = Hmac::<Sha256>::new_from_slice(b"salt").unwrap();
            mac.update(&msg);
            assert_eq!(got, &hex::encode(mac.finalize().into_bytes()));
        }
    }

    #[test]
    fn resolve_inverts_derive_for_platform() {
        let reg = SurrogateRegistry::new();
        let platform = Identity::new(Role::Platform, "OConsent");
        let s = reg.derive(&subject(), 9, b"salt").unwrap();
        assert_eq!(reg.resolve(&s, &platform).unwrap(), subject());
    }

    #[test]
    fn unknown_surrogate() {
        let reg = SurrogateRegistry::new();
        let platform = Identity::new(Role::Platform, "OConsent");
        assert!(matches!(
            reg.resolve("deadbeef", &platform),
            Err(IdentityError::UnknownSurrogate(_))
        ));
    }

    #[test]
    fn controllers_cannot_unmask() {
        let reg = SurrogateRegistry::new();
        let s = reg.derive(&subject(), 0, b"salt").unwrap();
        let dc = Identity::new(Role::DataController, "ABC LLC.");
        assert!(matches!(
            reg.resolve(&s, &dc),
            Err(IdentityError::AccessDenied { role: Role::DataController, .. })
        ));
    }

    #[test]
    fn injective_over_ten_thousand_indices() {
        let reg = SurrogateRegistry::new();
        let p = subject();
        let mut seen = HashSet::new();
        for i in 0..10_000 {
            let s = reg.derive(&p, i, b"platform-salt").unwrap();
            assert_ne!(s, p.id());
            assert!(seen.insert(s));
        }
        assert_eq!(reg.map_for(p.id()).unwrap().surrogates.len(), 10_000);
    }
}
