//! Native state machines for the consent contracts: ownership, time lease,
//! version register, subject storage and the upgradeable proxy relay.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::SidechainError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferLogEntry {
    pub prev: String,
    pub new: String,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnershipState {
    pub contract_id: String,
    pub owner_curr: String,
    pub transfer_log: Vec<TransferLogEntry>,
}

impl OwnershipState {
    pub fn new(contract_id: impl Into<String>, owner: impl Into<String>) -> Self {
        OwnershipState {
            contract_id: contract_id.into(),
            owner_curr: owner.into(),
            transfer_log: Vec::new(),
        }
    }

    pub fn require_owner(&self, caller: &str) -> Result<(), SidechainError> {
        if caller == self.owner_curr {
            Ok(())
        } else {
            Err(SidechainError::NotOwner {
                contract_id: self.contract_id.clone(),
                caller: caller.to_owned(),
            })
        }
    }
}

fn is_null_id(id: &str) -> bool {
    id.trim_start_matches("0x").bytes().all(|b| b == b'0')
}

pub fn ownership_transfer(
    state: &OwnershipState,
    caller: &str,
    new_owner: &str,
    height: u64,
) -> Result<OwnershipState, SidechainError> {
    state.require_owner(caller)?;
    if is_null_id(new_owner) {
        return Err(SidechainError::ZeroAddress);
    }
    let mut next = state.clone();
    next.transfer_log.push(TransferLogEntry {
        prev: next.owner_curr.clone(),
        new: new_owner.to_owned(),
        height,
    });
    next.owner_curr = new_owner.to_owned();
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaseAction {
    Grant,
    Withdraw,
}

/// A consent lease that stops granting once `expires_at` is reached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaseState {
    pub lease_id: String,
    pub agreement_hash_id: Uuid,
    pub duration_days: u32,
    pub created_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub grants: u64,
    pub withdrawn: bool,
}

impl LeaseState {
    pub fn new(
        lease_id: impl Into<String>,
        agreement_hash_id: Uuid,
        duration_days: u32,
        created_at: DateTime<Utc>,
    ) -> Self {
        LeaseState {
            lease_id: lease_id.into(),
            agreement_hash_id,
            duration_days,
            created_at,
            expires_at: created_at + Duration::days(duration_days.into()),
            grants: 0,
            withdrawn: false,
        }
    }
}

/// Grant is allowed strictly before expiry, withdraw at or after it.
pub fn lease_check(state: &LeaseState, now: DateTime<Utc>, action: LeaseAction) -> bool {
    match action {
        LeaseAction::Grant => now < state.expires_at,
        LeaseAction::Withdraw => now >= state.expires_at,
    }
}

/// Points at the latest agreement version and remembers the earlier ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterState {
    pub contract_id: String,
    pub linked_contract: Uuid,
    pub previous_links: Vec<Uuid>,
}

/// Returns whether the link changed. Ownership is checked by the caller.
pub fn register_changelink(state: &RegisterState, new_link: Uuid) -> (RegisterState, bool) {
    if new_link == state.linked_contract {
        return (state.clone(), false);
    }
    let mut next = state.clone();
    next.previous_links.push(next.linked_contract);
    next.linked_contract = new_link;
    (next, true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageState {
    pub contract_id: String,
    /// 32-byte keys, hex encoded.
    pub map: BTreeMap<String, u64>,
}

pub fn storage_get(state: &StorageState, key: &str) -> u64 {
    state.map.get(&key.to_ascii_lowercase()).copied().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyLogEntry {
    pub caller: String,
    pub target_version: String,
    pub tx_hash: String,
    pub height: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyState {
    pub contract_id: String,
    pub curr_ver: String,
    pub call_log: Vec<ProxyLogEntry>,
}

/// A call relayed through a proxy to its current target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum RelayedCall {
    LeaseGrant,
    LeaseWithdraw,
    RegisterChangeLink { new_link: Uuid },
    StoragePut { key: String, value: u64 },
}

/// Log the call and name the target it routes to. The relayed outcome is
/// applied by the chain, which then records any failure in the log entry.
pub fn proxy_call(state: &ProxyState, caller: &str, tx_hash: &str, height: u64) -> (ProxyState, String) {
    let mut next = state.clone();
    next.call_log.push(ProxyLogEntry {
        caller: caller.to_owned(),
        target_version: state.curr_ver.clone(),
        tx_hash: tx_hash.to_owned(),
        height,
        error: None,
    });
    (next, state.curr_ver.clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContractBody {
    Lease(LeaseState),
    Register(RegisterState),
    Storage(StorageState),
    Proxy(ProxyState),
}

/// Every contract carries its ownership state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub ownership: OwnershipState,
    pub body: ContractBody,
}

impl Contract {
    pub fn id(&self) -> &str {
        &self.ownership.contract_id
    }

    pub fn as_lease(&self) -> Option<&LeaseState> {
        match &self.body {
            ContractBody::Lease(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_register(&self) -> Option<&RegisterState> {
        match &self.body {
            ContractBody::Register(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_storage(&self) -> Option<&StorageState> {
        match &self.body {
            ContractBody::Storage(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_proxy(&self) -> Option<&ProxyState> {
        match &self.body {
            ContractBody::Proxy(p) => Some(p),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> DateTime<Utc> {
        "2024-01-01T00:00:00Z".parse().unwrap()
    }

    #[test]
    fn ownership_rules() {
        let s = OwnershipState::new("c1", "alice");
        let s2 = ownership_transfer(&s, "alice", "bob", 3).unwrap();
        assert_eq!(s2.owner_curr, "bob");
        assert_eq!(s2.transfer_log, vec![TransferLogEntry { prev: "alice".into(), new: "bob".into(), height: 3 }]);
        assert!(matches!(ownership_transfer(&s2, "alice", "carol", 4), Err(SidechainError::NotOwner { .. })));
        assert!(matches!(ownership_transfer(&s2, "bob", "", 4), Err(SidechainError::ZeroAddress)));
        assert!(matches!(ownership_transfer(&s2, "bob", "0x0000", 4), Err(SidechainError::ZeroAddress)));
    }

    #[test]
    fn lease_boundaries() {
        let lease = LeaseState::new("l", Uuid::nil(), 90, t0());
        assert!(lease_check(&lease, t0() + Duration::days(89), LeaseAction::Grant));
        assert!(lease_check(&lease, t0(), LeaseAction::Grant));
        assert!(!lease_check(&lease, t0(), LeaseAction::Withdraw));
        let end = t0() + Duration::days(90);
        assert_eq!(lease.expires_at, end);
        assert!(!lease_check(&lease, end, LeaseAction::Grant));
        assert!(lease_check(&lease, end, LeaseAction::Withdraw));
        assert!(lease_check(&lease, end - Duration::nanoseconds(1), LeaseAction::Grant));
    }

    #[test]
    fn register_links() {
        let (l1, l2, l3) = (Uuid::from_u128(1), Uuid::from_u128(2), Uuid::from_u128(3));
        let r = RegisterState { contract_id: "r".into(), linked_contract: l1, previous_links: vec![] };
        let (r, changed) = register_changelink(&r, l2);
        assert!(changed);
        assert_eq!((r.linked_contract, r.previous_links.clone()), (l2, vec![l1]));
        let (same, changed) = register_changelink(&r, l2);
        assert!(!changed);
        assert_eq!(same, r);
        let (r, _) = register_changelink(&r, l3);
        assert_eq!(r.previous_links, vec![l1, l2]);
    }

    #[test]
    fn storage_defaults_to_zero() {
        let s = StorageState { contract_id: "s".into(), map: BTreeMap::new() };
        assert_eq!(storage_get(&s, &"ab".repeat(32)), 0);
    }
}
