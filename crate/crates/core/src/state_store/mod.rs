//! In-memory agreement state cache keyed by (subject, controller, purpose).
//!
//! The cache is never the source of truth: callers write the authoritative
//! record first and then `put`. Invalidation holds the write lock, so once
//! `invalidate_on_event` returns no reader can observe the old entry.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::consent::{LifecycleStage, LifecycleState};

#[derive(Debug, Error)]
pub enum StateStoreError {
    #[error("state key component {0} is empty")]
    Key(&'static str),
    #[error("refusing to cache agreement {agreement} in stage {stage:?}")]
    Inactive { agreement: Uuid, stage: LifecycleStage },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey {
    subject_id: String,
    controller_id: String,
    purpose: String,
}

impl StateKey {
    pub fn new(
        subject_id: impl Into<String>,
        controller_id: impl Into<String>,
        purpose: impl Into<String>,
    ) -> Result<StateKey, StateStoreError> {
        let key = StateKey {
            subject_id: subject_id.into(),
            controller_id: controller_id.into(),
            purpose: purpose.into(),
        };
        for (name, value) in [
            ("subject_id", &key.subject_id),
            ("controller_id", &key.controller_id),
            ("purpose", &key.purpose),
        ] {
            if value.trim().is_empty() {
                return Err(StateStoreError::Key(name));
            }
        }
        Ok(key)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn controller_id(&self) -> &str {
        &self.controller_id
    }

    pub fn purpose(&self) -> &str {
        &self.purpose
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEntry {
    pub agreement_hash_id: Uuid,
    pub lifecycle: LifecycleState,
    pub expires_at: DateTime<Utc>,
    pub cached_at: DateTime<Utc>,
    /// Assigned by the store on `put`; strictly increasing per key.
    pub version: u64,
}

impl StateEntry {
    pub fn new(
        agreement_hash_id: Uuid,
        lifecycle: LifecycleState,
        expires_at: DateTime<Utc>,
        cached_at: DateTime<Utc>,
    ) -> Self {
        StateEntry {
            agreement_hash_id,
            lifecycle,
            expires_at,
            cached_at,
            version: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidationEvent {
    Revocation,
    VersionChange,
    LeaseExpiry,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub capacity: Option<usize>,
    pub hits: u64,
    pub misses: u64,
    pub puts: u64,
    pub invalidations: u64,
    pub expired: u64,
    pub evicted: u64,
}

struct Slot {
    entry: StateEntry,
    last_used: AtomicU64,
}

#[derive(Default)]
struct Inner {
    slots: HashMap<StateKey, Slot>,
    /// Survives invalidation so versions never repeat for a key.
    versions: HashMap<StateKey, u64>,
}

#[derive(Default)]
pub struct StateStore {
    inner: RwLock<Inner>,
    /// `None` disables least-recently-used eviction.
    capacity: Option<usize>,
    clock: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
    puts: AtomicU64,
    invalidations: AtomicU64,
    expired: AtomicU64,
    evicted: AtomicU64,
}

impl StateStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store that evicts the least recently used entry beyond `capacity`.
    pub fn with_capacity(capacity: usize) -> Self {
        StateStore {
            capacity: Some(capacity.max(1)),
            ..Self::default()
        }
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed)
    }

    /// Store `entry` under `key` and return its version.
    pub fn put(&self, key: StateKey, mut entry: StateEntry) -> Result<u64, StateStoreError> {
        if !entry.lifecycle.state.is_active() {
            return Err(StateStoreError::Inactive {
                agreement: entry.agreement_hash_id,
                stage: entry.lifecycle.state,
            });
        }
        let mut inner = self.inner.write();
        let version = inner.versions.get(&key).copied().unwrap_or(0) + 1;
        inner.versions.insert(key.clone(), version);
        entry.version = version;
        let fresh = !inner.slots.contains_key(&key);
        if fresh {
            if let Some(cap) = self.capacity {
                if inner.slots.len() >= cap {
                    let victim = inner
                        .slots
                        .iter()
                        .min_by_key(|(_, s)| s.last_used.load(Ordering::Relaxed))
                        .map(|(k, _)| k.clone());
                    if let Some(victim) = victim {
                        inner.slots.remove(&victim);
                        self.evicted.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        }
        inner.slots.insert(
            key,
            Slot {
                entry,
                last_used: AtomicU64::new(self.tick()),
            },
        );
        self.puts.fetch_add(1, Ordering::Relaxed);
        Ok(version)
    }

    /// The latest entry for `key`, regardless of expiry.
    pub fn get(&self, key: &StateKey) -> Option<StateEntry> {
        let inner = self.inner.read();
        match inner.slots.get(key) {
            Some(slot) => {
                slot.last_used.store(self.tick(), Ordering::Relaxed);
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(slot.entry.clone())
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Like `get`, but an entry whose TTL has lapsed at `now` is a miss.
    pub fn get_live(&self, key: &StateKey, now: DateTime<Utc>) -> Option<StateEntry> {
        let inner = self.inner.read();
        match inner.slots.get(key) {
            Some(slot) if slot.entry.expires_at > now => {
                slot.last_used.store(self.tick(), Ordering::Relaxed);
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(slot.entry.clone())
            }
            _ => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Remove `key`. Idempotent.
    pub fn invalidate_on_event(&self, event: InvalidationEvent, key: &StateKey) {
        let removed = self.inner.write().slots.remove(key).is_some();
        if removed {
            self.invalidations.fetch_add(1, Ordering::Relaxed);
            log::debug!("cache invalidated {key:?} on {event:?}");
        }
    }

    /// Remove every entry for `agreement` and return how many there were.
    pub fn invalidate_agreement(&self, event: InvalidationEvent, agreement: &Uuid) -> usize {
        let mut inner = self.inner.write();
        let before = inner.slots.len();
        inner.slots.retain(|_, s| s.entry.agreement_hash_id != *agreement);
        let removed = before - inner.slots.len();
        self.invalidations.fetch_add(removed as u64, Ordering::Relaxed);
        if removed > 0 {
            log::debug!("cache invalidated {removed} entries of {agreement} on {event:?}");
        }
        removed
    }

    /// Evict every entry with `expires_at <= now`.
    pub fn sweep(&self, now: DateTime<Utc>) -> usize {
        let mut inner = self.inner.write();
        let before = inner.slots.len();
        inner.slots.retain(|_, s| s.entry.expires_at > now);
        let evicted = before - inner.slots.len();
        self.expired.fetch_add(evicted as u64, Ordering::Relaxed);
        evicted
    }

    pub fn len(&self) -> usize {
        self.inner.read().slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether any cached entry belongs to `agreement`.
    pub fn holds_agreement(&self, agreement: &Uuid) -> bool {
        self.inner
            .read()
            .slots
            .values()
            .any(|s| s.entry.agreement_hash_id == *agreement)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            entries: self.len(),
            capacity: self.capacity,
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            puts: self.puts.load(Ordering::Relaxed),
            invalidations: self.invalidations.load(Ordering::Relaxed),
            expired: self.expired.load(Ordering::Relaxed),
            evicted: self.evicted.load(Ordering::Relaxed),
        }
    }
}

#[cfg(test)]
mod tests;
