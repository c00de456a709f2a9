use std::collections::HashMap;
use std::sync::atomic::AtomicBool;
use std::time::Instant;

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::consent::{advance_lifecycle, LifecycleEvent};

fn t0() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2026-01-01T00:00:00Z").unwrap().with_timezone(&Utc)
}

fn active() -> LifecycleState {
    advance_lifecycle(LifecycleState::collected(t0()), LifecycleEvent::Store, t0()).unwrap()
}

fn key(i: usize) -> StateKey {
    StateKey::new(format!("ds{i}"), "dc", "marketing").unwrap()
}

fn entry(id: u128, expires_in_days: i64) -> StateEntry {
    StateEntry::new(Uuid::from_u128(id), active(), t0() + Duration::days(expires_in_days), t0())
}

#[test]
fn put_get_versions() {
    let s = StateStore::new();
    assert_eq!(s.put(key(0), entry(1, 10)).unwrap(), 1);
    assert_eq!(s.get(&key(0)).unwrap().agreement_hash_id, Uuid::from_u128(1));
    assert_eq!(s.put(key(0), entry(2, 10)).unwrap(), 2);
    let got = s.get(&key(0)).unwrap();
    assert_eq!((got.agreement_hash_id, got.version), (Uuid::from_u128(2), 2));
    assert!(s.get(&key(1)).is_none());
}

#[test]
fn malformed_keys_rejected() {
    assert!(matches!(StateKey::new("", "dc", "p"), Err(StateStoreError::Key("subject_id"))));
    assert!(matches!(StateKey::new("ds", " ", "p"), Err(StateStoreError::Key("controller_id"))));
    assert!(matches!(StateKey::new("ds", "dc", ""), Err(StateStoreError::Key("purpose"))));
}

#[test]
fn inactive_lifecycle_never_cached() {
    let s = StateStore::new();
    let mut e = entry(1, 10);
    e.lifecycle = LifecycleState::collected(t0());
    assert!(matches!(s.put(key(0), e), Err(StateStoreError::Inactive { .. })));
    for stage in [LifecycleStage::Revocation, LifecycleStage::Destruction] {
        let mut e = entry(1, 10);
        e.lifecycle.state = stage;
        assert!(s.put(key(0), e).is_err());
    }
    assert!(s.is_empty());
}

#[test]
fn invalidation_is_idempotent_and_versions_continue() {
    let s = StateStore::new();
    s.put(key(0), entry(1, 10)).unwrap();
    s.invalidate_on_event(InvalidationEvent::Revocation, &key(0));
    assert!(s.get(&key(0)).is_none());
    s.invalidate_on_event(InvalidationEvent::Revocation, &key(0));
    assert_eq!(s.put(key(0), entry(1, 10)).unwrap(), 2);
    assert_eq!(s.invalidate_agreement(InvalidationEvent::VersionChange, &Uuid::from_u128(1)), 1);
    assert!(!s.holds_agreement(&Uuid::from_u128(1)));
}

#[test]
fn interleaved_sequence_matches_sequential_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = StateStore::new();
    let mut oracle: HashMap<StateKey, (u128, u64)> = HashMap::new();
    let mut versions: HashMap<StateKey, u64> = HashMap::new();
    for step in 0..1000u128 {
        let k = key(rng.gen_range(0..8));
        if rng.gen_bool(0.6) {
            let v = versions.entry(k.clone()).or_default();
            *v += 1;
            oracle.insert(k.clone(), (step, *v));
            assert_eq!(s.put(k, entry(step, 10)).unwrap(), *v);
        } else {
            oracle.remove(&k);
            s.invalidate_on_event(InvalidationEvent::LeaseExpiry, &k);
        }
    }
    for i in 0..8 {
        let got = s.get(&key(i)).map(|e| (e.agreement_hash_id.as_u128(), e.version));
        assert_eq!(got, oracle.get(&key(i)).copied());
    }
}

#[test]
fn sweep_removes_expired() {
    let s = StateStore::new();
    assert_eq!(s.sweep(t0()), 0);
    s.put(key(0), entry(1, -1)).unwrap();
    s.put(key(1), entry(2, 1)).unwrap();
    assert_eq!(s.sweep(t0()), 1);
    assert!(s.get(&key(1)).is_some());
    assert!(s.get_live(&key(1), t0() + Duration::days(1)).is_none());
}

#[test]
fn sweep_matches_filter_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = StateStore::new();
    let mut all = Vec::new();
    for i in 0..500 {
        let days = rng.gen_range(-50..50);
        s.put(key(i), entry(i as u128, days)).unwrap();
        all.push((i, t0() + Duration::days(days)));
    }
    let now = t0() + Duration::days(rng.gen_range(-10..10));
    let survivors: Vec<usize> = all.iter().filter(|(_, e)| *e > now).map(|(i, _)| *i).collect();
    assert_eq!(s.sweep(now), all.len() - survivors.len());
    for (i, _) in &all {
        assert_eq!(s.get(&key(*i)).is_some(), survivors.contains(i));
    }
}

#[test]
fn lru_eviction_when_bounded() {
    let s = StateStore::with_capacity(2);
    s.put(key(0), entry(0, 10)).unwrap();
    s.put(key(1), entry(1, 10)).unwrap();
    s.get(&key(0));
    s.put(key(2), entry(2, 10)).unwrap();
    assert!(s.get(&key(0)).is_some());
    assert!(s.get(&key(1)).is_none());
    assert_eq!(s.stats().evicted, 1);
}

#[test]
fn no_reader_sees_invalidated_entry() {
    let s = StateStore::new();
    for i in 0..64 {
        s.put(key(i), entry(i as u128, 10)).unwrap();
    }
    let done = AtomicBool::new(false);
    let invalidated: Vec<AtomicBool> = (0..64).map(|_| AtomicBool::new(false)).collect();
    std::thread::scope(|scope| {
        for r in 0..8 {
            let (s, done, invalidated) = (&s, &done, &invalidated);
            scope.spawn(move || {
                let mut i = r;
                while !done.load(Ordering::Acquire) {
                    let k = i % 64;
                    // Read the flag first: if it was set, the invalidation
                    // returned before this get started.
                    let gone = invalidated[k].load(Ordering::Acquire);
                    if gone {
                        assert!(s.get(&key(k)).is_none(), "stale read of {k}");
                    } else {
                        s.get(&key(k));
                    }
                    i += 7;
                }
            });
        }
        for (k, flag) in invalidated.iter().enumerate() {
            s.invalidate_on_event(InvalidationEvent::Revocation, &key(k));
            flag.store(true, Ordering::Release);
        }
        done.store(true, Ordering::Release);
    });
    assert!(s.is_empty());
}

#[test]
fn read_latency_at_scale_is_reported() {
    let s = StateStore::new();
    for i in 0..100_000 {
        s.put(key(i), entry(i as u128, 10)).unwrap();
    }
    let start = Instant::now();
    for i in (0..100_000).step_by(97) {
        assert!(s.get(&key(i)).is_some());
    }
    let per_read = start.elapsed() / (100_000 / 97 + 1) as u32;
    eprintln!("state store read latency at 1e5 entries: {per_read:?}");
}
