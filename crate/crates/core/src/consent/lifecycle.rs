use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ConsentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LifecycleStage {
    Collection,
    Storage,
    Process,
    Modification,
    Revocation,
    Archive,
    Destruction,
}

impl LifecycleStage {
    pub const ALL: [LifecycleStage; 7] = [
        LifecycleStage::Collection,
        LifecycleStage::Storage,
        LifecycleStage::Process,
        LifecycleStage::Modification,
        LifecycleStage::Revocation,
        LifecycleStage::Archive,
        LifecycleStage::Destruction,
    ];

    /// Stages in which data may be accessed under the agreement.
    pub fn is_active(self) -> bool {
        matches!(self, LifecycleStage::Storage | LifecycleStage::Process)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleEvent {
    Store,
    Process,
    Modify,
    Revoke,
    Archive,
    Destroy,
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 6] = [
        LifecycleEvent::Store,
        LifecycleEvent::Process,
        LifecycleEvent::Modify,
        LifecycleEvent::Revoke,
        LifecycleEvent::Archive,
        LifecycleEvent::Destroy,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleState {
    pub state: LifecycleStage,
    pub entered_at: DateTime<Utc>,
}

impl LifecycleState {
    pub fn collected(at: DateTime<Utc>) -> Self {
        LifecycleState {
            state: LifecycleStage::Collection,
            entered_at: at,
        }
    }
}

fn next_stage(from: LifecycleStage, event: LifecycleEvent) -> Option<LifecycleStage> {
    use LifecycleEvent as E;
    use LifecycleStage as S;
    match (from, event) {
        (S::Collection, E::Store) => Some(S::Storage),
        (S::Storage, E::Process) => Some(S::Process),
        (S::Process, E::Modify) => Some(S::Modification),
        (S::Modification, E::Process) => Some(S::Process),
        (S::Process, E::Revoke) => Some(S::Revocation),
        (S::Process | S::Revocation, E::Archive) => Some(S::Archive),
        (S::Archive, E::Destroy) => Some(S::Destruction),
        _ => None,
    }
}

pub fn advance_lifecycle(
    current: LifecycleState,
    event: LifecycleEvent,
    now: DateTime<Utc>,
) -> Result<LifecycleState, ConsentError> {
    next_stage(current.state, event)
        .map(|state| LifecycleState {
            state,
            entered_at: now,
        })
        .ok_or(ConsentError::LifecycleTransition {
            from: current.state,
            event,
        })
}
