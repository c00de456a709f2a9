//! NGAC policy machine: a typed assignment DAG with associations granting
//! operations and prohibitions denying them.

mod conflicts;
mod decide;
mod graph;
mod sample;

pub use conflicts::{detect_conflicts, Conflict};
pub use decide::{check, list_permissions, Decision};
pub use graph::{Association, Node, NodeKind, PolicyDoc, PolicyGraph, Prohibition};
pub use sample::{sample_policy, SamplePolicyIds, SAMPLE_IDS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NgacError {
    #[error("{child} ({child_kind:?}) cannot be assigned to {parent} ({parent_kind:?})")]
    Kind {
        child: String,
        child_kind: NodeKind,
        parent: String,
        parent_kind: NodeKind,
    },
    #[error("{node} has kind {actual:?}; {role} must be one of {allowed:?}")]
    RoleKind {
        node: String,
        actual: NodeKind,
        role: &'static str,
        allowed: &'static [NodeKind],
    },
    #[error("assigning {child} to {parent} would create a cycle")]
    Cycle { child: String, parent: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node id {0} already exists")]
    DuplicateNode(String),
    #[error("operation set must not be empty")]
    EmptyOperations,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
