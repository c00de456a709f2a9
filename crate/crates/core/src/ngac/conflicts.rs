use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::decide::list_permissions;
use super::graph::{NodeKind, PolicyGraph};
use super::NgacError;
use crate::consent::ScopeEntry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "conflict", rename_all = "snake_case")]
pub enum Conflict {
    /// A prohibition removes operations an association would otherwise grant.
    /// `user` and `object` witness one pair where the flip happens.
    ProhibitionOverridesGrant {
        association: usize,
        prohibition: usize,
        ops: BTreeSet<String>,
        user: String,
        object: String,
    },
    DuplicatePurpose(String),
    /// A scope entry names a data attribute with no O or OA node of that name.
    UnmappedAttribute { purpose: String, attribute: String },
}

/// Static checks over a policy graph and the consent scope it should enforce.
pub fn detect_conflicts(g: &PolicyGraph, scope: &[ScopeEntry]) -> Result<Vec<Conflict>, NgacError> {
    let mut out = Vec::new();
    out.extend(prohibition_conflicts(g)?);

    let mut seen = BTreeSet::new();
    let mut reported = BTreeSet::new();
    for entry in scope {
        if !seen.insert(entry.purpose.as_str()) && reported.insert(entry.purpose.as_str()) {
            out.push(Conflict::DuplicatePurpose(entry.purpose.clone()));
        }
    }

    let object_names: BTreeSet<&str> = g
        .nodes()
        .filter(|n| matches!(n.kind, NodeKind::O | NodeKind::OA))
        .map(|n| n.name.as_str())
        .collect();
    for entry in scope {
        for attr in &entry.data_attributes {
            if !object_names.contains(attr.as_str()) {
                out.push(Conflict::UnmappedAttribute {
                    purpose: entry.purpose.clone(),
                    attribute: attr.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Differential check: decide every (U, O) pair with and without
/// prohibitions and attribute each flipped operation to the association that
/// carried it and the prohibition that removed it.
fn prohibition_conflicts(g: &PolicyGraph) -> Result<Vec<Conflict>, NgacError> {
    if g.prohibitions().is_empty() {
        return Ok(Vec::new());
    }
    let open = g.without_prohibitions();
    let mut found: BTreeMap<(usize, usize), Conflict> = BTreeMap::new();
    for u in g.nodes_of_kind(NodeKind::U) {
        for o in g.nodes_of_kind(NodeKind::O) {
            let base = list_permissions(&open, &u.id, &o.id)?;
            if base.ops.is_empty() {
                continue;
            }
            let u_anc = g.ancestors(&u.id);
            let o_anc = g.ancestors(&o.id);
            for (pi, p) in g.prohibitions().iter().enumerate() {
                if !(u_anc.contains(&p.subject) && o_anc.contains(&p.target)) {
                    continue;
                }
                let flipped: BTreeSet<String> = base.ops.intersection(&p.ops).cloned().collect();
                if flipped.is_empty() {
                    continue;
                }
                for (ai, a) in g.associations().iter().enumerate() {
                    if !(u_anc.contains(&a.ua) && o_anc.contains(&a.target)) {
                        continue;
                    }
                    let ops: BTreeSet<String> = a.ops.intersection(&flipped).cloned().collect();
                    if ops.is_empty() {
                        continue;
                    }
                    found.entry((ai, pi)).or_insert_with(|| Conflict::ProhibitionOverridesGrant {
                        association: ai,
                        prohibition: pi,
                        ops,
                        user: u.id.clone(),
                        object: o.id.clone(),
                    });
                }
            }
        }
    }
    Ok(found.into_values().collect())
}
