use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::graph::{Association, NodeKind, PolicyGraph, Prohibition};
use super::NgacError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub subject: String,
    pub object: String,
    pub ops: BTreeSet<String>,
    /// Associations that contribute at least one permitted operation.
    pub granted_by: Vec<Association>,
    /// Prohibitions that applied to this pair.
    pub denied_by: Vec<Prohibition>,
}

impl Decision {
    pub fn allows(&self, op: &str) -> bool {
        self.ops.contains(op)
    }
}

fn expect_kind(g: &PolicyGraph, id: &str, role: &'static str, allowed: &'static [NodeKind]) -> Result<(), NgacError> {
    let kind = g.node(id)?.kind;
    if allowed.contains(&kind) {
        Ok(())
    } else {
        Err(NgacError::RoleKind {
            node: id.to_owned(),
            actual: kind,
            role,
            allowed,
        })
    }
}

/// Policy classes reachable from `node`, memoized over the ancestor set of
/// the object so each node is expanded once.
fn pcs_reachable<'g>(
    g: &'g PolicyGraph,
    node: &'g str,
    memo: &mut HashMap<&'g str, BTreeSet<&'g str>>,
) -> BTreeSet<&'g str> {
    if let Some(hit) = memo.get(node) {
        return hit.clone();
    }
    let mut out = BTreeSet::new();
    if g.node(node).map(|n| n.kind == NodeKind::PC).unwrap_or(false) {
        out.insert(node);
    }
    for p in g.parents(node) {
        out.extend(pcs_reachable(g, p, memo));
    }
    memo.insert(node, out.clone());
    out
}

/// Operations `u` may perform on `o`.
///
/// An operation is granted when, for every policy class reachable from `o`,
/// some association from an attribute reachable from `u` to an attribute
/// reachable from `o` carries it and that attribute reaches the policy
/// class. An object outside every policy class gets nothing. Prohibitions
/// whose subject is `u` or reachable from `u`, and whose target is reachable
/// from `o`, remove their operations afterwards.
pub fn list_permissions(g: &PolicyGraph, u: &str, o: &str) -> Result<Decision, NgacError> {
    expect_kind(g, u, "decision subject", &[NodeKind::U])?;
    expect_kind(g, o, "decision object", &[NodeKind::O])?;
    let u_anc = g.ancestors(u);
    let o_anc = g.ancestors(o);

    let mut memo = HashMap::new();
    let object_pcs = pcs_reachable(g, g.node(o)?.id.as_str(), &mut memo);
    let mut decision = Decision {
        subject: u.to_owned(),
        object: o.to_owned(),
        ops: BTreeSet::new(),
        granted_by: Vec::new(),
        denied_by: Vec::new(),
    };
    if object_pcs.is_empty() {
        return Ok(decision);
    }

    let mut coverage: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut contributing = Vec::new();
    for ua in &u_anc {
        for (_, a) in g.associations_of(ua) {
            if !o_anc.contains(&a.target) {
                continue;
            }
            let target = g.node(&a.target)?.id.as_str();
            let covered = pcs_reachable(g, target, &mut memo);
            if covered.is_empty() {
                continue;
            }
            for op in &a.ops {
                coverage.entry(op.as_str()).or_default().extend(covered.iter().copied());
            }
            contributing.push(a);
        }
    }
    decision.ops = coverage
        .into_iter()
        .filter(|(_, pcs)| *pcs == object_pcs)
        .map(|(op, _)| op.to_owned())
        .collect();

    for p in g.prohibitions() {
        if u_anc.contains(&p.subject) && o_anc.contains(&p.target) {
            decision.ops.retain(|op| !p.ops.contains(op));
            decision.denied_by.push(p.clone());
        }
    }
    decision.granted_by = contributing
        .into_iter()
        .filter(|a| a.ops.iter().any(|op| decision.ops.contains(op)))
        .cloned()
        .collect();
    Ok(decision)
}

pub fn check(g: &PolicyGraph, u: &str, op: &str, o: &str) -> Result<bool, NgacError> {
    Ok(list_permissions(g, u, o)?.allows(op))
}
