use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::NgacError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    U,
    UA,
    O,
    OA,
    PC,
}

impl NodeKind {
    /// Whether a `self` node may be assigned to a `parent` node.
    pub fn may_assign_to(self, parent: NodeKind) -> bool {
        use NodeKind::*;
        matches!(
            (self, parent),
            (U, UA) | (UA, UA) | (O, OA) | (OA, OA) | (UA, PC) | (OA, PC)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// Names are labels only and may repeat.
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Association {
    pub ua: String,
    pub ops: BTreeSet<String>,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prohibition {
    pub subject: String,
    pub ops: BTreeSet<String>,
    pub target: String,
}

/// The on-disk policy format.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDoc {
    pub nodes: Vec<Node>,
    /// `[child, parent]` pairs.
    pub assignments: Vec<(String, String)>,
    #[serde(default)]
    pub associations: Vec<Association>,
    #[serde(default)]
    pub prohibitions: Vec<Prohibition>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyGraph {
    nodes: BTreeMap<String, Node>,
    parents: BTreeMap<String, BTreeSet<String>>,
    associations: Vec<Association>,
    prohibitions: Vec<Prohibition>,
    associations_by_ua: HashMap<String, Vec<usize>>,
}

const ASSOC_SOURCE: &[NodeKind] = &[NodeKind::UA];
const ATTRIBUTE_TARGET: &[NodeKind] = &[NodeKind::UA, NodeKind::OA];
const PROHIBITION_SUBJECT: &[NodeKind] = &[NodeKind::U, NodeKind::UA];

impl PolicyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_node(&mut self, id: &str, name: &str, kind: NodeKind) -> Result<(), NgacError> {
        if self.nodes.contains_key(id) {
            return Err(NgacError::DuplicateNode(id.to_owned()));
        }
        self.nodes.insert(
            id.to_owned(),
            Node {
                id: id.to_owned(),
                name: name.to_owned(),
                kind,
            },
        );
        self.parents.insert(id.to_owned(), BTreeSet::new());
        Ok(())
    }

    pub fn node(&self, id: &str) -> Result<&Node, NgacError> {
        self.nodes.get(id).ok_or_else(|| NgacError::UnknownNode(id.to_owned()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    pub fn find_by_name(&self, name: &str) -> impl Iterator<Item = &Node> {
        let name = name.to_owned();
        self.nodes.values().filter(move |n| n.name == name)
    }

    pub fn parents(&self, id: &str) -> impl Iterator<Item = &String> {
        self.parents.get(id).into_iter().flatten()
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&String, &String)> {
        self.parents.iter().flat_map(|(c, ps)| ps.iter().map(move |p| (c, p)))
    }

    pub fn associations(&self) -> &[Association] {
        &self.associations
    }

    pub fn prohibitions(&self) -> &[Prohibition] {
        &self.prohibitions
    }

    pub(crate) fn associations_of(&self, ua: &str) -> impl Iterator<Item = (usize, &Association)> {
        self.associations_by_ua
            .get(ua)
            .into_iter()
            .flatten()
            .map(|&i| (i, &self.associations[i]))
    }

    /// `to` is reachable from `from` along assignments (reflexive).
    pub fn reaches(&self, from: &str, to: &str) -> bool {
        if from == to {
            return true;
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            for p in self.parents(n) {
                if p == to {
                    return true;
                }
                if seen.insert(p.as_str()) {
                    queue.push_back(p);
                }
            }
        }
        false
    }

    /// Every node reachable from `from`, including itself.
    pub fn ancestors(&self, from: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([from.to_owned()]);
        let mut queue = VecDeque::from([from.to_owned()]);
        while let Some(n) = queue.pop_front() {
            for p in self.parents(&n) {
                if seen.insert(p.clone()) {
                    queue.push_back(p.clone());
                }
            }
        }
        seen
    }

    pub fn assign(&mut self, child: &str, parent: &str) -> Result<(), NgacError> {
        let c = self.node(child)?.kind;
        let p = self.node(parent)?.kind;
        if !c.may_assign_to(p) {
            return Err(NgacError::Kind {
                child: child.to_owned(),
                child_kind: c,
                parent: parent.to_owned(),
                parent_kind: p,
            });
        }
        if self.reaches(parent, child) {
            return Err(NgacError::Cycle {
                child: child.to_owned(),
                parent: parent.to_owned(),
            });
        }
        self.parents.get_mut(child).expect("node exists").insert(parent.to_owned());
        Ok(())
    }

    fn require_kind(&self, id: &str, role: &'static str, allowed: &'static [NodeKind]) -> Result<(), NgacError> {
        let kind = self.node(id)?.kind;
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

    fn ops_set<I, S>(ops: I) -> Result<BTreeSet<String>, NgacError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ops: BTreeSet<String> = ops.into_iter().map(Into::into).collect();
        if ops.is_empty() {
            Err(NgacError::EmptyOperations)
        } else {
            Ok(ops)
        }
    }

    pub fn associate<I, S>(&mut self, ua: &str, ops: I, target: &str) -> Result<(), NgacError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.require_kind(ua, "association source", ASSOC_SOURCE)?;
        self.require_kind(target, "association target", ATTRIBUTE_TARGET)?;
        let ops = Self::ops_set(ops)?;
        self.associations_by_ua
            .entry(ua.to_owned())
            .or_default()
            .push(self.associations.len());
        self.associations.push(Association {
            ua: ua.to_owned(),
            ops,
            target: target.to_owned(),
        });
        Ok(())
    }

    pub fn add_prohibition<I, S>(&mut self, subject: &str, ops: I, target: &str) -> Result<(), NgacError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.require_kind(subject, "prohibition subject", PROHIBITION_SUBJECT)?;
        self.require_kind(target, "prohibition target", ATTRIBUTE_TARGET)?;
        let ops = Self::ops_set(ops)?;
        self.prohibitions.push(Prohibition {
            subject: subject.to_owned(),
            ops,
            target: target.to_owned(),
        });
        Ok(())
    }

    /// The same graph without any prohibitions.
    pub fn without_prohibitions(&self) -> PolicyGraph {
        PolicyGraph {
            prohibitions: Vec::new(),
            ..self.clone()
        }
    }

    pub fn to_doc(&self) -> PolicyDoc {
        PolicyDoc {
            nodes: self.nodes.values().cloned().collect(),
            assignments: self.assignments().map(|(c, p)| (c.clone(), p.clone())).collect(),
            associations: self.associations.clone(),
            prohibitions: self.prohibitions.clone(),
        }
    }

    /// Build through the mutators so every rule is enforced.
    pub fn from_doc(doc: &PolicyDoc) -> Result<PolicyGraph, NgacError> {
        let mut g = PolicyGraph::new();
        for n in &doc.nodes {
            g.create_node(&n.id, &n.name, n.kind)?;
        }
        for (c, p) in &doc.assignments {
            g.assign(c, p)?;
        }
        for a in &doc.associations {
            g.associate(&a.ua, a.ops.iter().cloned(), &a.target)?;
        }
        for p in &doc.prohibitions {
            g.add_prohibition(&p.subject, p.ops.iter().cloned(), &p.target)?;
        }
        Ok(g)
    }

    pub fn from_json(text: &str) -> Result<PolicyGraph, NgacError> {
        Self::from_doc(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, NgacError> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }
}
