//! Brute-force NGAC reference: a full reachability matrix and a direct
//! reading of the decision rule, with no shared code from the decider.

use std::collections::BTreeSet;

use oconsent::ngac::{NodeKind, PolicyGraph};
use rand::Rng;

pub const KIND_ORDER: [NodeKind; 5] = [NodeKind::U, NodeKind::UA, NodeKind::O, NodeKind::OA, NodeKind::PC];

pub fn legal(child: NodeKind, parent: NodeKind) -> bool {
    use NodeKind::*;
    [(U, UA), (UA, UA), (O, OA), (OA, OA), (UA, PC), (OA, PC)].contains(&(child, parent))
}

pub type Rule = (usize, BTreeSet<String>, usize);

#[derive(Debug, Clone, Default)]
pub struct Spec {
    pub kinds: Vec<NodeKind>,
    pub edges: Vec<(usize, usize)>,
    pub associations: Vec<Rule>,
    pub prohibitions: Vec<Rule>,
}

pub fn id(i: usize) -> String {
    format!("n{i}")
}

impl Spec {
    pub fn indices(&self, kind: NodeKind) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&i| self.kinds[i] == kind).collect()
    }

    pub fn build(&self) -> PolicyGraph {
        let mut g = PolicyGraph::new();
        for (i, k) in self.kinds.iter().enumerate() {
            g.create_node(&id(i), &id(i), *k).unwrap();
        }
        for &(c, p) in &self.edges {
            g.assign(&id(c), &id(p)).unwrap();
        }
        for (ua, ops, t) in &self.associations {
            g.associate(&id(*ua), ops.iter().cloned(), &id(*t)).unwrap();
        }
        for (s, ops, t) in &self.prohibitions {
            g.add_prohibition(&id(*s), ops.iter().cloned(), &id(*t)).unwrap();
        }
        g
    }

    /// Reflexive transitive closure by repeated relaxation.
    #[allow(clippy::needless_range_loop)]
    pub fn closure(&self) -> Vec<Vec<bool>> {
        let n = self.kinds.len();
        let mut r = vec![vec![false; n]; n];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(c, p) in &self.edges {
            r[c][p] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if r[i][k] {
                    for j in 0..n {
                        if r[k][j] {
                            r[i][j] = true;
                        }
                    }
                }
            }
        }
        r
    }

    pub fn decide(&self, reach: &[Vec<bool>], u: usize, o: usize) -> BTreeSet<String> {
        let pcs: Vec<usize> = self.indices(NodeKind::PC).into_iter().filter(|&pc| reach[o][pc]).collect();
        if pcs.is_empty() {
            return BTreeSet::new();
        }
        let universe: BTreeSet<String> = self.associations.iter().flat_map(|(_, ops, _)| ops.iter().cloned()).collect();
        universe
            .into_iter()
            .filter(|op| {
                pcs.iter().all(|&pc| {
                    self.associations
                        .iter()
                        .any(|(ua, ops, t)| ops.contains(op) && reach[u][*ua] && reach[o][*t] && reach[*t][pc])
                })
            })
            .filter(|op| {
                !self
                    .prohibitions
                    .iter()
                    .any(|(s, ops, t)| ops.contains(op) && reach[u][*s] && reach[o][*t])
            })
            .collect()
    }
}

pub fn op_subsets(ops: &[&str]) -> Vec<BTreeSet<String>> {
    (1u32..(1 << ops.len()))
        .map(|mask| {
            ops.iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, o)| o.to_string())
                .collect()
        })
        .collect()
}

fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut rest in compositions(n - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every node-kind multiset of up to `max_nodes` nodes with at least one user
/// and one object, paired with every legal assignment subset. Nodes are laid
/// out in kind order and edges only point forward, which reaches every DAG up
/// to relabelling of same-kind nodes.
pub fn exhaustive_bases(max_nodes: usize) -> Vec<Spec> {
    let mut out = Vec::new();
    for n in 2..=max_nodes {
        for comp in compositions(n, 5) {
            if comp[0] == 0 || comp[2] == 0 {
                continue;
            }
            let kinds: Vec<NodeKind> = KIND_ORDER
                .iter()
                .zip(&comp)
                .flat_map(|(k, &c)| std::iter::repeat_n(*k, c))
                .collect();
            let candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| legal(kinds[i], kinds[j]))
                .collect();
            for mask in 0u64..(1 << candidates.len()) {
                let edges = candidates
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask & (1 << b) != 0)
                    .map(|(_, e)| *e)
                    .collect();
                out.push(Spec {
                    kinds: kinds.clone(),
                    edges,
                    ..Spec::default()
                });
            }
        }
    }
    out
}

/// No rule, or one rule from every source in `sources` to every attribute
/// with every non-empty operation subset.
pub fn single_rules(base: &Spec, sources: &[NodeKind], ops: &[&str]) -> Vec<Option<Rule>> {
    let src: Vec<usize> = (0..base.kinds.len()).filter(|&i| sources.contains(&base.kinds[i])).collect();
    let tgt: Vec<usize> = (0..base.kinds.len())
        .filter(|&i| matches!(base.kinds[i], NodeKind::UA | NodeKind::OA))
        .collect();
    let mut out = vec![None];
    for &s in &src {
        for &t in &tgt {
            for set in op_subsets(ops) {
                out.push(Some((s, set, t)));
            }
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct Tally {
    pub graphs: u64,
    pub queries: u64,
    pub mismatches: Vec<String>,
}

impl Tally {
    pub fn merge(&mut self, other: Tally) {
        self.graphs += other.graphs;
        self.queries += other.queries;
        self.mismatches.extend(other.mismatches.into_iter().take(5));
    }
}

/// Compare the decider with the oracle on every (U, O) pair of `spec`.
pub fn compare(spec: &Spec, g: &PolicyGraph, reach: &[Vec<bool>], tally: &mut Tally) {
    tally.graphs += 1;
    for u in spec.indices(NodeKind::U) {
        for o in spec.indices(NodeKind::O) {
            tally.queries += 1;
            let got = oconsent::ngac::list_permissions(g, &id(u), &id(o)).unwrap().ops;
            let want = spec.decide(reach, u, o);
            if got != want && tally.mismatches.len() < 5 {
                tally.mismatches.push(format!("{spec:?} u={u} o={o} got={got:?} want={want:?}"));
            }
        }
    }
}

/// The full exhaustive family, spread over threads.
pub fn run_exhaustive(max_nodes: usize, ops: &[&str]) -> Tally {
    let bases = exhaustive_bases(max_nodes);
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let chunk = bases.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = bases
            .chunks(chunk.max(1))
            .map(|part| {
                s.spawn(move || {
                    let mut tally = Tally::default();
                    for base in part {
                        let reach = base.closure();
                        let assocs = single_rules(base, &[NodeKind::UA], ops);
                        let prohs = single_rules(base, &[NodeKind::U, NodeKind::UA], ops);
                        let g0 = base.build();
                        for a in &assocs {
                            let mut ga = g0.clone();
                            if let Some((ua, set, t)) = a {
                                ga.associate(&id(*ua), set.iter().cloned(), &id(*t)).unwrap();
                            }
                            for p in &prohs {
                                let mut g = ga.clone();
                                if let Some((sub, set, t)) = p {
                                    g.add_prohibition(&id(*sub), set.iter().cloned(), &id(*t)).unwrap();
                                }
                                let spec = Spec {
                                    associations: a.iter().cloned().collect(),
                                    prohibitions: p.iter().cloned().collect(),
                                    ..base.clone()
                                };
                                compare(&spec, &g, &reach, &mut tally);
                            }
                        }
                    }
                    tally
                })
            })
            .collect();
        let mut total = Tally::default();
        for h in handles {
            total.merge(h.join().unwrap());
        }
        total
    })
}

/// A random policy of up to `max_nodes` nodes with at least one user and one
/// object.
pub fn random_spec(rng: &mut impl Rng, max_nodes: usize, ops: &[&str]) -> Spec {
    let n = rng.gen_range(2..=max_nodes);
    let mut kinds = vec![NodeKind::U, NodeKind::O];
    for _ in 2..n {
        kinds.push(KIND_ORDER[rng.gen_range(0..5)]);
    }
    kinds.sort();
    let density = rng.gen_range(0.1..0.6);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if legal(kinds[i], kinds[j]) && rng.gen_bool(density) {
                edges.push((i, j));
            }
        }
    }
    let subsets = op_subsets(ops);
    let pick = |rng: &mut dyn rand::RngCore, pool: &[usize]| pool[rng.gen_range(0..pool.len())];
    let uas: Vec<usize> = (0..n).filter(|&i| kinds[i] == NodeKind::UA).collect();
    let subjects: Vec<usize> = (0..n).filter(|&i| matches!(kinds[i], NodeKind::U | NodeKind::UA)).collect();
    let attrs: Vec<usize> = (0..n).filter(|&i| matches!(kinds[i], NodeKind::UA | NodeKind::OA)).collect();
    let mut spec = Spec {
        kinds,
        edges,
        ..Spec::default()
    };
    if !uas.is_empty() && !attrs.is_empty() {
        for _ in 0..rng.gen_range(0..=4) {
            let set = subsets[rng.gen_range(0..subsets.len())].clone();
            spec.associations.push((pick(rng, &uas), set, pick(rng, &attrs)));
        }
    }
    if !attrs.is_empty() {
        for _ in 0..rng.gen_range(0..=3) {
            let set = subsets[rng.gen_range(0..subsets.len())].clone();
            spec.prohibitions.push((pick(rng, &subjects), set, pick(rng, &attrs)));
        }
    }
    spec
}
