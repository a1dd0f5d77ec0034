//! Graph edit distance by depth-first branch and bound.
//!
//! Nodes of the generated pipeline are visited in a fixed order; each is
//! either substituted by an unused reference node or deleted, and reference
//! nodes left over at the end are inserted. Substituting matching nodes is
//! free and every other operation costs the same, so the search counts
//! operations and scales by `edit_cost` at the end.
//!
//! Edges between two mapped nodes are compared per ordered node pair by
//! port labels: equal labels are free, and otherwise each unmatched edge
//! is substituted, deleted or inserted at unit cost.
//!
//! The lower bound used for pruning adds two label-counting bounds over the
//! unassigned part: nodes grouped by match signature, and remaining edges
//! grouped by port labels. Both are admissible, so a search that finishes
//! is optimal. When the time budget runs out the best assignment found so
//! far is returned with `timed_out` set.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{compatibility, signature, HookError, Hooks, Indexed, MatchConfig};
use crate::ir::{Node, NodeKind, Pipeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Insert,
    Delete,
    Substitute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditEntity {
    Node,
    Edge,
}

/// Why two aligned nodes were not equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstitutionCause {
    /// Same node type and function, different parameters or port types.
    ParameterMismatch,
    /// Both Function nodes, different functions.
    WrongFunction,
    /// Different node kinds.
    WrongNodeType,
    /// Prompts or scripts judged different.
    PayloadMismatch,
}

impl SubstitutionCause {
    pub fn of(generated: &Node, reference: &Node) -> Self {
        if generated.kind != reference.kind {
            return SubstitutionCause::WrongNodeType;
        }
        match generated.kind {
            NodeKind::Function
                if generated.function.as_deref().map(str::to_lowercase)
                    != reference.function.as_deref().map(str::to_lowercase) =>
            {
                SubstitutionCause::WrongFunction
            }
            NodeKind::GenericLlm | NodeKind::Script => SubstitutionCause::PayloadMismatch,
            _ => SubstitutionCause::ParameterMismatch,
        }
    }
}

/// One step of an edit script. `generated` and `reference` name the node
/// ids or edges (`a.out->b.in`) involved on each side.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EditOp {
    pub entity: EditEntity,
    pub kind: EditKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// Present exactly on node substitutions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<SubstitutionCause>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GedResult {
    pub distance: f64,
    pub edit_script: Vec<EditOp>,
    /// `distance` divided by the reference size (nodes plus edges, at
    /// least 1).
    pub normalized: f64,
    /// The search stopped at the time budget; `distance` is an upper bound.
    pub timed_out: bool,
}

/// [`ged_with`] using the offline hooks.
pub fn ged(generated: &Pipeline, reference: &Pipeline, cfg: &MatchConfig) -> GedResult {
    ged_with(generated, reference, cfg, Hooks::offline()).expect("offline hooks do not fail")
}

pub fn ged_with(
    generated: &Pipeline,
    reference: &Pipeline,
    cfg: &MatchConfig,
    hooks: Hooks<'_>,
) -> Result<GedResult, HookError> {
    let started = Instant::now();
    let a = Indexed::new(generated);
    let b = Indexed::new(reference);
    let compat = compatibility(&a, &b, cfg, hooks)?;
    let problem = Problem::new(&a, &b, compat);
    let mut search = Search::new(&problem, started + cfg.time_budget);
    search.run();
    let assignment = search.best_assignment.clone();
    let edit_script = edit_script(&a, &b, &problem, &assignment);
    debug_assert_eq!(edit_script.len() as u32, search.best);
    let distance = cfg.edit_cost * edit_script.len() as f64;
    let size = reference.size().max(1) as f64;
    Ok(GedResult {
        distance,
        normalized: distance / size,
        edit_script,
        timed_out: search.timed_out,
    })
}

/// Sorted label ids of the edges from one node to another.
type PairLabels = HashMap<(usize, usize), Vec<u32>>;

struct Problem {
    n1: usize,
    n2: usize,
    compat: Vec<Vec<bool>>,
    class_a: Vec<usize>,
    class_b: Vec<usize>,
    n_classes: usize,
    n_labels: usize,
    pairs_a: PairLabels,
    pairs_b: PairLabels,
    /// Undirected neighbour lists.
    adj_a: Vec<Vec<usize>>,
    adj_b: Vec<Vec<usize>>,
    /// `(other endpoint, label)` for each edge touching a node.
    inc_a: Vec<Vec<(usize, u32)>>,
    inc_b: Vec<Vec<(usize, u32)>>,
    order: Vec<usize>,
}

impl Problem {
    fn new(a: &Indexed<'_>, b: &Indexed<'_>, compat: Vec<Vec<bool>>) -> Self {
        let mut classes: HashMap<String, usize> = HashMap::new();
        let mut class_of = |n: &Node| {
            let next = classes.len();
            *classes.entry(signature(n)).or_insert(next)
        };
        let class_a: Vec<usize> = a.nodes.iter().map(|n| class_of(n)).collect();
        let class_b: Vec<usize> = b.nodes.iter().map(|n| class_of(n)).collect();
        let n_classes = classes.len();

        let mut labels: HashMap<(String, String), u32> = HashMap::new();
        let mut label_of = |sp: &str, tp: &str| {
            let next = labels.len() as u32;
            *labels
                .entry((sp.to_string(), tp.to_string()))
                .or_insert(next)
        };
        let mut build = |g: &Indexed<'_>| {
            let n = g.len();
            let mut pairs: PairLabels = HashMap::new();
            let mut adj = vec![vec![]; n];
            let mut inc = vec![vec![]; n];
            for &(s, t, sp, tp) in &g.edges {
                let l = label_of(sp, tp);
                pairs.entry((s, t)).or_default().push(l);
                inc[s].push((t, l));
                inc[t].push((s, l));
                adj[s].push(t);
                adj[t].push(s);
            }
            for v in pairs.values_mut() {
                v.sort_unstable();
            }
            for list in &mut adj {
                list.sort_unstable();
                list.dedup();
            }
            (pairs, adj, inc)
        };
        let (pairs_a, adj_a, inc_a) = build(a);
        let (pairs_b, adj_b, inc_b) = build(b);
        let n_labels = labels.len();
        let order = visit_order(&adj_a, a.len());
        Self {
            n1: a.len(),
            n2: b.len(),
            compat,
            class_a,
            class_b,
            n_classes,
            n_labels,
            pairs_a,
            pairs_b,
            adj_a,
            adj_b,
            inc_a,
            inc_b,
            order,
        }
    }

    fn labels_a(&self, s: usize, t: usize) -> &[u32] {
        self.pairs_a.get(&(s, t)).map(Vec::as_slice).unwrap_or(&[])
    }

    fn labels_b(&self, s: usize, t: usize) -> &[u32] {
        self.pairs_b.get(&(s, t)).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Breadth-first from the highest-degree node of each component, so that
/// consecutive nodes share edges and edge costs are charged early.
fn visit_order(adj: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (std::cmp::Reverse(adj[i].len()), i));
    for root in by_degree {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order
}

/// Unit cost of aligning two sorted label multisets.
fn pair_cost(x: &[u32], y: &[u32]) -> u32 {
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    (x.len().max(y.len()) - common) as u32
}

const DELETED: usize = usize::MAX;
const UNPLACED: usize = usize::MAX - 1;

struct Search<'p> {
    p: &'p Problem,
    deadline: Instant,
    timed_out: bool,
    expansions: u64,
    /// Per generated node: reference index, `DELETED` or `UNPLACED`.
    assign: Vec<usize>,
    /// Per reference node: generated index or `UNPLACED`.
    pre_b: Vec<usize>,
    class1: Vec<i64>,
    class2: Vec<i64>,
    label1: Vec<i64>,
    label2: Vec<i64>,
    rem_nodes1: i64,
    rem_nodes2: i64,
    rem_edges1: i64,
    rem_edges2: i64,
    best: u32,
    best_assignment: Vec<usize>,
    root_bound: u32,
}

impl<'p> Search<'p> {
    fn new(p: &'p Problem, deadline: Instant) -> Self {
        let mut class1 = vec![0i64; p.n_classes];
        let mut class2 = vec![0i64; p.n_classes];
        for &c in &p.class_a {
            class1[c] += 1;
        }
        for &c in &p.class_b {
            class2[c] += 1;
        }
        let mut label1 = vec![0i64; p.n_labels];
        let mut label2 = vec![0i64; p.n_labels];
        let mut edges1 = 0;
        let mut edges2 = 0;
        for v in p.pairs_a.values() {
            for &l in v {
                label1[l as usize] += 1;
                edges1 += 1;
            }
        }
        for v in p.pairs_b.values() {
            for &l in v {
                label2[l as usize] += 1;
                edges2 += 1;
            }
        }
        let mut s = Self {
            p,
            deadline,
            timed_out: false,
            expansions: 0,
            assign: vec![UNPLACED; p.n1],
            pre_b: vec![UNPLACED; p.n2],
            class1,
            class2,
            label1,
            label2,
            rem_nodes1: p.n1 as i64,
            rem_nodes2: p.n2 as i64,
            rem_edges1: edges1,
            rem_edges2: edges2,
            best: u32::MAX,
            best_assignment: vec![DELETED; p.n1],
            root_bound: 0,
        };
        s.root_bound = s.bound();
        // deleting everything and inserting the reference is always possible
        s.best = (p.n1 + p.n2) as u32 + (edges1 + edges2) as u32;
        s
    }

    fn bound(&self) -> u32 {
        let common_nodes: i64 = self
            .class1
            .iter()
            .zip(&self.class2)
            .map(|(a, b)| (*a).min(*b))
            .sum();
        let common_edges: i64 = self
            .label1
            .iter()
            .zip(&self.label2)
            .map(|(a, b)| (*a).min(*b))
            .sum();
        let nodes = self.rem_nodes1.max(self.rem_nodes2) - common_nodes;
        let edges = self.rem_edges1.max(self.rem_edges2) - common_edges;
        (nodes + edges) as u32
    }

    fn run(&mut self) {
        self.greedy();
        if self.best > self.root_bound {
            self.dfs(0, 0);
        }
    }

    /// Cheapest-step dive used as the first incumbent.
    fn greedy(&mut self) {
        let mut cost = 0;
        let mut trail = Vec::with_capacity(self.p.n1);
        for depth in 0..self.p.n1 {
            let u = self.p.order[depth];
            let choice = self
                .options(u)
                .into_iter()
                .min_by_key(|&(target, inc)| (inc, target == DELETED, target))
                .expect("deletion is always an option");
            cost += choice.1;
            self.place(u, choice.0);
            trail.push(u);
        }
        let total = cost + self.completion();
        if total < self.best {
            self.best = total;
            self.best_assignment = self.assign.clone();
        }
        for u in trail.into_iter().rev() {
            self.unplace(u);
        }
    }

    /// Every target for `u` with the cost it adds right away.
    fn options(&self, u: usize) -> Vec<(usize, u32)> {
        let mut out: Vec<(usize, u32)> = (0..self.p.n2)
            .filter(|&v| self.pre_b[v] == UNPLACED)
            .map(|v| (v, self.step_cost(u, v)))
            .collect();
        out.push((DELETED, self.step_cost(u, DELETED)));
        out
    }

    fn step_cost(&self, u: usize, v: usize) -> u32 {
        let p = self.p;
        let mut cost = 0;
        if v == DELETED {
            cost += 1;
            for &w in &p.adj_a[u] {
                if self.assign[w] != UNPLACED {
                    cost += (p.labels_a(u, w).len() + p.labels_a(w, u).len()) as u32;
                }
            }
            return cost;
        }
        if !p.compat[u][v] {
            cost += 1;
        }
        for &w in &p.adj_a[u] {
            match self.assign[w] {
                UNPLACED => {}
                DELETED => cost += (p.labels_a(u, w).len() + p.labels_a(w, u).len()) as u32,
                x => {
                    cost += pair_cost(p.labels_a(u, w), p.labels_b(v, x));
                    cost += pair_cost(p.labels_a(w, u), p.labels_b(x, v));
                }
            }
        }
        for &x in &p.adj_b[v] {
            let w = self.pre_b[x];
            if w == UNPLACED || p.adj_a[u].binary_search(&w).is_ok() {
                continue;
            }
            cost += (p.labels_b(v, x).len() + p.labels_b(x, v).len()) as u32;
        }
        cost
    }

    /// Cost of inserting every unused reference node and its edges.
    fn completion(&self) -> u32 {
        let p = self.p;
        let unused = self.pre_b.iter().filter(|&&w| w == UNPLACED).count() as u32;
        let edges: u32 = p
            .pairs_b
            .iter()
            .filter(|((s, t), _)| self.pre_b[*s] == UNPLACED || self.pre_b[*t] == UNPLACED)
            .map(|(_, l)| l.len() as u32)
            .sum();
        unused + edges
    }

    fn place(&mut self, u: usize, v: usize) {
        let p = self.p;
        self.class1[p.class_a[u]] -= 1;
        self.rem_nodes1 -= 1;
        for &(w, l) in &p.inc_a[u] {
            if self.assign[w] != UNPLACED {
                self.label1[l as usize] -= 1;
                self.rem_edges1 -= 1;
            }
        }
        self.assign[u] = v;
        if v != DELETED {
            self.class2[p.class_b[v]] -= 1;
            self.rem_nodes2 -= 1;
            for &(x, l) in &p.inc_b[v] {
                if self.pre_b[x] != UNPLACED {
                    self.label2[l as usize] -= 1;
                    self.rem_edges2 -= 1;
                }
            }
            self.pre_b[v] = u;
        }
    }

    fn unplace(&mut self, u: usize) {
        let p = self.p;
        let v = self.assign[u];
        if v != DELETED {
            self.pre_b[v] = UNPLACED;
            for &(x, l) in &p.inc_b[v] {
                if self.pre_b[x] != UNPLACED {
                    self.label2[l as usize] += 1;
                    self.rem_edges2 += 1;
                }
            }
            self.class2[p.class_b[v]] += 1;
            self.rem_nodes2 += 1;
        }
        self.assign[u] = UNPLACED;
        for &(w, l) in &p.inc_a[u] {
            if self.assign[w] != UNPLACED {
                self.label1[l as usize] += 1;
                self.rem_edges1 += 1;
            }
        }
        self.class1[p.class_a[u]] += 1;
        self.rem_nodes1 += 1;
    }

    fn out_of_time(&mut self) -> bool {
        if self.timed_out {
            return true;
        }
        self.expansions += 1;
        if self.expansions & 0xff == 0 && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        self.timed_out
    }

    fn dfs(&mut self, depth: usize, cost: u32) {
        if self.out_of_time() || self.best == self.root_bound {
            return;
        }
        if depth == self.p.n1 {
            let total = cost + self.completion();
            if total < self.best {
                self.best = total;
                self.best_assignment = self.assign.clone();
            }
            return;
        }
        let u = self.p.order[depth];
        let mut options = self.options(u);
        options.sort_by_key(|&(target, inc)| (inc, target == DELETED, target));
        for (target, inc) in options {
            if cost + inc >= self.best {
                continue;
            }
            self.place(u, target);
            if cost + inc + self.bound() < self.best {
                self.dfs(depth + 1, cost + inc);
            }
            self.unplace(u);
            if self.timed_out || self.best == self.root_bound {
                return;
            }
        }
    }
}

fn edit_script(a: &Indexed<'_>, b: &Indexed<'_>, p: &Problem, assign: &[usize]) -> Vec<EditOp> {
    let node_op = |kind, generated: Option<&Node>, reference: Option<&Node>, cause| EditOp {
        entity: EditEntity::Node,
        kind,
        generated: generated.map(|n| n.id.clone()),
        reference: reference.map(|n| n.id.clone()),
        cause,
    };
    let mut ops = Vec::new();
    let mut pre_b = vec![UNPLACED; p.n2];
    for (u, &v) in assign.iter().enumerate() {
        if v == DELETED {
            ops.push(node_op(EditKind::Delete, Some(a.nodes[u]), None, None));
        } else {
            pre_b[v] = u;
            if !p.compat[u][v] {
                let cause = SubstitutionCause::of(a.nodes[u], b.nodes[v]);
                ops.push(node_op(
                    EditKind::Substitute,
                    Some(a.nodes[u]),
                    Some(b.nodes[v]),
                    Some(cause),
                ));
            }
        }
    }
    for (v, &u) in pre_b.iter().enumerate() {
        if u == UNPLACED {
            ops.push(node_op(EditKind::Insert, None, Some(b.nodes[v]), None));
        }
    }

    // edges grouped by the reference node pair they land on
    let edge_name = |g: &Indexed<'_>, s: usize, t: usize, sp: &str, tp: &str| {
        format!("{}.{sp}->{}.{tp}", g.nodes[s].id, g.nodes[t].id)
    };
    let mut by_pair: BTreeMap<(usize, usize), (Vec<String>, Vec<String>)> = BTreeMap::new();
    type PortPairs = Vec<(String, String)>;
    let mut labels: BTreeMap<(usize, usize), (PortPairs, PortPairs)> = BTreeMap::new();
    for &(s, t, sp, tp) in &a.edges {
        let (vs, vt) = (assign[s], assign[t]);
        let name = edge_name(a, s, t, sp, tp);
        if vs == DELETED || vt == DELETED {
            ops.push(EditOp {
                entity: EditEntity::Edge,
                kind: EditKind::Delete,
                generated: Some(name),
                reference: None,
                cause: None,
            });
        } else {
            labels
                .entry((vs, vt))
                .or_default()
                .0
                .push((format!("{sp}->{tp}"), name));
        }
    }
    for &(s, t, sp, tp) in &b.edges {
        let name = edge_name(b, s, t, sp, tp);
        if pre_b[s] == UNPLACED || pre_b[t] == UNPLACED {
            ops.push(EditOp {
                entity: EditEntity::Edge,
                kind: EditKind::Insert,
                generated: None,
                reference: Some(name),
                cause: None,
            });
        } else {
            labels
                .entry((s, t))
                .or_default()
                .1
                .push((format!("{sp}->{tp}"), name));
        }
    }
    for (pair, (mut gen, mut refs)) in labels {
        gen.sort();
        refs.sort();
        // drop label-equal edges pairwise
        let mut leftover_gen = Vec::new();
        let mut j = 0;
        for g in gen {
            while j < refs.len() && refs[j].0 < g.0 {
                j += 1;
            }
            if j < refs.len() && refs[j].0 == g.0 {
                refs.remove(j);
            } else {
                leftover_gen.push(g.1);
            }
        }
        let leftover_ref: Vec<String> = refs.into_iter().map(|r| r.1).collect();
        let entry = by_pair.entry(pair).or_default();
        entry.0 = leftover_gen;
        entry.1 = leftover_ref;
    }
    for (_, (gen, refs)) in by_pair {
        let mut gen = gen.into_iter();
        let mut refs = refs.into_iter();
        loop {
            match (gen.next(), refs.next()) {
                (Some(g), Some(r)) => ops.push(EditOp {
                    entity: EditEntity::Edge,
                    kind: EditKind::Substitute,
                    generated: Some(g),
                    reference: Some(r),
                    cause: None,
                }),
                (Some(g), None) => ops.push(EditOp {
                    entity: EditEntity::Edge,
                    kind: EditKind::Delete,
                    generated: Some(g),
                    reference: None,
                    cause: None,
                }),
                (None, Some(r)) => ops.push(EditOp {
                    entity: EditEntity::Edge,
                    kind: EditKind::Insert,
                    generated: None,
                    reference: Some(r),
                    cause: None,
                }),
                (None, None) => break,
            }
        }
    }
    ops.sort();
    ops
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_cost_counts_unmatched_labels() {
        assert_eq!(pair_cost(&[], &[]), 0);
        assert_eq!(pair_cost(&[1, 2], &[1, 2]), 0);
        assert_eq!(pair_cost(&[1, 2], &[1, 3]), 1);
        assert_eq!(pair_cost(&[1], &[]), 1);
        assert_eq!(pair_cost(&[1, 1, 2], &[1]), 2);
    }

    #[test]
    fn empty_against_empty() {
        let r = ged(&Pipeline::new(), &Pipeline::new(), &MatchConfig::default());
        assert_eq!(r.distance, 0.0);
        assert!(r.edit_script.is_empty());
        assert!(!r.timed_out);
    }
}
