//! Exact match: a node bijection under which node labels agree and edge
//! sets coincide, found by VF2-style state-space search.
//!
//! The adaptation for pipelines: before any search, candidate pairs are
//! restricted to nodes that match semantically and have identical labelled
//! degree profiles. The search then extends a partial mapping one node at a
//! time, checking edges to already-mapped neighbours in both directions and
//! comparing the number of unmapped neighbours that touch the mapped core.

use std::collections::{BTreeMap, HashMap};

use super::{compatibility, HookError, Hooks, Indexed, MatchConfig};
use crate::ir::Pipeline;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    pub matched: bool,
    /// Node id in the generated pipeline → node id in the reference, when
    /// `matched`.
    pub mapping: Option<BTreeMap<String, String>>,
}

/// [`exact_match_with`] using the offline hooks.
pub fn exact_match(generated: &Pipeline, reference: &Pipeline, cfg: &MatchConfig) -> MatchOutcome {
    exact_match_with(generated, reference, cfg, Hooks::offline())
        .expect("offline hooks do not fail")
}

pub fn exact_match_with(
    generated: &Pipeline,
    reference: &Pipeline,
    cfg: &MatchConfig,
    hooks: Hooks<'_>,
) -> Result<MatchOutcome, HookError> {
    let a = Indexed::new(generated);
    let b = Indexed::new(reference);
    let none = MatchOutcome {
        matched: false,
        mapping: None,
    };
    if a.len() != b.len() || a.edges.len() != b.edges.len() {
        return Ok(none);
    }
    let compat = compatibility(&a, &b, cfg, hooks)?;
    let ga = Labelled::new(&a);
    let gb = Labelled::new(&b);
    let n = a.len();
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| compat[i][j] && ga.profile[i] == gb.profile[j])
                .collect()
        })
        .collect();
    if candidates.iter().any(Vec::is_empty) {
        return Ok(none);
    }
    let order = match_order(&ga, &candidates);
    let mut state = State {
        ga: &ga,
        gb: &gb,
        candidates: &candidates,
        order: &order,
        core_a: vec![None; n],
        core_b: vec![None; n],
    };
    if !state.search(0) {
        return Ok(none);
    }
    let mapping = state
        .core_a
        .iter()
        .enumerate()
        .map(|(i, j)| {
            (
                a.nodes[i].id.clone(),
                b.nodes[j.expect("complete")].id.clone(),
            )
        })
        .collect();
    Ok(MatchOutcome {
        matched: true,
        mapping: Some(mapping),
    })
}

type Labels<'a> = Vec<(&'a str, &'a str)>;

struct Labelled<'a> {
    /// `(from, to)` → sorted port labels of the edges between them.
    between: HashMap<(usize, usize), Labels<'a>>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    /// Sorted outgoing and incoming port labels per node.
    profile: Vec<(Labels<'a>, Labels<'a>)>,
}

impl<'a> Labelled<'a> {
    fn new(g: &Indexed<'a>) -> Self {
        let n = g.len();
        let mut between: HashMap<(usize, usize), Labels<'a>> = HashMap::new();
        let mut profile: Vec<(Labels<'a>, Labels<'a>)> = vec![(vec![], vec![]); n];
        for &(s, t, sp, tp) in &g.edges {
            between.entry((s, t)).or_default().push((sp, tp));
            profile[s].0.push((sp, tp));
            profile[t].1.push((sp, tp));
        }
        let mut out = vec![vec![]; n];
        let mut inc = vec![vec![]; n];
        for (&(s, t), labels) in between.iter_mut() {
            labels.sort_unstable();
            out[s].push(t);
            inc[t].push(s);
        }
        for list in out.iter_mut().chain(inc.iter_mut()) {
            list.sort_unstable();
        }
        for (o, i) in profile.iter_mut() {
            o.sort_unstable();
            i.sort_unstable();
        }
        Self {
            between,
            out,
            inc,
            profile,
        }
    }

    fn labels(&self, s: usize, t: usize) -> &[(&'a str, &'a str)] {
        self.between.get(&(s, t)).map(Vec::as_slice).unwrap_or(&[])
    }

    fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[i].iter().chain(&self.inc[i]).copied()
    }
}

/// Most-constrained-first ordering that prefers nodes adjacent to those
/// already placed, so edge checks prune early.
fn match_order(g: &Labelled<'_>, candidates: &[Vec<usize>]) -> Vec<usize> {
    let n = candidates.len();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n)
            .filter(|&i| !placed[i])
            .min_by_key(|&i| {
                let linked = g.neighbours(i).filter(|&j| placed[j]).count();
                (
                    std::cmp::Reverse(linked),
                    candidates[i].len(),
                    std::cmp::Reverse(g.out[i].len() + g.inc[i].len()),
                    i,
                )
            })
            .expect("unplaced node");
        placed[next] = true;
        order.push(next);
    }
    order
}

struct State<'s, 'a> {
    ga: &'s Labelled<'a>,
    gb: &'s Labelled<'a>,
    candidates: &'s [Vec<usize>],
    order: &'s [usize],
    core_a: Vec<Option<usize>>,
    core_b: Vec<Option<usize>>,
}

impl State<'_, '_> {
    fn search(&mut self, depth: usize) -> bool {
        if depth == self.order.len() {
            return true;
        }
        let u = self.order[depth];
        for &v in &self.candidates[u] {
            if self.core_b[v].is_some() || !self.feasible(u, v) {
                continue;
            }
            self.core_a[u] = Some(v);
            self.core_b[v] = Some(u);
            if self.search(depth + 1) {
                return true;
            }
            self.core_a[u] = None;
            self.core_b[v] = None;
        }
        false
    }

    fn feasible(&self, u: usize, v: usize) -> bool {
        // edges to mapped neighbours of u must exist between v and their images
        let mut mapped_a = 0;
        let mut frontier_a = 0;
        for w in self.ga.neighbours(u) {
            match self.core_a[w] {
                Some(x) => {
                    mapped_a += 1;
                    if self.ga.labels(u, w) != self.gb.labels(v, x)
                        || self.ga.labels(w, u) != self.gb.labels(x, v)
                    {
                        return false;
                    }
                }
                None => {
                    if self.touches_core_a(w) {
                        frontier_a += 1;
                    }
                }
            }
        }
        // and v may not have mapped neighbours beyond those images
        let mut mapped_b = 0;
        let mut frontier_b = 0;
        for x in self.gb.neighbours(v) {
            match self.core_b[x] {
                Some(_) => mapped_b += 1,
                None => {
                    if self.touches_core_b(x) {
                        frontier_b += 1;
                    }
                }
            }
        }
        mapped_a == mapped_b && frontier_a == frontier_b
    }

    fn touches_core_a(&self, w: usize) -> bool {
        self.ga.neighbours(w).any(|z| self.core_a[z].is_some())
    }

    fn touches_core_b(&self, x: usize) -> bool {
        self.gb.neighbours(x).any(|z| self.core_b[z].is_some())
    }
}
