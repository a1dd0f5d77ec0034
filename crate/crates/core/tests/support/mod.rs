//! Random pipelines, seeded mutations and brute-force oracles shared by the
//! metric tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pipewright_core::ir::{Edge, Endpoint, FunctionCatalog, Modality, Node, NodeKind, Pipeline};
use pipewright_core::metrics::{node_match, Hooks, MatchConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

const PORTS: [(&str, &str); 3] = [("text", "text"), ("audio", "audio"), ("data", "data")];

fn random_node(rng: &mut impl Rng, id: &str) -> Node {
    let catalog = FunctionCatalog::builtin();
    match rng.random_range(0..6) {
        0 => Node::input(id, *[Modality::Audio, Modality::Text].choose(rng).unwrap()),
        1 => Node::output(id, *[Modality::Audio, Modality::Text].choose(rng).unwrap()),
        2 => Node::function(id, catalog.get("speech_recognition").unwrap())
            .with_param("language", *["en", "fr"].choose(rng).unwrap()),
        3 => Node::function(id, catalog.get("speech_synthesis").unwrap())
            .with_param("language", *["en", "fr"].choose(rng).unwrap()),
        _ => Node::function(id, catalog.get("machine_translation").unwrap())
            .with_param("source_language", "en")
            .with_param("target_language", *["fr", "de"].choose(rng).unwrap()),
    }
}

/// A DAG on `n` nodes drawn from a small label alphabet, so that many
/// nodes share a signature. Edges only run from lower to higher index.
pub fn random_pipeline(rng: &mut impl Rng, n: usize, edge_prob: f64) -> Pipeline {
    let mut p = Pipeline::new();
    for i in 0..n {
        p.add_node(random_node(rng, &format!("n{i}"))).unwrap();
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(edge_prob) {
                let (sp, tp) = *PORTS.choose(rng).unwrap();
                p.connect((&format!("n{i}"), sp), (&format!("n{j}"), tp));
            }
        }
    }
    p
}

/// Same graph with node ids replaced by a random permutation of fresh ids.
pub fn relabel(p: &Pipeline, rng: &mut impl Rng) -> Pipeline {
    let mut ids: Vec<String> = (0..p.node_count()).map(|i| format!("v{i}")).collect();
    ids.shuffle(rng);
    let rename: BTreeMap<String, String> = p.nodes.keys().cloned().zip(ids).collect();
    let nodes = p.nodes.values().map(|n| {
        let mut n = n.clone();
        n.id = rename[&n.id].clone();
        n
    });
    let edges = p.edges.iter().map(|e| {
        Edge::new(
            Endpoint::new(rename[&e.source.node].clone(), e.source.port.clone()),
            Endpoint::new(rename[&e.target.node].clone(), e.target.port.clone()),
        )
    });
    Pipeline::from_parts(nodes, edges).unwrap()
}

/// One small random change; may or may not preserve isomorphism class.
pub fn perturb(p: &Pipeline, rng: &mut impl Rng) -> Pipeline {
    let mut q = p.clone();
    let ids: Vec<String> = q.nodes.keys().cloned().collect();
    match rng.random_range(0..4) {
        0 if !q.edges.is_empty() => {
            let e = q
                .edges
                .iter()
                .nth(rng.random_range(0..q.edges.len()))
                .unwrap()
                .clone();
            q.edges.remove(&e);
        }
        1 if !q.edges.is_empty() => {
            let e = q
                .edges
                .iter()
                .nth(rng.random_range(0..q.edges.len()))
                .unwrap()
                .clone();
            q.edges.remove(&e);
            let (sp, tp) = *PORTS.choose(rng).unwrap();
            q.connect((&e.source.node, sp), (&e.target.node, tp));
        }
        2 => {
            let id = ids.choose(rng).unwrap().clone();
            let replacement = random_node(rng, &id);
            q.nodes.insert(id, replacement);
        }
        _ => {
            let mut order = ids.clone();
            order.sort_by_key(|id| id[1..].parse::<usize>().unwrap_or(0));
            if order.len() >= 2 {
                let i = rng.random_range(0..order.len() - 1);
                let j = rng.random_range(i + 1..order.len());
                let (sp, tp) = *PORTS.choose(rng).unwrap();
                q.connect((&order[i], sp), (&order[j], tp));
            }
        }
    }
    q
}

fn edge_set(p: &Pipeline) -> BTreeSet<(String, String, String, String)> {
    p.edges
        .iter()
        .filter(|e| p.nodes.contains_key(&e.source.node) && p.nodes.contains_key(&e.target.node))
        .map(|e| {
            (
                e.source.node.clone(),
                e.target.node.clone(),
                e.source.port.clone(),
                e.target.port.clone(),
            )
        })
        .collect()
}

fn permutations(n: usize, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
    fn rec(k: usize, perm: &mut Vec<usize>, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
        if k == perm.len() {
            return f(perm);
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            if rec(k + 1, perm, f) {
                return true;
            }
            perm.swap(k, i);
        }
        false
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rec(0, &mut perm, f)
}

/// Tries every bijection between the node sets.
pub fn brute_force_em(a: &Pipeline, b: &Pipeline) -> bool {
    if a.node_count() != b.node_count() {
        return false;
    }
    let cfg = MatchConfig::default();
    let an: Vec<&Node> = a.nodes.values().collect();
    let bn: Vec<&Node> = b.nodes.values().collect();
    let compat: Vec<Vec<bool>> = an
        .iter()
        .map(|x| {
            bn.iter()
                .map(|y| node_match(x, y, &cfg, Hooks::offline()).unwrap())
                .collect()
        })
        .collect();
    let ea = edge_set(a);
    let eb = edge_set(b);
    if ea.len() != eb.len() {
        return false;
    }
    permutations(an.len(), &mut |perm| {
        if !(0..perm.len()).all(|i| compat[i][perm[i]]) {
            return false;
        }
        let map: BTreeMap<&str, &str> = (0..perm.len())
            .map(|i| (an[i].id.as_str(), bn[perm[i]].id.as_str()))
            .collect();
        ea.iter().all(|(s, t, sp, tp)| {
            eb.contains(&(
                map[s.as_str()].into(),
                map[t.as_str()].into(),
                sp.clone(),
                tp.clone(),
            ))
        })
    })
}

/// Cost of the edit path induced by a partial injection `f` from the nodes
/// of `a` into the nodes of `b` (`None` = deleted; unused nodes of `b` are
/// inserted). Edges between mapped nodes are aligned per node pair.
fn induced_cost(
    a: &[&Node],
    b: &[&Node],
    ea: &[(usize, usize, String)],
    eb: &[(usize, usize, String)],
    compat: &[Vec<bool>],
    f: &[Option<usize>],
) -> usize {
    let mut cost = 0;
    let mut used = vec![false; b.len()];
    for (i, m) in f.iter().enumerate() {
        match m {
            None => cost += 1,
            Some(j) => {
                used[*j] = true;
                if !compat[i][*j] {
                    cost += 1;
                }
            }
        }
    }
    cost += used.iter().filter(|u| !**u).count();
    type Labels<'a> = (Vec<&'a str>, Vec<&'a str>);
    let mut pairs: BTreeMap<(usize, usize), Labels> = BTreeMap::new();
    for (s, t, l) in ea {
        match (f[*s], f[*t]) {
            (Some(x), Some(y)) => pairs.entry((x, y)).or_default().0.push(l),
            _ => cost += 1,
        }
    }
    for (s, t, l) in eb {
        if used[*s] && used[*t] {
            pairs.entry((*s, *t)).or_default().1.push(l);
        } else {
            cost += 1;
        }
    }
    for (_, (mut x, y)) in pairs {
        let total = x.len().max(y.len());
        let mut common = 0;
        for l in y {
            if let Some(pos) = x.iter().position(|m| *m == l) {
                x.swap_remove(pos);
                common += 1;
            }
        }
        cost += total - common;
    }
    let _ = (a, b);
    cost
}

/// Minimum over every edit path whose node part is a partial injection.
/// Exponential; keep both sides small.
pub fn exhaustive_ged(a: &Pipeline, b: &Pipeline) -> usize {
    let cfg = MatchConfig::default();
    let an: Vec<&Node> = a.nodes.values().collect();
    let bn: Vec<&Node> = b.nodes.values().collect();
    let index = |nodes: &[&Node]| -> BTreeMap<String, usize> {
        nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect()
    };
    let (ia, ib) = (index(&an), index(&bn));
    let edges = |p: &Pipeline, idx: &BTreeMap<String, usize>| -> Vec<(usize, usize, String)> {
        edge_set(p)
            .into_iter()
            .map(|(s, t, sp, tp)| (idx[&s], idx[&t], format!("{sp}->{tp}")))
            .collect()
    };
    let (ea, eb) = (edges(a, &ia), edges(b, &ib));
    let compat: Vec<Vec<bool>> = an
        .iter()
        .map(|x| {
            bn.iter()
                .map(|y| node_match(x, y, &cfg, Hooks::offline()).unwrap())
                .collect()
        })
        .collect();

    fn rec(
        i: usize,
        f: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut usize,
        eval: &dyn Fn(&[Option<usize>]) -> usize,
    ) {
        if i == f.len() {
            *best = (*best).min(eval(f));
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                f[i] = Some(j);
                rec(i + 1, f, used, best, eval);
                used[j] = false;
            }
        }
        f[i] = None;
        rec(i + 1, f, used, best, eval);
    }
    let eval = |f: &[Option<usize>]| induced_cost(&an, &bn, &ea, &eb, &compat, f);
    let mut best = usize::MAX;
    rec(
        0,
        &mut vec![None; an.len()],
        &mut vec![false; bn.len()],
        &mut best,
        &eval,
    );
    best
}

/// Applies `k` edits that cannot undo or overlap one another: each touches
/// a different Function node or edge and introduces a label found nowhere
/// else. Node-side edits (parameter change, isolated node insertion) and
/// edge-side edits (deletion, port relabel) each raise the distance by
/// exactly one, so the result is exactly `k` away from `p`.
pub fn seeded_mutations(p: &Pipeline, k: usize, rng: &mut impl Rng) -> Pipeline {
    let mut q = p.clone();
    let mut touched_nodes = BTreeSet::new();
    let mut touched_edges: BTreeSet<Edge> = BTreeSet::new();
    let catalog = FunctionCatalog::builtin();
    let mut applied = 0;
    while applied < k {
        let tag = format!("mut{applied}");
        let functions: Vec<String> = q
            .nodes
            .values()
            .filter(|n| n.kind == NodeKind::Function && !touched_nodes.contains(&n.id))
            .map(|n| n.id.clone())
            .collect();
        let edges: Vec<Edge> = q
            .edges
            .iter()
            .filter(|e| !touched_edges.contains(*e))
            .cloned()
            .collect();
        match rng.random_range(0..4) {
            0 if !functions.is_empty() => {
                let id = functions.choose(rng).unwrap().clone();
                let node = q.nodes.get_mut(&id).unwrap();
                let key = node
                    .params
                    .keys()
                    .next()
                    .cloned()
                    .unwrap_or_else(|| "variant".into());
                node.params.insert(key, tag);
                touched_nodes.insert(id);
            }
            1 => {
                let node = Node::function(
                    format!("extra_{tag}"),
                    catalog.get("summarization").unwrap(),
                )
                .with_param("language", &tag);
                touched_nodes.insert(node.id.clone());
                q.add_node(node).unwrap();
            }
            2 if !edges.is_empty() => {
                let e = edges.choose(rng).unwrap().clone();
                q.edges.remove(&e);
                touched_edges.insert(e);
            }
            3 if !edges.is_empty() => {
                let e = edges.choose(rng).unwrap().clone();
                q.edges.remove(&e);
                let moved = Edge::new(e.source.clone(), Endpoint::new(e.target.node.clone(), tag));
                q.edges.insert(moved.clone());
                touched_edges.insert(e);
                touched_edges.insert(moved);
            }
            _ => continue,
        }
        applied += 1;
    }
    q
}

/// An out-star and a directed path on `n` identical nodes. Under any
/// bijection they share at most one edge, and deleting or inserting nodes
/// never helps, so their distance is exactly `2 * (n - 1) - 2`.
pub fn star_and_path(n: usize) -> (Pipeline, Pipeline, f64) {
    let catalog = FunctionCatalog::builtin();
    let spec = catalog.get("text_normalization").unwrap();
    let build = |edges: Vec<(usize, usize)>| {
        let nodes =
            (0..n).map(|i| Node::function(format!("n{i:02}"), spec).with_param("language", "en"));
        let edges = edges.into_iter().map(|(s, t)| {
            Edge::new(
                Endpoint::new(format!("n{s:02}"), "text"),
                Endpoint::new(format!("n{t:02}"), "text"),
            )
        });
        Pipeline::from_parts(nodes, edges).unwrap()
    };
    let star = build((1..n).map(|i| (0, i)).collect());
    let path = build((1..n).map(|i| (i - 1, i)).collect());
    (star, path, (2 * (n - 1) - 2) as f64)
}

pub fn fixtures_dir() -> std::path::PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures"]
        .iter()
        .collect()
}

pub fn load_fixture(name: &str) -> Pipeline {
    let path = fixtures_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    pipewright_core::ir::json::parse_pipeline_json(&text, FunctionCatalog::builtin())
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Applies `count` random structural edits of the kinds a builder tends to
/// get wrong: extra output nodes on a used port, edges to missing nodes or
/// ports, removed edges or nodes, arbitrary new edges and odd parameters.
pub fn structural_mutations(p: &Pipeline, count: usize, rng: &mut impl Rng) -> Pipeline {
    let mut q = p.clone();
    for serial in 0..count {
        let outs: Vec<(String, String, Modality)> = q
            .nodes
            .values()
            .flat_map(|n| {
                n.outputs
                    .iter()
                    .map(|o| (n.id.clone(), o.name.clone(), o.modality))
            })
            .collect();
        let ins: Vec<(String, String)> = q
            .nodes
            .values()
            .flat_map(|n| n.inputs.iter().map(|i| (n.id.clone(), i.name.clone())))
            .collect();
        let edges: Vec<Edge> = q.edges.iter().cloned().collect();
        let ids: Vec<String> = q.nodes.keys().cloned().collect();
        match rng.random_range(0..10) {
            0..=2 if !outs.is_empty() => {
                let (node, port, modality) = outs.choose(rng).unwrap().clone();
                let id = format!("dup{serial}");
                q.add_node(Node::output(id.as_str(), modality)).unwrap();
                q.connect((&node, &port), (&id, "data"));
            }
            3 | 4 if !outs.is_empty() => {
                let (node, port, _) = outs.choose(rng).unwrap().clone();
                q.connect((&node, &port), (&format!("ghost{serial}"), "data"));
            }
            5 if !edges.is_empty() => {
                let e = edges.choose(rng).unwrap().clone();
                q.edges.remove(&e);
                q.edges.insert(Edge::new(
                    e.source,
                    Endpoint::new(e.target.node, format!("nope{serial}")),
                ));
            }
            6 if !edges.is_empty() => {
                let e = edges.choose(rng).unwrap().clone();
                q.edges.remove(&e);
            }
            7 if !ids.is_empty() => {
                let id = ids.choose(rng).unwrap().clone();
                q.remove_node(&id);
            }
            8 if !outs.is_empty() && !ins.is_empty() => {
                let (sn, sp, _) = outs.choose(rng).unwrap().clone();
                let (tn, tp) = ins.choose(rng).unwrap().clone();
                q.connect((&sn, &sp), (&tn, &tp));
                if q.check_acyclic().is_err() {
                    q.edges
                        .remove(&Edge::new(Endpoint::new(&sn, &sp), Endpoint::new(&tn, &tp)));
                }
            }
            9 if !ids.is_empty() => {
                let id = ids.choose(rng).unwrap().clone();
                let (key, value) = *[
                    ("language", "fr"),
                    ("target_language", "xx"),
                    ("tone", "formal"),
                ]
                .choose(rng)
                .unwrap();
                q.nodes
                    .get_mut(&id)
                    .unwrap()
                    .params
                    .insert(key.into(), value.into());
            }
            _ => {}
        }
    }
    q
}
