use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{NodeKind, Pipeline};

/// Metadata key holding `{output_id: comment}` written by the builder.
pub const BRANCH_COMMENTS_KEY: &str = "branch_comments";

/// Everything upstream of one Output node, in topological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub output: String,
    pub nodes: Vec<String>,
    pub comment: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branches {
    /// One entry per Output node, ordered by output id.
    pub branches: Vec<Branch>,
    /// Output nodes with no Input node upstream.
    pub unreachable: Vec<String>,
}

/// Splits a pipeline into one branch per Output node.
///
/// A branch holds the output and all of its ancestors, so nodes shared by
/// several outputs appear in each of their branches. Outputs that no Input
/// node feeds are still returned, and are also listed in `unreachable`.
pub fn extract_branches(p: &Pipeline) -> Branches {
    let order: Vec<&str> = match p.topological_order() {
        Ok(o) => o,
        // acyclic by construction; fall back to id order if someone
        // mutated the graph into a cycle
        Err(_) => p.nodes.keys().map(String::as_str).collect(),
    };
    let rank = |id: &str| order.iter().position(|o| *o == id).unwrap_or(usize::MAX);
    let comments = p
        .metadata
        .get(BRANCH_COMMENTS_KEY)
        .and_then(|v| v.as_object());

    let mut out = Branches::default();
    for output in p.nodes_of_kind(NodeKind::Output) {
        let mut ancestors: BTreeSet<&str> = BTreeSet::new();
        let mut stack = vec![output.id.as_str()];
        while let Some(id) = stack.pop() {
            if ancestors.insert(id) {
                stack.extend(p.predecessors(id));
            }
        }
        let mut nodes: Vec<&str> = ancestors.iter().copied().collect();
        nodes.sort_by_key(|id| (rank(id), *id));
        let fed = nodes.iter().any(|id| p.nodes[*id].kind == NodeKind::Input);
        if !fed {
            out.unreachable.push(output.id.clone());
        }
        let comment = comments
            .and_then(|c| c.get(&output.id))
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| nodes.join(" -> "));
        out.branches.push(Branch {
            output: output.id.clone(),
            nodes: nodes.into_iter().map(str::to_string).collect(),
            comment,
        });
    }
    out
}
