//! Structural checks over a [`Pipeline`] and the repairs that need no LLM.
//!
//! Every rule reports one issue per offending location. Rules look only at
//! edges whose endpoints both resolve to existing ports; an unresolved edge
//! is reported once as [`IssueCode::DanglingEdge`] and otherwise ignored, so
//! removing it never creates new issues elsewhere.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{Edge, Endpoint, FunctionCatalog, NodeKind, Pipeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    /// An input node has an incoming edge.
    InputHasPredecessor,
    /// An input node does not have exactly one output port.
    InputOutputCount,
    /// An output node has an outgoing edge.
    OutputHasSuccessor,
    /// Several output nodes read the same output port.
    DupOutput,
    /// A router does not have exactly one predecessor node.
    RouterPredecessor,
    /// A router has fewer than two output ports or repeats a modality.
    RouterOutputs,
    /// A router feeds another router.
    RouterChain,
    /// A function node names a function missing from the catalog.
    UnknownFunction,
    /// A function node sets a parameter the catalog does not list, or a
    /// value outside the parameter's domain.
    UnknownParam,
    /// A function node lacks a required input edge or parameter.
    MissingRequiredParam,
    /// An input port has more than one incoming edge.
    MultipleIncoming,
    /// An output port of a non-output node has no outgoing edge.
    UnusedOutput,
    /// A node cannot be reached from any input node.
    Unreachable,
    /// An edge names a node or port that does not exist.
    DanglingEdge,
    /// An edge joins ports of different modalities.
    ModalityMismatch,
}

impl IssueCode {
    pub const ALL: [IssueCode; 15] = [
        IssueCode::InputHasPredecessor,
        IssueCode::InputOutputCount,
        IssueCode::OutputHasSuccessor,
        IssueCode::DupOutput,
        IssueCode::RouterPredecessor,
        IssueCode::RouterOutputs,
        IssueCode::RouterChain,
        IssueCode::UnknownFunction,
        IssueCode::UnknownParam,
        IssueCode::MissingRequiredParam,
        IssueCode::MultipleIncoming,
        IssueCode::UnusedOutput,
        IssueCode::Unreachable,
        IssueCode::DanglingEdge,
        IssueCode::ModalityMismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::InputHasPredecessor => "INPUT_HAS_PREDECESSOR",
            IssueCode::InputOutputCount => "INPUT_OUTPUT_COUNT",
            IssueCode::OutputHasSuccessor => "OUTPUT_HAS_SUCCESSOR",
            IssueCode::DupOutput => "DUP_OUTPUT",
            IssueCode::RouterPredecessor => "ROUTER_PREDECESSOR",
            IssueCode::RouterOutputs => "ROUTER_OUTPUTS",
            IssueCode::RouterChain => "ROUTER_CHAIN",
            IssueCode::UnknownFunction => "UNKNOWN_FUNCTION",
            IssueCode::UnknownParam => "UNKNOWN_PARAM",
            IssueCode::MissingRequiredParam => "MISSING_REQUIRED_PARAM",
            IssueCode::MultipleIncoming => "MULTIPLE_INCOMING",
            IssueCode::UnusedOutput => "UNUSED_OUTPUT",
            IssueCode::Unreachable => "UNREACHABLE",
            IssueCode::DanglingEdge => "DANGLING_EDGE",
            IssueCode::ModalityMismatch => "MODALITY_MISMATCH",
        }
    }

    /// Whether an issue can be repaired without an LLM.
    ///
    /// | code | fixability |
    /// |------|------------|
    /// | `DUP_OUTPUT` | mechanical: keep the output node with the smallest id |
    /// | `DANGLING_EDGE` | mechanical: drop the edge |
    /// | every other code | llm_assisted |
    pub fn fixability(self) -> Fixability {
        match self {
            IssueCode::DupOutput | IssueCode::DanglingEdge => Fixability::Mechanical,
            _ => Fixability::LlmAssisted,
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown issue code `{0}`")]
pub struct UnknownIssueCode(pub String);

impl FromStr for IssueCode {
    type Err = UnknownIssueCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IssueCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownIssueCode(s.to_string()))
    }
}

/// Looks up the fixability of a code given by name.
pub fn classify_fixability(code: &str) -> Result<Fixability, UnknownIssueCode> {
    code.parse::<IssueCode>().map(IssueCode::fixability)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixability {
    Mechanical,
    LlmAssisted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
}

/// Where an issue was found.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Location {
    /// The pipeline as a whole, e.g. when it has no input node at all.
    Pipeline,
    Node {
        node: String,
    },
    /// A port, or a named parameter that may be supplied through a port.
    Port {
        node: String,
        port: String,
    },
    Edge {
        edge: Edge,
    },
}

impl Location {
    fn node(id: &str) -> Self {
        Location::Node {
            node: id.to_string(),
        }
    }

    fn port(node: &str, port: &str) -> Self {
        Location::Port {
            node: node.to_string(),
            port: port.to_string(),
        }
    }

    /// Node ids this location touches.
    pub fn nodes(&self) -> Vec<&str> {
        match self {
            Location::Pipeline => vec![],
            Location::Node { node } | Location::Port { node, .. } => vec![node.as_str()],
            Location::Edge { edge } => vec![edge.source.node.as_str(), edge.target.node.as_str()],
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Pipeline => f.write_str("pipeline"),
            Location::Node { node } => write!(f, "node {node}"),
            Location::Port { node, port } => write!(f, "{node}.{port}"),
            Location::Edge { edge } => write!(f, "edge {edge}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub code: IssueCode,
    pub severity: Severity,
    pub fixability: Fixability,
    pub location: Location,
    pub message: String,
}

impl ValidationIssue {
    fn new(code: IssueCode, location: Location, message: String) -> Self {
        Self {
            code,
            severity: Severity::Error,
            fixability: code.fixability(),
            location,
            message,
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub is_valid: bool,
}

impl ValidationReport {
    fn from_issues(mut issues: Vec<ValidationIssue>) -> Self {
        issues.sort_by(|a, b| (a.code, &a.location).cmp(&(b.code, &b.location)));
        issues.dedup_by(|a, b| a.code == b.code && a.location == b.location);
        let is_valid = issues.is_empty();
        Self { issues, is_valid }
    }

    pub fn codes(&self) -> BTreeSet<IssueCode> {
        self.issues.iter().map(|i| i.code).collect()
    }

    pub fn count(&self, code: IssueCode) -> usize {
        self.issues.iter().filter(|i| i.code == code).count()
    }

    pub fn has_mechanical(&self) -> bool {
        self.issues
            .iter()
            .any(|i| i.fixability == Fixability::Mechanical)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Resolved view of the edges: only edges whose ports exist on both ends.
struct Wiring<'a> {
    edges: Vec<&'a Edge>,
    out_edges: BTreeMap<&'a Endpoint, Vec<&'a Edge>>,
    in_edges: BTreeMap<&'a Endpoint, Vec<&'a Edge>>,
}

impl<'a> Wiring<'a> {
    fn new(p: &'a Pipeline) -> Self {
        let edges: Vec<&Edge> = p.edges.iter().filter(|e| p.edge_resolves(e)).collect();
        let mut out_edges: BTreeMap<&Endpoint, Vec<&Edge>> = BTreeMap::new();
        let mut in_edges: BTreeMap<&Endpoint, Vec<&Edge>> = BTreeMap::new();
        for e in &edges {
            out_edges.entry(&e.source).or_default().push(e);
            in_edges.entry(&e.target).or_default().push(e);
        }
        Self {
            edges,
            out_edges,
            in_edges,
        }
    }

    fn predecessors(&self, id: &str) -> BTreeSet<&'a str> {
        self.edges
            .iter()
            .filter(|e| e.target.node == id)
            .map(|e| e.source.node.as_str())
            .collect()
    }

    fn has_incoming(&self, id: &str) -> bool {
        self.edges.iter().any(|e| e.target.node == id)
    }

    fn has_outgoing(&self, id: &str) -> bool {
        self.edges.iter().any(|e| e.source.node == id)
    }

    fn reachable(&self, p: &'a Pipeline) -> BTreeSet<&'a str> {
        let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            adjacency
                .entry(e.source.node.as_str())
                .or_default()
                .push(e.target.node.as_str());
        }
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = p
            .nodes_of_kind(NodeKind::Input)
            .map(|n| n.id.as_str())
            .collect();
        while let Some(id) = queue.pop_front() {
            if seen.insert(id) {
                queue.extend(adjacency.get(id).into_iter().flatten());
            }
        }
        seen
    }
}

/// Checks every graph rule and returns all violations, sorted by code and
/// then location.
pub fn validate(p: &Pipeline, catalog: &FunctionCatalog) -> ValidationReport {
    let w = Wiring::new(p);
    let mut issues = Vec::new();
    let mut push = |code, location, message: String| {
        issues.push(ValidationIssue::new(code, location, message))
    };

    for node in p.nodes.values() {
        let id = node.id.as_str();
        match node.kind {
            NodeKind::Input => {
                if w.has_incoming(id) {
                    push(
                        IssueCode::InputHasPredecessor,
                        Location::node(id),
                        format!("input node `{id}` has an incoming edge"),
                    );
                }
                if node.outputs.len() != 1 {
                    push(
                        IssueCode::InputOutputCount,
                        Location::node(id),
                        format!(
                            "input node `{id}` has {} output ports, expected 1",
                            node.outputs.len()
                        ),
                    );
                }
            }
            NodeKind::Output => {
                if w.has_outgoing(id) {
                    push(
                        IssueCode::OutputHasSuccessor,
                        Location::node(id),
                        format!("output node `{id}` has an outgoing edge"),
                    );
                }
            }
            NodeKind::Router => {
                let preds = w.predecessors(id);
                if preds.len() != 1 {
                    push(
                        IssueCode::RouterPredecessor,
                        Location::node(id),
                        format!(
                            "router `{id}` must have exactly one predecessor, found [{}]",
                            preds.into_iter().collect::<Vec<_>>().join(", ")
                        ),
                    );
                }
                let modalities: BTreeSet<_> = node.outputs.iter().map(|o| o.modality).collect();
                if node.outputs.len() < 2 || modalities.len() != node.outputs.len() {
                    push(
                        IssueCode::RouterOutputs,
                        Location::node(id),
                        format!(
                            "router `{id}` needs at least two output ports of distinct modalities"
                        ),
                    );
                }
            }
            NodeKind::Function => check_function(&w, node, catalog, &mut push),
            NodeKind::Decision | NodeKind::Script | NodeKind::GenericLlm => {}
        }

        if node.kind != NodeKind::Output {
            for port in &node.outputs {
                let endpoint = Endpoint::new(id, port.name.as_str());
                if !w.out_edges.contains_key(&endpoint) {
                    push(
                        IssueCode::UnusedOutput,
                        Location::port(id, &port.name),
                        format!("output port `{endpoint}` is not connected"),
                    );
                }
            }
        }
    }

    for (source, edges) in &w.out_edges {
        let outputs: BTreeSet<&str> = edges
            .iter()
            .map(|e| e.target.node.as_str())
            .filter(|n| p.nodes[*n].kind == NodeKind::Output)
            .collect();
        if outputs.len() > 1 {
            push(
                IssueCode::DupOutput,
                Location::port(&source.node, &source.port),
                format!(
                    "output nodes [{}] all read `{source}`",
                    outputs.into_iter().collect::<Vec<_>>().join(", ")
                ),
            );
        }
    }

    for (target, edges) in &w.in_edges {
        if edges.len() > 1 {
            push(
                IssueCode::MultipleIncoming,
                Location::port(&target.node, &target.port),
                format!("input port `{target}` has {} incoming edges", edges.len()),
            );
        }
    }

    for e in &w.edges {
        let src = &p.nodes[&e.source.node];
        let dst = &p.nodes[&e.target.node];
        if src.kind == NodeKind::Router && dst.kind == NodeKind::Router {
            push(
                IssueCode::RouterChain,
                Location::Edge { edge: (*e).clone() },
                format!("router `{}` feeds router `{}`", src.id, dst.id),
            );
        }
        let from = src.output_port(&e.source.port).expect("resolved").modality;
        let to = dst.input_port(&e.target.port).expect("resolved").modality;
        let admitted = from == to
            || (dst.kind == NodeKind::Function
                && dst
                    .function
                    .as_deref()
                    .and_then(|f| catalog.get(f))
                    .and_then(|spec| spec.input(&e.target.port))
                    .is_some_and(|param| param.admits(from)));
        if !admitted {
            push(
                IssueCode::ModalityMismatch,
                Location::Edge { edge: (*e).clone() },
                format!("edge `{e}` carries {from} into a {to} port"),
            );
        }
    }

    for e in &p.edges {
        if !p.edge_resolves(e) {
            push(
                IssueCode::DanglingEdge,
                Location::Edge { edge: e.clone() },
                format!(
                    "edge `{e}` does not connect an existing output port to an existing input port"
                ),
            );
        }
    }

    if p.nodes_of_kind(NodeKind::Input).next().is_none() {
        push(
            IssueCode::Unreachable,
            Location::Pipeline,
            "pipeline has no input node".to_string(),
        );
    }
    let reachable = w.reachable(p);
    for id in p.nodes.keys() {
        if !reachable.contains(id.as_str()) {
            push(
                IssueCode::Unreachable,
                Location::node(id),
                format!("node `{id}` is not reachable from any input node"),
            );
        }
    }

    ValidationReport::from_issues(issues)
}

fn check_function(
    w: &Wiring<'_>,
    node: &crate::ir::Node,
    catalog: &FunctionCatalog,
    push: &mut impl FnMut(IssueCode, Location, String),
) {
    let id = node.id.as_str();
    let function = node.function.as_deref().unwrap_or_default();
    let Some(spec) = catalog.get(function) else {
        push(
            IssueCode::UnknownFunction,
            Location::node(id),
            format!("function `{function}` of node `{id}` is not in the catalog"),
        );
        return;
    };
    for (name, value) in &node.params {
        match spec.param(name) {
            None => push(
                IssueCode::UnknownParam,
                Location::port(id, name),
                format!("`{}` has no parameter `{name}`", spec.id),
            ),
            Some(domain) if !domain.allows(value) => push(
                IssueCode::UnknownParam,
                Location::port(id, name),
                format!("`{value}` is not an allowed value of `{}.{name}`", spec.id),
            ),
            Some(_) => {}
        }
    }
    let wired = |port: &str| {
        node.input_port(port).is_some() && w.in_edges.contains_key(&Endpoint::new(id, port))
    };
    let mut missing = BTreeSet::new();
    for input in spec.required_inputs() {
        if !wired(&input.name) {
            missing.insert(input.name.as_str());
        }
    }
    for param in &spec.required_params {
        if !node.params.contains_key(&param.name) && !wired(&param.name) {
            missing.insert(param.name.as_str());
        }
    }
    for name in missing {
        push(
            IssueCode::MissingRequiredParam,
            Location::port(id, name),
            format!("node `{id}` ({}) is missing required `{name}`", spec.id),
        );
    }
}

/// One repair performed by [`apply_mechanical_fixes`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedFix {
    pub code: IssueCode,
    pub location: Location,
    pub action: String,
}

/// Result of mechanical repair.
#[derive(Debug, Clone, PartialEq)]
pub struct FixOutcome {
    pub pipeline: Pipeline,
    pub applied: Vec<AppliedFix>,
    /// Validation of the repaired pipeline.
    pub report: ValidationReport,
}

/// Applies every mechanical repair suggested by `report`, then keeps
/// repairing until none applies.
///
/// Dangling edges are dropped outright. For duplicated outputs the output
/// node with the smallest id keeps the link; each other duplicate loses its
/// edge from the shared port, and is removed when that was its only edge.
/// A duplicate-output repair that would raise the total issue count (for
/// instance by cutting off nodes downstream of a misplaced output node) is
/// skipped and its issue stays in the report.
pub fn apply_mechanical_fixes(
    p: &Pipeline,
    report: &ValidationReport,
    catalog: &FunctionCatalog,
) -> FixOutcome {
    let mut current = p.clone();
    let mut applied = Vec::new();
    let mut report = report.clone();
    loop {
        let mut changed = false;
        for issue in report
            .issues
            .iter()
            .filter(|i| i.code == IssueCode::DanglingEdge)
        {
            if let Location::Edge { edge } = &issue.location {
                if current.edges.remove(edge) {
                    applied.push(AppliedFix {
                        code: issue.code,
                        location: issue.location.clone(),
                        action: format!("removed edge {edge}"),
                    });
                    changed = true;
                }
            }
        }
        if changed {
            report = validate(&current, catalog);
        }
        let mut baseline = report.issues.len();
        let dups: Vec<ValidationIssue> = report
            .issues
            .iter()
            .filter(|i| i.code == IssueCode::DupOutput)
            .cloned()
            .collect();
        for issue in dups {
            let Location::Port { node, port } = &issue.location else {
                continue;
            };
            let Some((candidate, action)) = dedupe_outputs(&current, node, port) else {
                continue;
            };
            let candidate_report = validate(&candidate, catalog);
            if candidate_report.issues.len() <= baseline {
                current = candidate;
                baseline = candidate_report.issues.len();
                report = candidate_report;
                applied.push(AppliedFix {
                    code: issue.code,
                    location: issue.location.clone(),
                    action,
                });
                changed = true;
            }
        }
        if !changed {
            break;
        }
        report = validate(&current, catalog);
    }
    FixOutcome {
        pipeline: current,
        applied,
        report,
    }
}

fn dedupe_outputs(p: &Pipeline, node: &str, port: &str) -> Option<(Pipeline, String)> {
    let source = Endpoint::new(node, port);
    let feeding: Vec<&Edge> = p
        .edges
        .iter()
        .filter(|e| {
            e.source == source
                && p.edge_resolves(e)
                && p.nodes[&e.target.node].kind == NodeKind::Output
        })
        .collect();
    let outputs: BTreeSet<&str> = feeding.iter().map(|e| e.target.node.as_str()).collect();
    let keep = *outputs.first()?;
    if outputs.len() < 2 {
        return None;
    }
    let mut next = p.clone();
    let mut removed_nodes = Vec::new();
    let mut removed_edges = Vec::new();
    for e in feeding.iter().filter(|e| e.target.node != keep) {
        next.edges.remove(*e);
        removed_edges.push(e.to_string());
    }
    for out in outputs.iter().filter(|o| **o != keep) {
        let touched = next
            .edges
            .iter()
            .any(|e| e.source.node == *out || e.target.node == *out);
        if !touched {
            next.remove_node(out);
            removed_nodes.push(*out);
        }
    }
    let action = if removed_nodes.is_empty() {
        format!("kept `{keep}`, removed edges {}", removed_edges.join(", "))
    } else {
        format!(
            "kept `{keep}`, removed output nodes {}",
            removed_nodes.join(", ")
        )
    };
    Some((next, action))
}
