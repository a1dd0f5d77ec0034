//! Pipeline graph model: typed nodes joined by port-to-port data-flow edges.

mod branches;
mod catalog;
pub mod dot;
pub mod json;
mod spec;

pub use branches::{extract_branches, Branch, Branches, BRANCH_COMMENTS_KEY};
pub use catalog::{
    CatalogError, FunctionCatalog, FunctionSpec, ParamDomain, ParamSpec, LANGUAGE_CODES,
};
pub use spec::{SpecRole, SpecRow, Specification, SpecificationError};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Port name used by the single port of Input and Output nodes.
pub const DATA_PORT: &str = "data";

/// Parameter on Decision nodes holding the value-to-port routing table.
pub const CONDITION_PARAM: &str = "condition";

/// Kind of data travelling along an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Audio,
    Image,
    Video,
    Label,
    Number,
    Tabular,
    Embedding,
}

impl Modality {
    pub const ALL: [Modality; 8] = [
        Modality::Text,
        Modality::Audio,
        Modality::Image,
        Modality::Video,
        Modality::Label,
        Modality::Number,
        Modality::Tabular,
        Modality::Embedding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Image => "image",
            Modality::Video => "video",
            Modality::Label => "label",
            Modality::Number => "number",
            Modality::Tabular => "tabular",
            Modality::Embedding => "embedding",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown modality `{0}`")]
pub struct UnknownModality(pub String);

impl FromStr for Modality {
    type Err = UnknownModality;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownModality(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Output,
    Function,
    Router,
    Decision,
    Script,
    #[serde(rename = "generic_llm")]
    GenericLlm,
}

impl NodeKind {
    pub const ALL: [NodeKind; 7] = [
        NodeKind::Input,
        NodeKind::Output,
        NodeKind::Function,
        NodeKind::Router,
        NodeKind::Decision,
        NodeKind::Script,
        NodeKind::GenericLlm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Input => "input",
            NodeKind::Output => "output",
            NodeKind::Function => "function",
            NodeKind::Router => "router",
            NodeKind::Decision => "decision",
            NodeKind::Script => "script",
            NodeKind::GenericLlm => "generic_llm",
        }
    }

    /// Script and GenericLLM nodes carry an opaque text payload.
    pub fn has_payload(self) -> bool {
        matches!(self, NodeKind::Script | NodeKind::GenericLlm)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown node kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub modality: Modality,
}

impl Port {
    pub fn new(name: impl Into<String>, modality: Modality) -> Self {
        Self {
            name: name.into(),
            modality,
        }
    }
}

/// Model assignment made by the matchmaker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Model(String),
    Unresolved(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Catalog function id; present iff `kind == Function`.
    pub function: Option<String>,
    pub params: BTreeMap<String, String>,
    pub inputs: Vec<Port>,
    pub outputs: Vec<Port>,
    /// Prompt for GenericLLM nodes, code for Script nodes.
    pub payload: Option<String>,
    pub binding: Option<Binding>,
}

impl Node {
    fn bare(id: impl Into<String>, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            kind,
            function: None,
            params: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            payload: None,
            binding: None,
        }
    }

    pub fn input(id: impl Into<String>, modality: Modality) -> Self {
        let mut n = Self::bare(id, NodeKind::Input);
        n.outputs.push(Port::new(DATA_PORT, modality));
        n
    }

    pub fn output(id: impl Into<String>, modality: Modality) -> Self {
        let mut n = Self::bare(id, NodeKind::Output);
        n.inputs.push(Port::new(DATA_PORT, modality));
        n
    }

    /// Function node with ports copied from the catalog entry.
    pub fn function(id: impl Into<String>, spec: &FunctionSpec) -> Self {
        let mut n = Self::bare(id, NodeKind::Function);
        n.function = Some(spec.id.clone());
        n.inputs = spec.inputs.iter().map(ParamSpec::port).collect();
        n.outputs = spec.outputs.iter().map(ParamSpec::port).collect();
        n
    }

    /// Function node with explicit ports, for ids that may not be in any
    /// catalog.
    pub fn function_with_ports(
        id: impl Into<String>,
        function: impl Into<String>,
        inputs: Vec<Port>,
        outputs: Vec<Port>,
    ) -> Self {
        let mut n = Self::bare(id, NodeKind::Function);
        n.function = Some(function.into());
        n.inputs = inputs;
        n.outputs = outputs;
        n
    }

    pub fn router(id: impl Into<String>, input: Modality, outputs: Vec<Port>) -> Self {
        let mut n = Self::bare(id, NodeKind::Router);
        n.inputs.push(Port::new(DATA_PORT, input));
        n.outputs = outputs;
        n
    }

    pub fn decision(id: impl Into<String>, inputs: Vec<Port>, outputs: Vec<Port>) -> Self {
        let mut n = Self::bare(id, NodeKind::Decision);
        n.inputs = inputs;
        n.outputs = outputs;
        n
    }

    pub fn script(
        id: impl Into<String>,
        code: impl Into<String>,
        inputs: Vec<Port>,
        outputs: Vec<Port>,
    ) -> Self {
        let mut n = Self::bare(id, NodeKind::Script);
        n.payload = Some(code.into());
        n.inputs = inputs;
        n.outputs = outputs;
        n
    }

    pub fn generic_llm(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        let mut n = Self::bare(id, NodeKind::GenericLlm);
        n.payload = Some(prompt.into());
        n.inputs.push(Port::new("text", Modality::Text));
        n.outputs.push(Port::new("text", Modality::Text));
        n
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn input_port(&self, name: &str) -> Option<&Port> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output_port(&self, name: &str) -> Option<&Port> {
        self.outputs.iter().find(|p| p.name == name)
    }

    /// Routing table of a Decision node: input value → output port name.
    /// Values are compared as plain strings.
    pub fn decision_routes(&self) -> BTreeMap<String, String> {
        self.params
            .get(CONDITION_PARAM)
            .map(|c| {
                form_urlencoded::parse(c.as_bytes())
                    .map(|(k, v)| (k.into_owned(), v.into_owned()))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Output port a Decision node sends `value` to.
    pub fn route_for(&self, value: &str) -> Option<String> {
        self.decision_routes().remove(value)
    }
}

/// `node.port` reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub node: String,
    pub port: String,
}

impl Endpoint {
    pub fn new(node: impl Into<String>, port: impl Into<String>) -> Self {
        Self {
            node: node.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.port)
    }
}

impl FromStr for Endpoint {
    type Err = String;

    /// Splits at the last `.`, so node ids may contain dots but port names
    /// may not.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.rsplit_once('.') {
            Some((node, port)) if !node.is_empty() && !port.is_empty() => {
                Ok(Endpoint::new(node, port))
            }
            _ => Err(format!("expected `nodeId.port`, got `{s}`")),
        }
    }
}

/// Directed data-flow edge from an output port to an input port.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: Endpoint,
    pub target: Endpoint,
}

impl Edge {
    pub fn new(source: Endpoint, target: Endpoint) -> Self {
        Self { source, target }
    }

    /// Parses `"a.out"`, `"b.in"`.
    pub fn parse(source: &str, target: &str) -> Result<Self, String> {
        Ok(Self::new(source.parse()?, target.parse()?))
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.source, self.target)
    }
}

impl FromStr for Edge {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (source, target) = s
            .split_once("->")
            .ok_or_else(|| format!("expected `a.out->b.in`, got `{s}`"))?;
        Edge::parse(source, target)
    }
}

impl Serialize for Edge {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("cycle through node `{0}`")]
    Cycle(String),
    #[error("node `{id}`: {reason}")]
    InvalidNode { id: String, reason: String },
}

/// Directed acyclic graph of typed nodes.
///
/// Nodes are keyed by id and edges kept in a set, so equality is structural
/// and iteration order is canonical. Edges may reference missing nodes or
/// ports; the validator reports those rather than the constructor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pipeline {
    pub nodes: BTreeMap<String, Node>,
    pub edges: BTreeSet<Edge>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Pipeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a pipeline, rejecting duplicate ids, malformed nodes and cycles.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = Node>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, IrError> {
        let mut p = Pipeline::new();
        for node in nodes {
            p.add_node(node)?;
        }
        p.edges.extend(edges);
        p.check_acyclic()?;
        Ok(p)
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), IrError> {
        check_node_shape(&node)?;
        if self.nodes.contains_key(&node.id) {
            return Err(IrError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Adds `a.out -> b.in`. Does not check acyclicity; call
    /// [`Pipeline::check_acyclic`] after a batch of edits.
    pub fn connect(&mut self, source: (&str, &str), target: (&str, &str)) {
        self.edges.insert(Edge::new(
            Endpoint::new(source.0, source.1),
            Endpoint::new(target.0, target.1),
        ));
    }

    /// Removes a node together with every edge touching it.
    pub fn remove_node(&mut self, id: &str) -> Option<Node> {
        let node = self.nodes.remove(id)?;
        self.edges
            .retain(|e| e.source.node != id && e.target.node != id);
        Some(node)
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Size used to normalise edit distances: nodes plus edges.
    pub fn size(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    /// True when both endpoints name existing ports on the correct side.
    pub fn edge_resolves(&self, edge: &Edge) -> bool {
        let src = self
            .nodes
            .get(&edge.source.node)
            .and_then(|n| n.output_port(&edge.source.port));
        let dst = self
            .nodes
            .get(&edge.target.node)
            .and_then(|n| n.input_port(&edge.target.port));
        src.is_some() && dst.is_some()
    }

    /// Distinct successor node ids, over edges whose endpoints exist.
    pub fn successors(&self, id: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|e| e.source.node == id && self.nodes.contains_key(&e.target.node))
            .map(|e| e.target.node.as_str())
            .collect()
    }

    pub fn predecessors(&self, id: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|e| e.target.node == id && self.nodes.contains_key(&e.source.node))
            .map(|e| e.source.node.as_str())
            .collect()
    }

    /// Kahn ordering over existing nodes; ties broken by id. `Err` names a
    /// node on a cycle.
    pub fn topological_order(&self) -> Result<Vec<&str>, IrError> {
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        let mut adjacency: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in &self.edges {
            if self.nodes.contains_key(&e.source.node) && self.nodes.contains_key(&e.target.node) {
                if e.source.node == e.target.node {
                    return Err(IrError::Cycle(e.source.node.clone()));
                }
                if adjacency
                    .entry(e.source.node.as_str())
                    .or_default()
                    .insert(e.target.node.as_str())
                {
                    *indegree.get_mut(e.target.node.as_str()).unwrap() += 1;
                }
            }
        }
        let mut ready: BTreeSet<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(next) = ready.pop_first() {
            order.push(next);
            for succ in adjacency.get(next).into_iter().flatten() {
                let d = indegree.get_mut(succ).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(succ);
                }
            }
        }
        if order.len() < self.nodes.len() {
            let stuck = indegree
                .iter()
                .find(|(_, d)| **d > 0)
                .map(|(k, _)| k.to_string())
                .unwrap_or_default();
            return Err(IrError::Cycle(stuck));
        }
        Ok(order)
    }

    pub fn check_acyclic(&self) -> Result<(), IrError> {
        self.topological_order().map(|_| ())
    }

    /// Ids reachable by forward traversal from any Input node.
    pub fn reachable_from_inputs(&self) -> BTreeSet<&str> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<&str> = self
            .nodes_of_kind(NodeKind::Input)
            .map(|n| n.id.as_str())
            .collect();
        while let Some(id) = queue.pop_front() {
            if seen.insert(id) {
                queue.extend(self.successors(id));
            }
        }
        seen
    }
}

/// Node-shape checks enforced at construction time. Rules that mirror the
/// graph constraints (port counts on Input/Output/Router nodes) are left to
/// the validator so they can be reported and repaired.
fn check_node_shape(node: &Node) -> Result<(), IrError> {
    let invalid = |reason: &str| IrError::InvalidNode {
        id: node.id.clone(),
        reason: reason.to_string(),
    };
    if node.id.is_empty() {
        return Err(invalid("empty id"));
    }
    match (node.kind, &node.function) {
        (NodeKind::Function, None) => return Err(invalid("function node without `function`")),
        (NodeKind::Function, Some(f)) if f.is_empty() => {
            return Err(invalid("function node with empty `function`"))
        }
        (k, Some(_)) if k != NodeKind::Function => {
            return Err(invalid("`function` is only allowed on function nodes"))
        }
        _ => {}
    }
    if node.kind.has_payload() && node.payload.is_none() {
        return Err(invalid("script and generic_llm nodes require a payload"));
    }
    if !node.kind.has_payload() && node.payload.is_some() {
        return Err(invalid(
            "payload is only allowed on script and generic_llm nodes",
        ));
    }
    for (side, ports) in [("input", &node.inputs), ("output", &node.outputs)] {
        let mut names = BTreeSet::new();
        for p in ports {
            if p.name.is_empty() || p.name.contains('.') {
                return Err(invalid(&format!("invalid {side} port name `{}`", p.name)));
            }
            if !names.insert(p.name.as_str()) {
                return Err(invalid(&format!("duplicate {side} port `{}`", p.name)));
            }
        }
    }
    Ok(())
}
