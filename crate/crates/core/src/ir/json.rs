//! Canonical JSON form of a [`Pipeline`].
//!
//! ```json
//! {"nodes": [{"id": "asr", "kind": "function", "function": "speech_recognition",
//!             "params": {"language": "en"}, "inputs": [...], "outputs": [...]}],
//!  "edges": [{"from": "video_in.data", "to": "asr.audio"}],
//!  "metadata": {}}
//! ```
//!
//! On input, `inputs`/`outputs` may be omitted: Function nodes then take the
//! ports of their catalog entry, and Input/Output nodes may give a single
//! `modality` instead. Serialization always writes ports explicitly, sorts
//! nodes by id and edges by endpoints, so output is byte-stable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{
    Binding, Edge, FunctionCatalog, IrError, Modality, Node, NodeKind, Pipeline, Port, DATA_PORT,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed document at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: {message}")]
    Schema { location: String, message: String },
    #[error("{location}: unknown node kind `{kind}`")]
    UnknownKind { location: String, kind: String },
    #[error("{location}: unknown modality `{modality}`")]
    UnknownModality { location: String, modality: String },
    #[error("{location}: duplicate node id `{id}`")]
    DuplicateNode { location: String, id: String },
    #[error("{location}: missing required attribute `{attribute}`")]
    MissingAttribute { location: String, attribute: String },
    #[error("graph contains a cycle through node `{0}`")]
    Cycle(String),
}

#[derive(Deserialize)]
struct RawDoc {
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<RawEdge>,
    #[serde(default)]
    metadata: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawNode {
    id: String,
    kind: String,
    #[serde(default)]
    function: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, Value>,
    #[serde(default)]
    payload: Option<String>,
    #[serde(default)]
    inputs: Option<Vec<RawPort>>,
    #[serde(default)]
    outputs: Option<Vec<RawPort>>,
    #[serde(default)]
    modality: Option<String>,
    #[serde(default)]
    binding: Option<Binding>,
}

#[derive(Deserialize, Serialize)]
struct RawPort {
    name: String,
    modality: String,
}

#[derive(Deserialize, Serialize)]
struct RawEdge {
    from: String,
    to: String,
}

/// Parses and checks a pipeline document. Catalog membership of function
/// ids is not checked here; unknown functions are left for the validator.
pub fn parse_pipeline_json(text: &str, catalog: &FunctionCatalog) -> Result<Pipeline, ParseError> {
    let doc: RawDoc = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_raw(doc, catalog)
}

/// Same as [`parse_pipeline_json`] over an already-parsed JSON value.
pub fn pipeline_from_value(
    value: Value,
    catalog: &FunctionCatalog,
) -> Result<Pipeline, ParseError> {
    let doc: RawDoc = serde_json::from_value(value).map_err(|e| ParseError::Schema {
        location: "$".into(),
        message: e.to_string(),
    })?;
    from_raw(doc, catalog)
}

fn from_raw(doc: RawDoc, catalog: &FunctionCatalog) -> Result<Pipeline, ParseError> {
    let mut pipeline = Pipeline::new();
    pipeline.metadata = doc.metadata;
    for (i, raw) in doc.nodes.into_iter().enumerate() {
        let location = format!("nodes[{i}]");
        let node = node_from_raw(raw, &location, catalog)?;
        pipeline.add_node(node).map_err(|e| match e {
            IrError::DuplicateNode(id) => ParseError::DuplicateNode { location, id },
            other => ParseError::Schema {
                location,
                message: other.to_string(),
            },
        })?;
    }
    for (i, raw) in doc.edges.into_iter().enumerate() {
        let edge = Edge::parse(&raw.from, &raw.to).map_err(|message| ParseError::Schema {
            location: format!("edges[{i}]"),
            message,
        })?;
        pipeline.edges.insert(edge);
    }
    pipeline.check_acyclic().map_err(|e| match e {
        IrError::Cycle(n) => ParseError::Cycle(n),
        other => ParseError::Schema {
            location: "$".into(),
            message: other.to_string(),
        },
    })?;
    Ok(pipeline)
}

pub(crate) fn parse_modality(value: &str, location: &str) -> Result<Modality, ParseError> {
    value.parse().map_err(|_| ParseError::UnknownModality {
        location: location.to_string(),
        modality: value.to_string(),
    })
}

pub(crate) fn parse_kind(value: &str, location: &str) -> Result<NodeKind, ParseError> {
    value.parse().map_err(|_| ParseError::UnknownKind {
        location: location.to_string(),
        kind: value.to_string(),
    })
}

fn ports_from_raw(ports: Vec<RawPort>, location: &str) -> Result<Vec<Port>, ParseError> {
    ports
        .into_iter()
        .enumerate()
        .map(|(j, p)| {
            let modality = parse_modality(&p.modality, &format!("{location}[{j}].modality"))?;
            Ok(Port::new(p.name, modality))
        })
        .collect()
}

/// Fills in ports that a document left implicit.
pub(crate) fn default_ports(
    kind: NodeKind,
    function: Option<&str>,
    modality: Option<Modality>,
    catalog: &FunctionCatalog,
) -> (Vec<Port>, Vec<Port>) {
    match (kind, function, modality) {
        (NodeKind::Input, _, Some(m)) => (vec![], vec![Port::new(DATA_PORT, m)]),
        (NodeKind::Output, _, Some(m)) => (vec![Port::new(DATA_PORT, m)], vec![]),
        (NodeKind::GenericLlm, _, _) => (
            vec![Port::new("text", Modality::Text)],
            vec![Port::new("text", Modality::Text)],
        ),
        (NodeKind::Function, Some(f), _) => match catalog.get(f) {
            Some(spec) => (
                spec.inputs.iter().map(|p| p.port()).collect(),
                spec.outputs.iter().map(|p| p.port()).collect(),
            ),
            None => (vec![], vec![]),
        },
        _ => (vec![], vec![]),
    }
}

fn param_value(value: Value, location: &str) -> Result<String, ParseError> {
    match value {
        Value::String(s) => Ok(s),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(ParseError::Schema {
            location: location.to_string(),
            message: format!("parameter values must be scalars, got {other}"),
        }),
    }
}

fn node_from_raw(
    raw: RawNode,
    location: &str,
    catalog: &FunctionCatalog,
) -> Result<Node, ParseError> {
    let kind = parse_kind(&raw.kind, &format!("{location}.kind"))?;
    let modality = raw
        .modality
        .as_deref()
        .map(|m| parse_modality(m, &format!("{location}.modality")))
        .transpose()?;
    let (default_in, default_out) = default_ports(kind, raw.function.as_deref(), modality, catalog);
    let inputs = match raw.inputs {
        Some(p) => ports_from_raw(p, &format!("{location}.inputs"))?,
        None => default_in,
    };
    let outputs = match raw.outputs {
        Some(p) => ports_from_raw(p, &format!("{location}.outputs"))?,
        None => default_out,
    };
    let params = raw
        .params
        .into_iter()
        .map(|(k, v)| {
            let value = param_value(v, &format!("{location}.params.{k}"))?;
            Ok((k, value))
        })
        .collect::<Result<_, ParseError>>()?;
    Ok(Node {
        id: raw.id,
        kind,
        function: raw.function,
        params,
        inputs,
        outputs,
        payload: raw.payload,
        binding: raw.binding,
    })
}

#[derive(Serialize)]
struct OutDoc<'a> {
    nodes: Vec<OutNode<'a>>,
    edges: Vec<RawEdge>,
    metadata: &'a BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct OutNode<'a> {
    id: &'a str,
    kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    function: Option<&'a str>,
    params: &'a BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    payload: Option<&'a str>,
    inputs: Vec<RawPort>,
    outputs: Vec<RawPort>,
    #[serde(skip_serializing_if = "Option::is_none")]
    binding: Option<&'a Binding>,
}

fn out_ports(ports: &[Port]) -> Vec<RawPort> {
    ports
        .iter()
        .map(|p| RawPort {
            name: p.name.clone(),
            modality: p.modality.as_str().to_string(),
        })
        .collect()
}

pub fn pipeline_to_value(p: &Pipeline) -> Value {
    serde_json::to_value(out_doc(p)).expect("pipeline serializes")
}

fn out_doc(p: &Pipeline) -> OutDoc<'_> {
    OutDoc {
        nodes: p
            .nodes
            .values()
            .map(|n| OutNode {
                id: &n.id,
                kind: n.kind,
                function: n.function.as_deref(),
                params: &n.params,
                payload: n.payload.as_deref(),
                inputs: out_ports(&n.inputs),
                outputs: out_ports(&n.outputs),
                binding: n.binding.as_ref(),
            })
            .collect(),
        edges: p
            .edges
            .iter()
            .map(|e| RawEdge {
                from: e.source.to_string(),
                to: e.target.to_string(),
            })
            .collect(),
        metadata: &p.metadata,
    }
}

impl Serialize for Pipeline {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        out_doc(self).serialize(serializer)
    }
}

/// Reads the document format of [`parse_pipeline_json`]. Ports a node
/// leaves out are filled from the builtin catalog; documents written by
/// the serializer always list them.
impl<'de> Deserialize<'de> for Pipeline {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        pipeline_from_value(value, FunctionCatalog::builtin()).map_err(serde::de::Error::custom)
    }
}

/// Canonical pretty-printed JSON.
pub fn serialize_pipeline_json(p: &Pipeline) -> String {
    let mut s = serde_json::to_string_pretty(&out_doc(p)).expect("pipeline serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> &'static FunctionCatalog {
        FunctionCatalog::builtin()
    }

    #[test]
    fn empty_document() {
        let p = parse_pipeline_json(r#"{"nodes": [], "edges": []}"#, catalog()).unwrap();
        assert!(p.nodes.is_empty());
        assert_eq!(
            serialize_pipeline_json(&p),
            "{\n  \"nodes\": [],\n  \"edges\": [],\n  \"metadata\": {}\n}\n"
        );
    }

    #[test]
    fn duplicate_id_is_reported_with_location() {
        let doc = r#"{"nodes": [
            {"id": "n1", "kind": "input", "modality": "text"},
            {"id": "n1", "kind": "output", "modality": "text"}]}"#;
        assert_eq!(
            parse_pipeline_json(doc, catalog()).unwrap_err(),
            ParseError::DuplicateNode {
                location: "nodes[1]".into(),
                id: "n1".into()
            }
        );
    }

    #[test]
    fn unknown_kind_and_modality() {
        let doc = r#"{"nodes": [{"id": "a", "kind": "teleporter"}]}"#;
        assert!(matches!(
            parse_pipeline_json(doc, catalog()),
            Err(ParseError::UnknownKind { location, .. }) if location == "nodes[0].kind"
        ));
        let doc = r#"{"nodes": [{"id": "a", "kind": "input",
                      "outputs": [{"name": "data", "modality": "smell"}]}]}"#;
        assert!(matches!(
            parse_pipeline_json(doc, catalog()),
            Err(ParseError::UnknownModality { location, .. }) if location == "nodes[0].outputs[0].modality"
        ));
    }

    #[test]
    fn malformed_document_reports_position() {
        let err = parse_pipeline_json("{\n  \"nodes\": [,]\n}", catalog()).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 2, .. }), "{err:?}");
        assert!(matches!(
            parse_pipeline_json("{}", catalog()),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn function_ports_come_from_catalog() {
        let doc = r#"{"nodes": [{"id": "mt", "kind": "function", "function": "machine_translation",
                      "params": {"source_language": "en", "target_language": "fr"}}]}"#;
        let p = parse_pipeline_json(doc, catalog()).unwrap();
        let mt = &p.nodes["mt"];
        assert_eq!(mt.inputs[0], Port::new("text", Modality::Text));
        assert_eq!(mt.outputs[0], Port::new("text", Modality::Text));
    }

    #[test]
    fn unknown_function_parses_with_no_ports() {
        let doc = r#"{"nodes": [{"id": "x", "kind": "function", "function": "teleport"}]}"#;
        let p = parse_pipeline_json(doc, catalog()).unwrap();
        assert!(p.nodes["x"].inputs.is_empty());
    }

    #[test]
    fn scalar_params_are_stringified() {
        let doc = r#"{"nodes": [{"id": "i", "kind": "input", "modality": "text",
                      "params": {"count": 3, "flag": true}}]}"#;
        let p = parse_pipeline_json(doc, catalog()).unwrap();
        assert_eq!(p.nodes["i"].params["count"], "3");
        assert_eq!(p.nodes["i"].params["flag"], "true");
        let doc = r#"{"nodes": [{"id": "i", "kind": "input", "params": {"x": [1]}}]}"#;
        assert!(matches!(
            parse_pipeline_json(doc, catalog()),
            Err(ParseError::Schema { .. })
        ));
    }

    #[test]
    fn cycle_rejected_on_parse() {
        let doc = r#"{"nodes": [
            {"id": "a", "kind": "generic_llm", "payload": "p"},
            {"id": "b", "kind": "generic_llm", "payload": "q"}],
            "edges": [{"from": "a.text", "to": "b.text"}, {"from": "b.text", "to": "a.text"}]}"#;
        assert!(matches!(
            parse_pipeline_json(doc, catalog()),
            Err(ParseError::Cycle(_))
        ));
    }

    #[test]
    fn bad_edge_reference() {
        let doc = r#"{"nodes": [], "edges": [{"from": "nodot", "to": "b.x"}]}"#;
        assert!(matches!(
            parse_pipeline_json(doc, catalog()),
            Err(ParseError::Schema { location, .. }) if location == "edges[0]"
        ));
    }
}
