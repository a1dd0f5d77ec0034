use std::collections::{BTreeMap, BTreeSet};

use pipewright_core::ir::{Binding, Edge, Endpoint, Modality, Node, NodeKind, Pipeline};
use pipewright_gateway::{AgentRole, Gateway};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{prompts, reply, AgentError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub model_id: String,
    pub function_id: String,
    pub supplier: String,
    #[serde(default)]
    pub domains: Vec<String>,
    /// Sortable release tag such as `2024-03`.
    pub version: String,
    #[serde(default)]
    pub is_default: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("registry is malformed: {0}")]
    Parse(String),
    #[error("function `{0}` has no default model")]
    NoDefault(String),
    #[error("function `{0}` has more than one default model")]
    MultipleDefaults(String),
    #[error("model id `{0}` appears twice")]
    DuplicateModel(String),
}

/// Models available per catalog function, with exactly one default each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelRegistry {
    entries: Vec<ModelEntry>,
}

impl ModelRegistry {
    pub fn new(entries: Vec<ModelEntry>) -> Result<Self, RegistryError> {
        let mut ids = BTreeSet::new();
        let mut defaults: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &entries {
            if !ids.insert(e.model_id.as_str()) {
                return Err(RegistryError::DuplicateModel(e.model_id.clone()));
            }
            *defaults.entry(&e.function_id).or_default() += usize::from(e.is_default);
        }
        for (function, n) in defaults {
            match n {
                0 => return Err(RegistryError::NoDefault(function.to_string())),
                1 => {}
                _ => return Err(RegistryError::MultipleDefaults(function.to_string())),
            }
        }
        Ok(Self { entries })
    }

    /// Reads `{"entries": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        #[derive(Deserialize)]
        struct Doc {
            entries: Vec<ModelEntry>,
        }
        let doc: Doc =
            serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::new(doc.entries)
    }

    /// The registry shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(prompts::DEFAULT_REGISTRY).expect("bundled registry is valid")
    }

    pub fn entries(&self) -> &[ModelEntry] {
        &self.entries
    }

    pub fn for_function<'a>(
        &'a self,
        function_id: &'a str,
    ) -> impl Iterator<Item = &'a ModelEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.function_id == function_id)
    }

    /// Picks a model for `function_id`. Preferences naming this function
    /// apply before general ones. Each stated supplier or domain narrows
    /// the candidates unless nothing would be left. Among the survivors the
    /// newest wins when recency was asked for, otherwise the default if it
    /// survived, otherwise the newest.
    pub fn select(
        &self,
        function_id: &str,
        preferences: &[ModelPreference],
    ) -> Option<&ModelEntry> {
        let all: Vec<&ModelEntry> = self
            .entries
            .iter()
            .filter(|e| e.function_id == function_id)
            .collect();
        if all.is_empty() {
            return None;
        }
        let applicable = preferences
            .iter()
            .filter(|p| p.function.as_deref() == Some(function_id))
            .chain(preferences.iter().filter(|p| p.function.is_none()));
        let mut pool = all.clone();
        let mut latest = false;
        for pref in applicable {
            latest |= pref.latest;
            if let Some(s) = &pref.supplier {
                narrow(&mut pool, |e| e.supplier.eq_ignore_ascii_case(s));
            }
            if let Some(d) = &pref.domain {
                narrow(&mut pool, |e| {
                    e.domains.iter().any(|x| x.eq_ignore_ascii_case(d))
                });
            }
        }
        let newest = || {
            pool.iter()
                .copied()
                .max_by(|a, b| a.version.cmp(&b.version).then(b.model_id.cmp(&a.model_id)))
        };
        if latest {
            return newest();
        }
        pool.iter().copied().find(|e| e.is_default).or_else(newest)
    }
}

fn narrow(pool: &mut Vec<&ModelEntry>, keep: impl Fn(&ModelEntry) -> bool) {
    let kept: Vec<&ModelEntry> = pool.iter().copied().filter(|e| keep(e)).collect();
    if !kept.is_empty() {
        *pool = kept;
    }
}

/// A wish about which model to use.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPreference {
    /// Catalog function id, or `None` for every function.
    #[serde(default)]
    pub function: Option<String>,
    #[serde(default)]
    pub supplier: Option<String>,
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default)]
    pub latest: bool,
}

/// Reads model wishes out of the conversation. An unreadable reply means
/// no wishes.
pub fn extract_preferences(
    conversation: &str,
    gateway: &Gateway,
) -> Result<Vec<ModelPreference>, AgentError> {
    #[derive(Deserialize)]
    struct Reply {
        preferences: Vec<ModelPreference>,
    }
    let raw = gateway.ask(AgentRole::Utility, prompts::MATCHMAKER, conversation)?;
    Ok(match reply::json::<Reply>(&raw) {
        Ok(r) => r.preferences,
        Err(problem) => {
            tracing::warn!(%problem, "unreadable preference reply, using defaults");
            Vec::new()
        }
    })
}

/// A GenericLLM node whose prompt states `task` and quotes the part of
/// the request it serves. Only text to text is supported.
pub fn make_generic_node(
    id: &str,
    task: &str,
    query_fragment: &str,
    input: Modality,
    output: Modality,
) -> Result<Node, AgentError> {
    if task.trim().is_empty() {
        return Err(AgentError::EmptyTask);
    }
    if input != Modality::Text || output != Modality::Text {
        return Err(AgentError::UnsupportedFallback(format!(
            "{input} to {output}"
        )));
    }
    let prompt = prompts::fill(
        prompts::GENERIC_NODE,
        &[("task", task.trim()), ("fragment", query_fragment.trim())],
    );
    Ok(Node::generic_llm(id, prompt))
}

/// Binds a model to every Function node. Functions with no registered
/// model become GenericLLM nodes when they map one text to one text, and
/// are marked unresolved otherwise.
pub fn matchmaker_assign(
    pipeline: &Pipeline,
    conversation: &str,
    query_fragment: &str,
    registry: &ModelRegistry,
    gateway: &Gateway,
) -> Result<Pipeline, AgentError> {
    let mut out = pipeline.clone();
    if out.nodes_of_kind(NodeKind::Function).next().is_none() {
        return Ok(out);
    }
    let preferences = extract_preferences(conversation, gateway)?;
    let ids: Vec<String> = out
        .nodes_of_kind(NodeKind::Function)
        .map(|n| n.id.clone())
        .collect();
    for id in ids {
        let node = &out.nodes[&id];
        let function = node.function.clone().unwrap_or_default();
        if let Some(entry) = registry.select(&function, &preferences) {
            out.nodes.get_mut(&id).expect("node exists").binding =
                Some(Binding::Model(entry.model_id.clone()));
            continue;
        }
        let text_to_text = matches!(
            (node.inputs.as_slice(), node.outputs.as_slice()),
            ([i], [o]) if i.modality == Modality::Text && o.modality == Modality::Text
        );
        let task = format!("Perform {} on the input text.", function.replace('_', " "));
        match text_to_text
            .then(|| make_generic_node(&id, &task, query_fragment, Modality::Text, Modality::Text))
            .transpose()?
        {
            Some(generic) => replace_node(&mut out, generic),
            None => {
                out.nodes.get_mut(&id).expect("node exists").binding = Some(Binding::Unresolved(
                    format!("no model registered for `{function}`"),
                ))
            }
        }
    }
    Ok(out)
}

/// Swaps a single-port node for `node`, rewiring its edges to the new
/// node's only ports.
fn replace_node(p: &mut Pipeline, node: Node) {
    let (input, output) = (node.inputs[0].name.clone(), node.outputs[0].name.clone());
    let id = node.id.clone();
    let edges: Vec<Edge> = p.edges.iter().cloned().collect();
    p.edges = edges
        .into_iter()
        .map(|mut e| {
            if e.target.node == id {
                e.target = Endpoint::new(&id, &input);
            }
            if e.source.node == id {
                e.source = Endpoint::new(&id, &output);
            }
            e
        })
        .collect();
    p.nodes.insert(id, node);
}
