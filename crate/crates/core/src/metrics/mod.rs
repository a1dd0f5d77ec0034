//! Pipeline comparison: exact match and graph edit distance.
//!
//! Both measures share one notion of node equivalence ([`node_match`]):
//! kinds must agree, Function nodes must name the same function with the
//! same parameters, GenericLLM prompts must be close under an embedding,
//! and Script bodies must be judged equivalent by a [`CodeJudge`]. Edges
//! match when their mapped endpoints and port names coincide.
//!
//! Only edges whose two endpoint nodes exist take part in the comparison.

mod ged;
mod report;
mod vf2;

pub use ged::{ged, ged_with, EditEntity, EditKind, EditOp, GedResult, SubstitutionCause};
pub use report::{
    error_breakdown, evaluate_dataset, evaluate_pair, AggregateRow, ErrorHistogram,
    EvaluationError, EvaluationReport, HistogramBucket, PairRecord,
};
pub use vf2::{exact_match, exact_match_with, MatchOutcome};

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use pipewright_gateway::{cosine_similarity, AgentRole, Gateway, HashEmbedder};
use thiserror::Error;

use crate::ir::{Edge, Node, NodeKind, Pipeline, CONDITION_PARAM};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    /// Minimum cosine similarity for two GenericLLM prompts to match.
    pub prompt_similarity_threshold: f64,
    /// Cost of every insertion, deletion and substitution.
    pub edit_cost: f64,
    /// Wall-clock limit for one edit-distance search.
    pub time_budget: Duration,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            prompt_similarity_threshold: 0.5,
            edit_cost: 1.0,
            time_budget: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("prompt similarity threshold must be in [0, 1], got {0}")]
    Threshold(f64),
    #[error("edit cost must be positive, got {0}")]
    EditCost(f64),
    #[error("time budget must be positive")]
    TimeBudget,
}

impl MatchConfig {
    pub fn with_time_budget(mut self, budget: Duration) -> Self {
        self.time_budget = budget;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.prompt_similarity_threshold) {
            return Err(ConfigError::Threshold(self.prompt_similarity_threshold));
        }
        if !(self.edit_cost > 0.0 && self.edit_cost.is_finite()) {
            return Err(ConfigError::EditCost(self.edit_cost));
        }
        if self.time_budget.is_zero() {
            return Err(ConfigError::TimeBudget);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HookError {
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("code comparison failed: {0}")]
    Judge(String),
}

/// Sentence embedding used to compare GenericLLM prompts.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f32>, HookError>;
}

/// Decides whether two script bodies perform the same task.
pub trait CodeJudge: Send + Sync {
    fn same_task(&self, a: &str, b: &str) -> Result<bool, HookError>;
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, HookError> {
        Ok(HashEmbedder::embed(self, text))
    }
}

impl Embedder for Gateway {
    fn embed(&self, text: &str) -> Result<Vec<f32>, HookError> {
        Gateway::embed(self, text).map_err(|e| HookError::Embedding(e.to_string()))
    }
}

/// Treats scripts as equivalent when they are identical up to whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizedCodeJudge;

impl CodeJudge for NormalizedCodeJudge {
    fn same_task(&self, a: &str, b: &str) -> Result<bool, HookError> {
        let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        Ok(norm(a) == norm(b))
    }
}

const JUDGE_PROMPT: &str = "You compare two short Python scripts. Reply with exactly `yes` if \
they perform the same task on the same inputs and outputs, otherwise reply with exactly `no`.";

/// Asks the utility model whether two scripts do the same thing.
#[derive(Debug, Clone)]
pub struct LlmCodeJudge {
    gateway: Gateway,
}

impl LlmCodeJudge {
    pub fn new(gateway: Gateway) -> Self {
        Self { gateway }
    }
}

impl CodeJudge for LlmCodeJudge {
    fn same_task(&self, a: &str, b: &str) -> Result<bool, HookError> {
        let user = format!("Script A:\n```python\n{a}\n```\n\nScript B:\n```python\n{b}\n```");
        let reply = self
            .gateway
            .ask(AgentRole::Utility, JUDGE_PROMPT, &user)
            .map_err(|e| HookError::Judge(e.to_string()))?;
        match reply
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase()
            .as_str()
        {
            "yes" => Ok(true),
            "no" => Ok(false),
            _ => Err(HookError::Judge(format!("unexpected verdict `{reply}`"))),
        }
    }
}

/// The embedding and code-equivalence hooks used by node matching.
#[derive(Clone, Copy)]
pub struct Hooks<'a> {
    pub embedder: &'a dyn Embedder,
    pub judge: &'a dyn CodeJudge,
}

impl Hooks<'static> {
    /// Token-hash embeddings and whitespace-normalised code comparison;
    /// deterministic and offline.
    pub fn offline() -> Self {
        Hooks {
            embedder: &HashEmbedder,
            judge: &NormalizedCodeJudge,
        }
    }
}

impl std::fmt::Debug for Hooks<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hooks").finish_non_exhaustive()
    }
}

/// Coarse node label. Two nodes can only match when their signatures are
/// equal, so signatures are used to prune candidate pairs and to bound
/// edit costs from below.
pub(crate) fn signature(n: &Node) -> String {
    let modalities = |ports: &[crate::ir::Port]| {
        let mut m: Vec<&str> = ports.iter().map(|p| p.modality.as_str()).collect();
        m.sort_unstable();
        m.join(",")
    };
    match n.kind {
        NodeKind::Function => {
            let params: Vec<String> = n.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!(
                "function:{}:{}",
                n.function.as_deref().unwrap_or_default().to_lowercase(),
                params.join("&")
            )
        }
        NodeKind::Input => format!("input:{}", modalities(&n.outputs)),
        NodeKind::Output => format!("output:{}", modalities(&n.inputs)),
        NodeKind::Router => format!("router:{}", modalities(&n.outputs)),
        NodeKind::Decision => format!(
            "decision:{}",
            n.params
                .get(CONDITION_PARAM)
                .map(String::as_str)
                .unwrap_or_default()
        ),
        NodeKind::Script => "script".to_string(),
        NodeKind::GenericLlm => "generic_llm".to_string(),
    }
}

/// Whether `a` may stand for `b`.
///
/// Kinds must be equal. Function nodes also need the same function and
/// parameters; Input and Output nodes the same port modality; Routers the
/// same output modalities; Decisions the same routing condition. GenericLLM
/// prompts match when their embedding similarity reaches the configured
/// threshold, and Script nodes when the judge accepts their bodies.
pub fn node_match(
    a: &Node,
    b: &Node,
    cfg: &MatchConfig,
    hooks: Hooks<'_>,
) -> Result<bool, HookError> {
    if signature(a) != signature(b) {
        return Ok(false);
    }
    let pa = a.payload.as_deref().unwrap_or_default();
    let pb = b.payload.as_deref().unwrap_or_default();
    match a.kind {
        NodeKind::GenericLlm => {
            let sim = cosine_similarity(&hooks.embedder.embed(pa)?, &hooks.embedder.embed(pb)?);
            Ok(f64::from(sim) >= cfg.prompt_similarity_threshold)
        }
        NodeKind::Script => hooks.judge.same_task(pa, pb),
        _ => Ok(true),
    }
}

/// Whether edge `a` of one pipeline corresponds to edge `b` of the other
/// under `mapping`, which sends node ids of the first pipeline to node ids
/// of the second.
pub fn edge_match(a: &Edge, b: &Edge, mapping: &BTreeMap<String, String>) -> bool {
    let mapped = |id: &str| mapping.get(id).map(String::as_str);
    mapped(&a.source.node) == Some(b.source.node.as_str())
        && mapped(&a.target.node) == Some(b.target.node.as_str())
        && a.source.port == b.source.port
        && a.target.port == b.target.port
}

/// Nodes of a pipeline in a fixed order, with edges re-expressed as index
/// pairs carrying their port names.
#[derive(Debug)]
pub(crate) struct Indexed<'a> {
    pub nodes: Vec<&'a Node>,
    /// `(source, target, source_port, target_port)`
    pub edges: Vec<(usize, usize, &'a str, &'a str)>,
}

impl<'a> Indexed<'a> {
    pub fn new(p: &'a Pipeline) -> Self {
        let nodes: Vec<&Node> = p.nodes.values().collect();
        let index: HashMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let edges = p
            .edges
            .iter()
            .filter_map(|e| {
                Some((
                    *index.get(e.source.node.as_str())?,
                    *index.get(e.target.node.as_str())?,
                    e.source.port.as_str(),
                    e.target.port.as_str(),
                ))
            })
            .collect();
        Self { nodes, edges }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// `compat[i][j]`: node `i` of the first pipeline matches node `j` of the
/// second. Hooks are called at most once per pair, and embeddings once per
/// distinct prompt.
pub(crate) fn compatibility(
    a: &Indexed<'_>,
    b: &Indexed<'_>,
    cfg: &MatchConfig,
    hooks: Hooks<'_>,
) -> Result<Vec<Vec<bool>>, HookError> {
    let cache = EmbeddingCache::new(hooks.embedder);
    let cached = Hooks {
        embedder: &cache,
        judge: hooks.judge,
    };
    let sig_b: Vec<String> = b.nodes.iter().map(|n| signature(n)).collect();
    a.nodes
        .iter()
        .map(|na| {
            let sa = signature(na);
            b.nodes
                .iter()
                .zip(&sig_b)
                .map(|(nb, sb)| {
                    if &sa != sb {
                        Ok(false)
                    } else {
                        node_match(na, nb, cfg, cached)
                    }
                })
                .collect()
        })
        .collect()
}

struct EmbeddingCache<'a> {
    inner: &'a dyn Embedder,
    seen: std::sync::Mutex<HashMap<String, Vec<f32>>>,
}

impl<'a> EmbeddingCache<'a> {
    fn new(inner: &'a dyn Embedder) -> Self {
        Self {
            inner,
            seen: Default::default(),
        }
    }
}

impl Embedder for EmbeddingCache<'_> {
    fn embed(&self, text: &str) -> Result<Vec<f32>, HookError> {
        if let Some(v) = self.seen.lock().expect("cache lock").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.seen
            .lock()
            .expect("cache lock")
            .insert(text.to_string(), v.clone());
        Ok(v)
    }
}
