use std::collections::BTreeSet;

use pipewright_core::ir::json::{pipeline_from_value, serialize_pipeline_json};
use pipewright_core::ir::{FunctionCatalog, Pipeline, SpecRow, Specification, BRANCH_COMMENTS_KEY};
use pipewright_gateway::{AgentRole, Gateway, Message};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::{prompts, reply, AgentError};

/// Everything the builder sees. Attachment file names are never part of it.
#[derive(Debug, Clone, Copy)]
pub struct BuildRequest<'a> {
    pub refined_query: &'a str,
    pub specification: &'a Specification,
    pub catalog: &'a FunctionCatalog,
    /// Input rows the user attached files for.
    pub attached_inputs: &'a [String],
}

impl BuildRequest<'_> {
    fn context(&self) -> String {
        let mut text = format!(
            "Request:\n{}\n\nSpecification:\n{}\n",
            self.refined_query,
            self.specification.render()
        );
        if !self.attached_inputs.is_empty() {
            text.push_str(&format!(
                "\nThe user attached files for: {}\n",
                self.attached_inputs.join(", ")
            ));
        }
        text
    }
}

#[derive(Debug, Deserialize)]
struct BranchReply {
    #[serde(default)]
    comment: String,
    #[serde(default)]
    nodes: Vec<Value>,
    #[serde(default)]
    edges: Vec<Value>,
}

/// Accumulated branches, kept as raw documents until the whole pipeline
/// parses.
#[derive(Debug, Default)]
struct Partial {
    nodes: Vec<Value>,
    ids: BTreeSet<String>,
    edges: Vec<Value>,
    comments: Map<String, Value>,
}

impl Partial {
    fn doc(&self) -> Value {
        json!({
            "nodes": self.nodes,
            "edges": self.edges,
            "metadata": { BRANCH_COMMENTS_KEY: self.comments },
        })
    }

    /// Adds a branch and checks that the result still parses. Nodes whose
    /// id already exists are references to earlier branches and are not
    /// redefined.
    fn merged(
        &self,
        branch: &BranchReply,
        row: &SpecRow,
        catalog: &FunctionCatalog,
    ) -> Result<Partial, String> {
        let mut next = Partial {
            nodes: self.nodes.clone(),
            ids: self.ids.clone(),
            edges: self.edges.clone(),
            comments: self.comments.clone(),
        };
        let mut outputs = Vec::new();
        for node in &branch.nodes {
            let id = node
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| "a node has no string `id`".to_string())?;
            if node.get("kind").and_then(Value::as_str) == Some("output") {
                outputs.push(id.to_string());
            }
            if next.ids.insert(id.to_string()) {
                next.nodes.push(node.clone());
            } else {
                tracing::debug!(id, "branch redefines an existing node; keeping the first");
            }
        }
        next.edges.extend(branch.edges.iter().cloned());
        let key = match outputs.as_slice() {
            [one] => one.clone(),
            _ => row.name.clone(),
        };
        next.comments
            .insert(key, Value::String(branch.comment.clone()));
        pipeline_from_value(next.doc(), catalog).map_err(|e| e.to_string())?;
        Ok(next)
    }
}

/// Builds a pipeline one branch per output row, each branch from its own
/// call that sees the nodes defined so far.
pub fn builder_build(
    request: &BuildRequest<'_>,
    gateway: &Gateway,
) -> Result<Pipeline, AgentError> {
    let system = prompts::builder_system(request.catalog);
    let outputs: Vec<&SpecRow> = request.specification.outputs().collect();
    let mut partial = Partial::default();
    for (i, row) in outputs.iter().enumerate() {
        let existing = if partial.nodes.is_empty() {
            "none".to_string()
        } else {
            serde_json::to_string_pretty(&partial.doc()).expect("json value serializes")
        };
        let user = format!(
            "{}\nBranch {} of {}: the output {row}.\n\nPipeline so far:\n{existing}\n",
            request.context(),
            i + 1,
            outputs.len(),
        );
        let mut messages = vec![Message::system(system.clone()), Message::user(user)];
        let first = gateway.chat(AgentRole::Builder, messages.clone())?.content;
        partial = match parse_branch(&first, &partial, row, request.catalog) {
            Ok(next) => next,
            Err(problem) => {
                tracing::debug!(branch = i + 1, %problem, "re-asking builder");
                messages.push(Message::assistant(first));
                messages.push(Message::user(format!(
                    "That branch could not be used: {problem}. Reply again with JSON only."
                )));
                let second = gateway.chat(AgentRole::Builder, messages)?.content;
                parse_branch(&second, &partial, row, request.catalog).map_err(|message| {
                    AgentError::Malformed {
                        stage: "builder",
                        message: format!("branch {}: {message}", i + 1),
                    }
                })?
            }
        };
    }
    pipeline_from_value(partial.doc(), request.catalog).map_err(|e| AgentError::Malformed {
        stage: "builder",
        message: e.to_string(),
    })
}

fn parse_branch(
    reply: &str,
    partial: &Partial,
    row: &SpecRow,
    catalog: &FunctionCatalog,
) -> Result<Partial, String> {
    let branch: BranchReply = reply::json(reply)?;
    partial.merged(&branch, row, catalog)
}

/// Asks for a corrected version of `draft` in a single call.
pub fn builder_repair(
    request: &BuildRequest<'_>,
    draft: &Pipeline,
    issues: &[String],
    gateway: &Gateway,
) -> Result<Pipeline, AgentError> {
    let system = prompts::fill(
        prompts::BUILDER_REPAIR,
        &[("rules", &prompts::graph_rules(request.catalog))],
    );
    let issues: String = issues.iter().map(|i| format!("- {i}\n")).collect();
    let user = format!(
        "{}\nCurrent pipeline:\n{}\nProblems found:\n{issues}",
        request.context(),
        serialize_pipeline_json(draft)
    );
    let mut messages = vec![Message::system(system), Message::user(user)];
    let first = gateway.chat(AgentRole::Builder, messages.clone())?.content;
    let problem = match parse_full(&first, draft, request.catalog) {
        Ok(p) => return Ok(p),
        Err(p) => p,
    };
    tracing::debug!(%problem, "re-asking builder for repair");
    messages.push(Message::assistant(first));
    messages.push(Message::user(format!(
        "That pipeline could not be used: {problem}. Reply again with JSON only."
    )));
    let second = gateway.chat(AgentRole::Builder, messages)?.content;
    parse_full(&second, draft, request.catalog).map_err(|message| AgentError::Malformed {
        stage: "builder",
        message,
    })
}

fn parse_full(
    reply: &str,
    previous: &Pipeline,
    catalog: &FunctionCatalog,
) -> Result<Pipeline, String> {
    let value = reply::json_value(reply)?;
    let mut p = pipeline_from_value(value, catalog).map_err(|e| e.to_string())?;
    if p.metadata.is_empty() {
        p.metadata = previous.metadata.clone();
    }
    Ok(p)
}
