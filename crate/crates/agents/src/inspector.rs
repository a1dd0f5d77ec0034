use pipewright_core::ir::{
    extract_branches, Branch, FunctionCatalog, NodeKind, Pipeline, Specification,
};
use pipewright_core::validator::{apply_mechanical_fixes, validate, AppliedFix, ValidationReport};
use pipewright_gateway::{AgentRole, Gateway};
use serde::{Deserialize, Serialize};

use crate::{prompts, reply, AgentError};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxInspection {
    /// The draft after mechanical fixes.
    pub pipeline: Pipeline,
    pub fixes: Vec<AppliedFix>,
    /// Issues that remain after fixing.
    pub report: ValidationReport,
}

/// Validates, applies mechanical fixes and reports what is left.
pub fn inspector_syntax(draft: &Pipeline, catalog: &FunctionCatalog) -> SyntaxInspection {
    let report = validate(draft, catalog);
    if !report.has_mechanical() {
        return SyntaxInspection {
            pipeline: draft.clone(),
            fixes: Vec::new(),
            report,
        };
    }
    let outcome = apply_mechanical_fixes(draft, &report, catalog);
    SyntaxInspection {
        pipeline: outcome.pipeline,
        fixes: outcome.applied,
        report: outcome.report,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticIssue {
    /// Output node id of the branch.
    pub branch: String,
    pub description: String,
}

impl std::fmt::Display for SemanticIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "branch ending in `{}`: {}",
            self.branch, self.description
        )
    }
}

/// The nodes of one branch as a numbered list, each with its parameters
/// and the nodes feeding it.
pub fn branch_summary(p: &Pipeline, branch: &Branch) -> String {
    let mut out = String::new();
    if !branch.comment.is_empty() {
        out.push_str(&format!("Branch intent: {}\n", branch.comment));
    }
    for (i, id) in branch.nodes.iter().enumerate() {
        let node = &p.nodes[id];
        let what = match node.kind {
            NodeKind::Input => format!(
                "input ({})",
                node.outputs.first().map_or("?", |p| p.modality.as_str())
            ),
            NodeKind::Output => format!(
                "output ({})",
                node.inputs.first().map_or("?", |p| p.modality.as_str())
            ),
            NodeKind::Function => format!("function {}", node.function.as_deref().unwrap_or("?")),
            other => other.as_str().to_string(),
        };
        out.push_str(&format!("{}. {id}: {what}", i + 1));
        if !node.params.is_empty() {
            let params: Vec<String> = node
                .params
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            out.push_str(&format!(" [{}]", params.join(", ")));
        }
        let feeds: Vec<String> = p
            .edges
            .iter()
            .filter(|e| &e.target.node == id)
            .map(|e| format!("{} from {}", e.target.port, e.source))
            .collect();
        if !feeds.is_empty() {
            out.push_str(&format!("; {}", feeds.join(", ")));
        }
        out.push('\n');
    }
    out
}

#[derive(Deserialize)]
struct Verdict {
    issues: Vec<String>,
}

/// Asks the inspector about each branch. Replies that are neither `OK`
/// nor an issue list count as no issues.
pub fn inspector_semantics(
    p: &Pipeline,
    spec: &Specification,
    gateway: &Gateway,
) -> Result<Vec<SemanticIssue>, AgentError> {
    let mut issues = Vec::new();
    for branch in extract_branches(p).branches {
        let user = format!(
            "Specification:\n{}\n\nBranch ending in `{}`:\n{}",
            spec.render(),
            branch.output,
            branch_summary(p, &branch)
        );
        let raw = gateway.ask(AgentRole::Inspector, prompts::SEMANTIC_INSPECTOR, &user)?;
        let trimmed = raw.trim().trim_matches('`').trim();
        if trimmed
            .get(..2)
            .is_some_and(|s| s.eq_ignore_ascii_case("ok"))
        {
            continue;
        }
        match reply::json::<Verdict>(&raw) {
            Ok(v) => issues.extend(v.issues.into_iter().map(|description| SemanticIssue {
                branch: branch.output.clone(),
                description,
            })),
            Err(problem) => {
                tracing::warn!(branch = %branch.output, %problem, "unreadable inspector verdict, treating as no issues")
            }
        }
    }
    Ok(issues)
}
