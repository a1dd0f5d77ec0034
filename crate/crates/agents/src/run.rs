use pipewright_core::ir::FunctionCatalog;
use pipewright_gateway::Gateway;

use crate::builder::{builder_build, builder_repair, BuildRequest};
use crate::inspector::{inspector_semantics, inspector_syntax};
use crate::matchmaker::{matchmaker_assign, ModelRegistry};
use crate::session::{AgentEvent, Draft, FinalPipeline, Session, Status};
use crate::{attachments, extractor, AgentConfig, AgentError};

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    pub result: FinalPipeline,
    pub iterations: usize,
    /// The result has no syntax or semantic issues.
    pub clean: bool,
}

/// Builds, inspects and repairs until a draft has no issues or
/// `max_iterations` builder calls were made. At the cap the draft with the
/// fewest issues wins, the latest among equals, and is marked degraded.
///
/// The semantic inspector only sees drafts that are syntactically clean.
/// Errors fail the session; drafts recorded so far stay in it.
pub fn run_loop(
    session: &mut Session,
    request: &BuildRequest<'_>,
    gateway: &Gateway,
    config: &AgentConfig,
) -> Result<LoopOutcome, AgentError> {
    let result = build_and_inspect(session, request, gateway, config);
    if let Err(e) = &result {
        session.fail(e.to_string());
    }
    result
}

fn build_and_inspect(
    session: &mut Session,
    request: &BuildRequest<'_>,
    gateway: &Gateway,
    config: &AgentConfig,
) -> Result<LoopOutcome, AgentError> {
    let mut drafts: Vec<Draft> = Vec::new();
    for iteration in 1..=config.max_iterations {
        session.set_status(Status::Building);
        let built = match drafts.last() {
            None => builder_build(request, gateway)?,
            Some(prev) => builder_repair(request, &prev.pipeline, &issue_lines(prev), gateway)?,
        };
        session.set_status(Status::Inspecting);
        let syntax = inspector_syntax(&built, request.catalog);
        let semantic_issues = if syntax.report.is_valid {
            inspector_semantics(&syntax.pipeline, request.specification, gateway)?
        } else {
            Vec::new()
        };
        let draft = Draft {
            iteration,
            pipeline: syntax.pipeline,
            report: syntax.report,
            fixes: syntax.fixes,
            semantic_issues,
        };
        session.record(AgentEvent::Draft {
            draft: draft.clone(),
        });
        let clean = draft.issue_count() == 0;
        drafts.push(draft);
        if clean {
            let last = drafts.pop().expect("just pushed");
            return Ok(finish(session, last, iteration, false));
        }
    }
    let best = drafts
        .iter()
        .enumerate()
        .min_by_key(|(i, d)| (d.issue_count(), std::cmp::Reverse(*i)))
        .map(|(i, _)| i)
        .ok_or(AgentError::Malformed {
            stage: "builder",
            message: "max_iterations is zero".into(),
        })?;
    let iterations = drafts.len();
    let best = drafts.swap_remove(best);
    Ok(finish(session, best, iterations, true))
}

fn finish(session: &mut Session, draft: Draft, iterations: usize, degraded: bool) -> LoopOutcome {
    let clean = draft.issue_count() == 0;
    let result = FinalPipeline {
        pipeline: draft.pipeline,
        degraded,
    };
    session.record(AgentEvent::Final {
        result: result.clone(),
    });
    LoopOutcome {
        result,
        iterations,
        clean,
    }
}

fn issue_lines(draft: &Draft) -> Vec<String> {
    draft
        .report
        .issues
        .iter()
        .map(ToString::to_string)
        .chain(draft.semantic_issues.iter().map(ToString::to_string))
        .collect()
}

/// Everything after the user confirmed the refined query: specification,
/// attachments, the build loop and model matching.
///
/// A degraded result that still fails validation is kept in the session,
/// which then ends as failed; model matching only runs on valid pipelines.
pub fn run_after_confirm(
    session: &mut Session,
    gateway: &Gateway,
    catalog: &FunctionCatalog,
    registry: &ModelRegistry,
    config: &AgentConfig,
) -> Result<LoopOutcome, AgentError> {
    if session.status != Status::Clarifying || !session.confirmed {
        return Err(AgentError::InvalidState {
            expected: Status::Clarifying,
            actual: session.status,
        });
    }
    let query = session
        .refined_query
        .clone()
        .ok_or(AgentError::NothingToConfirm)?;
    session.set_status(Status::Building);

    let prepared = (|| {
        let specification = extractor::extract_specification(&query, gateway)?;
        session.record(AgentEvent::SpecificationExtracted {
            specification: specification.clone(),
        });
        if !session.attachments.is_empty() {
            let m = attachments::match_attachments(session, &specification, gateway)?;
            session.record(AgentEvent::AttachmentsMatched {
                assignments: m.assignments,
                flagged: m.flagged,
            });
        }
        Ok::<_, AgentError>(specification)
    })();
    let specification = match prepared {
        Ok(s) => s,
        Err(e) => {
            session.fail(e.to_string());
            return Err(e);
        }
    };

    let attached: Vec<String> = {
        let mut v: Vec<String> = session.attachment_inputs.values().cloned().collect();
        v.sort();
        v.dedup();
        v
    };
    let request = BuildRequest {
        refined_query: &query,
        specification: &specification,
        catalog,
        attached_inputs: &attached,
    };
    let mut outcome = run_loop(session, &request, gateway, config)?;
    let syntax_clean = session
        .drafts
        .iter()
        .rev()
        .find(|d| d.pipeline == outcome.result.pipeline)
        .is_some_and(|d| d.report.is_valid);
    if !syntax_clean {
        session.fail("iteration limit reached with validation issues left");
        return Ok(outcome);
    }

    session.set_status(Status::Matching);
    let conversation = session.transcript_text();
    match matchmaker_assign(
        &outcome.result.pipeline,
        &conversation,
        &query,
        registry,
        gateway,
    ) {
        Ok(matched) => {
            session.record(AgentEvent::Matched {
                pipeline: matched.clone(),
            });
            outcome.result.pipeline = matched;
        }
        Err(e) => {
            session.fail(e.to_string());
            return Err(e);
        }
    }
    session.set_status(Status::Done);
    Ok(outcome)
}
