use pipewright_core::ir::{Specification, SpecificationError};
use pipewright_gateway::{AgentRole, Gateway, Message};

use crate::{prompts, reply, AgentError};

/// Turns a confirmed refined query into specification rows. A reply that
/// does not parse or breaks the specification invariants is re-asked once
/// with the problem quoted.
pub fn extract_specification(
    refined_query: &str,
    gateway: &Gateway,
) -> Result<Specification, AgentError> {
    if refined_query.trim().is_empty() {
        return Err(AgentError::EmptyTask);
    }
    let mut messages = vec![
        Message::system(prompts::EXTRACTOR),
        Message::user(refined_query.to_string()),
    ];
    let first = gateway
        .chat(AgentRole::Clarifier, messages.clone())?
        .content;
    let problem = match parse(&first) {
        Ok(spec) => return Ok(spec),
        Err(p) => p,
    };
    tracing::debug!(%problem, "re-asking extractor");
    messages.push(Message::assistant(first));
    messages.push(Message::user(format!(
        "That reply could not be used: {}. Reply again with JSON only.",
        problem.message()
    )));
    let second = gateway.chat(AgentRole::Clarifier, messages)?.content;
    parse(&second).map_err(Problem::into_error)
}

#[derive(Debug)]
enum Problem {
    Shape(String),
    Invariant(SpecificationError),
}

impl Problem {
    fn message(&self) -> String {
        match self {
            Problem::Shape(m) => m.clone(),
            Problem::Invariant(e) => e.to_string(),
        }
    }

    fn into_error(self) -> AgentError {
        match self {
            Problem::Shape(message) => AgentError::Malformed {
                stage: "extractor",
                message,
            },
            Problem::Invariant(e) => AgentError::Specification(e),
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message())
    }
}

fn parse(reply: &str) -> Result<Specification, Problem> {
    let spec: Specification = reply::json(reply).map_err(Problem::Shape)?;
    spec.validate().map_err(Problem::Invariant)?;
    Ok(spec)
}
