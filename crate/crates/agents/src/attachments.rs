use std::collections::{BTreeMap, BTreeSet};

use pipewright_core::ir::{SpecRow, Specification};
use pipewright_gateway::{AgentRole, Gateway};
use serde::{Deserialize, Serialize};

use crate::session::{Session, Speaker};
use crate::{prompts, reply, AgentError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentMatch {
    /// attachment file name → input row name
    pub assignments: BTreeMap<String, String>,
    /// Attachments left for the user to assign.
    pub flagged: Vec<String>,
}

/// Assigns each attachment of `session` to an input row.
///
/// When every attachment has exactly one input of its modality, and no two
/// of them compete for the same input, the assignment is made directly.
/// Otherwise the model is asked, seeing the conversation with the
/// attachments marked by modality only. Answers that name no input, an
/// input of another modality, or an input already taken are flagged.
pub fn match_attachments(
    session: &Session,
    spec: &Specification,
    gateway: &Gateway,
) -> Result<AttachmentMatch, AgentError> {
    let mut out = AttachmentMatch::default();
    if session.attachments.is_empty() {
        return Ok(out);
    }
    let inputs: Vec<&SpecRow> = spec.inputs().collect();
    let candidates: Vec<Vec<&SpecRow>> = session
        .attachments
        .iter()
        .map(|a| {
            inputs
                .iter()
                .copied()
                .filter(|r| r.modality == a.modality)
                .collect()
        })
        .collect();

    let direct: Option<Vec<&str>> = candidates
        .iter()
        .map(|c| (c.len() == 1).then(|| c[0].name.as_str()))
        .collect();
    if let Some(direct) = direct {
        let distinct: BTreeSet<&str> = direct.iter().copied().collect();
        if distinct.len() == direct.len() {
            for (a, name) in session.attachments.iter().zip(direct) {
                out.assignments
                    .insert(a.file_name.clone(), name.to_string());
            }
            return Ok(out);
        }
    }

    let raw = gateway.ask(
        AgentRole::Clarifier,
        prompts::ATTACHMENTS,
        &render_request(session, &inputs),
    )?;
    let answers: BTreeMap<String, Option<String>> = match reply::json(&raw) {
        Ok(a) => a,
        Err(problem) => {
            tracing::warn!(%problem, "attachment reply unusable, flagging all attachments");
            BTreeMap::new()
        }
    };
    let mut taken = BTreeSet::new();
    for (i, (a, cands)) in session.attachments.iter().zip(&candidates).enumerate() {
        let chosen = answers
            .get(&label(i))
            .cloned()
            .flatten()
            .filter(|name| cands.iter().any(|r| &r.name == name))
            .filter(|name| !taken.contains(name));
        match chosen {
            Some(name) => {
                taken.insert(name.clone());
                out.assignments.insert(a.file_name.clone(), name);
            }
            None => out.flagged.push(a.file_name.clone()),
        }
    }
    Ok(out)
}

fn label(i: usize) -> String {
    format!("attachment {}", i + 1)
}

fn render_request(session: &Session, inputs: &[&SpecRow]) -> String {
    let mut text = String::from("Conversation:\n");
    let mut n = 0;
    for (i, turn) in session.messages.iter().enumerate() {
        let who = match turn.speaker {
            Speaker::User => "User",
            Speaker::Assistant => "Assistant",
        };
        text.push_str(&format!("{who}: {}\n", turn.text));
        for a in session.attachments.iter().filter(|a| a.message_index == i) {
            text.push_str(&format!("[{}: {} file]\n", label(n), a.modality));
            n += 1;
        }
    }
    text.push_str("\nInputs:\n");
    for r in inputs {
        text.push_str(&format!("- {} ({})\n", r.name, r.modality));
    }
    text
}
