use pipewright_gateway::{AgentRole, Gateway, Message, Role};

use crate::prompts;
use crate::session::{AgentEvent, Attachment, Session, Speaker, Status};
use crate::{AgentConfig, AgentError};

const REFINED_MARKER: &str = "REFINED QUERY:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentalistReply {
    /// What is shown to the user: a question, or the refined query.
    pub reply: String,
    pub refined_query: Option<String>,
}

/// One clarification turn: records the user's message, asks the clarifier
/// and records its reply.
pub fn mentalist_turn(
    session: &mut Session,
    user_message: &str,
    attachments: Vec<Attachment>,
    gateway: &Gateway,
    config: &AgentConfig,
) -> Result<MentalistReply, AgentError> {
    if session.status != Status::Clarifying || session.confirmed {
        return Err(AgentError::InvalidState {
            expected: Status::Clarifying,
            actual: session.status,
        });
    }
    session.record(AgentEvent::UserMessage {
        text: user_message.to_string(),
        attachments,
    });

    let raw = gateway
        .chat(AgentRole::Clarifier, conversation(session))?
        .content;
    let parsed = parse_reply(&raw);
    session.record(AgentEvent::AssistantMessage {
        text: parsed.reply.clone(),
    });
    if let Some(q) = &parsed.refined_query {
        session.record(AgentEvent::RefinedQuery { text: q.clone() });
        return Ok(parsed);
    }

    let user_turns = session
        .messages
        .iter()
        .filter(|t| t.speaker == Speaker::User)
        .count();
    if user_turns >= config.question_budget {
        session.fail(format!("no refined query after {user_turns} user turns"));
        return Err(AgentError::TurnLimit(user_turns));
    }
    Ok(parsed)
}

/// Accepts the latest refined query. Building starts only after this.
pub fn confirm(session: &mut Session) -> Result<(), AgentError> {
    if session.status != Status::Clarifying {
        return Err(AgentError::InvalidState {
            expected: Status::Clarifying,
            actual: session.status,
        });
    }
    if session.confirmed {
        return Err(AgentError::AlreadyConfirmed);
    }
    if session.refined_query.is_none() {
        return Err(AgentError::NothingToConfirm);
    }
    session.record(AgentEvent::Confirmed);
    Ok(())
}

fn conversation(session: &Session) -> Vec<Message> {
    let mut messages = vec![Message::system(prompts::CLARIFIER)];
    for (i, turn) in session.messages.iter().enumerate() {
        let mut text = turn.text.clone();
        for a in session.attachments.iter().filter(|a| a.message_index == i) {
            text.push_str(&format!("\n[attached {} file]", a.modality));
        }
        let role = match turn.speaker {
            Speaker::User => Role::User,
            Speaker::Assistant => Role::Assistant,
        };
        // a failed turn can leave two user messages in a row
        match messages.last_mut() {
            Some(last) if last.role == role => {
                last.content.push_str("\n\n");
                last.content.push_str(&text);
            }
            _ => messages.push(Message {
                role,
                content: text,
            }),
        }
    }
    messages
}

fn parse_reply(raw: &str) -> MentalistReply {
    let raw = raw.trim();
    let Some(pos) = raw.find(REFINED_MARKER) else {
        return MentalistReply {
            reply: raw.to_string(),
            refined_query: None,
        };
    };
    let refined = raw[pos + REFINED_MARKER.len()..].trim();
    if refined.is_empty() {
        return MentalistReply {
            reply: raw.to_string(),
            refined_query: None,
        };
    }
    MentalistReply {
        reply: refined.to_string(),
        refined_query: Some(refined.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_is_found_anywhere() {
        let r = parse_reply("Thanks.\nREFINED QUERY:\nTranslate English text to German.");
        assert_eq!(
            r.refined_query.as_deref(),
            Some("Translate English text to German.")
        );
        let r = parse_reply("Which languages?");
        assert_eq!(r.refined_query, None);
        assert_eq!(r.reply, "Which languages?");
        assert_eq!(parse_reply("REFINED QUERY:   ").refined_query, None);
    }
}
