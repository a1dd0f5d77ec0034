use std::collections::BTreeMap;
use std::fmt;

use pipewright_core::ir::{Modality, Pipeline, Specification};
use pipewright_core::validator::{AppliedFix, ValidationReport};
use serde::{Deserialize, Serialize};

use crate::inspector::SemanticIssue;

/// Where a session is in the clarify → build → inspect → match flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Clarifying,
    Building,
    Inspecting,
    Matching,
    Done,
    Failed,
}

impl Status {
    /// Forward moves only, except that inspection may send a draft back to
    /// the builder. Any unfinished session may fail.
    pub fn can_move_to(self, next: Status) -> bool {
        use Status::*;
        match (self, next) {
            (Done | Failed, _) => false,
            (_, Failed) => true,
            (Inspecting, Building) => true,
            (a, b) => b > a,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Done | Status::Failed)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Clarifying => "clarifying",
            Status::Building => "building",
            Status::Inspecting => "inspecting",
            Status::Matching => "matching",
            Status::Done => "done",
            Status::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

/// A file the user attached. Only `modality` and the surrounding
/// conversation are ever shown to the builder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub file_name: String,
    pub modality: Modality,
    /// Content hash or other storage key.
    pub content_ref: String,
    /// Index into `Session::messages` of the message it came with.
    #[serde(default)]
    pub message_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub iteration: usize,
    /// The builder's output after mechanical fixes.
    pub pipeline: Pipeline,
    pub report: ValidationReport,
    #[serde(default)]
    pub fixes: Vec<AppliedFix>,
    #[serde(default)]
    pub semantic_issues: Vec<SemanticIssue>,
}

impl Draft {
    pub fn issue_count(&self) -> usize {
        self.report.issues.len() + self.semantic_issues.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPipeline {
    pub pipeline: Pipeline,
    /// The iteration cap was hit and this is the best draft seen.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentEvent {
    UserMessage {
        text: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        attachments: Vec<Attachment>,
    },
    AssistantMessage {
        text: String,
    },
    RefinedQuery {
        text: String,
    },
    Confirmed,
    StatusChanged {
        status: Status,
    },
    SpecificationExtracted {
        specification: Specification,
    },
    AttachmentsMatched {
        /// attachment file name → input row name
        assignments: BTreeMap<String, String>,
        flagged: Vec<String>,
    },
    Draft {
        draft: Draft,
    },
    Final {
        result: FinalPipeline,
    },
    Matched {
        pipeline: Pipeline,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub messages: Vec<Turn>,
    pub attachments: Vec<Attachment>,
    pub refined_query: Option<String>,
    pub confirmed: bool,
    pub specification: Option<Specification>,
    pub attachment_inputs: BTreeMap<String, String>,
    pub flagged_attachments: Vec<String>,
    pub drafts: Vec<Draft>,
    pub iteration_count: usize,
    pub status: Status,
    pub result: Option<FinalPipeline>,
    pub failure: Option<String>,
    /// Events recorded since the last [`Session::take_events`].
    #[serde(skip)]
    journal: Vec<AgentEvent>,
}

impl Session {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            messages: Vec::new(),
            attachments: Vec::new(),
            refined_query: None,
            confirmed: false,
            specification: None,
            attachment_inputs: BTreeMap::new(),
            flagged_attachments: Vec::new(),
            drafts: Vec::new(),
            iteration_count: 0,
            status: Status::Clarifying,
            result: None,
            failure: None,
            journal: Vec::new(),
        }
    }

    /// Rebuilds a session from its full event log.
    pub fn replay<'a>(
        id: impl Into<String>,
        events: impl IntoIterator<Item = &'a AgentEvent>,
    ) -> Self {
        let mut s = Session::new(id);
        for e in events {
            s.apply(e);
        }
        s
    }

    /// Applies `event` and queues it for [`Session::take_events`].
    pub fn record(&mut self, event: AgentEvent) {
        if let AgentEvent::StatusChanged { status } = &event {
            debug_assert!(
                self.status.can_move_to(*status),
                "{} -> {status}",
                self.status
            );
        }
        self.apply(&event);
        self.journal.push(event);
    }

    pub fn take_events(&mut self) -> Vec<AgentEvent> {
        std::mem::take(&mut self.journal)
    }

    pub(crate) fn set_status(&mut self, status: Status) {
        if self.status != status {
            self.record(AgentEvent::StatusChanged { status });
        }
    }

    pub(crate) fn fail(&mut self, reason: impl Into<String>) {
        self.record(AgentEvent::Failed {
            reason: reason.into(),
        });
    }

    fn apply(&mut self, event: &AgentEvent) {
        match event {
            AgentEvent::UserMessage { text, attachments } => {
                let index = self.messages.len();
                self.messages.push(Turn {
                    speaker: Speaker::User,
                    text: text.clone(),
                });
                self.attachments
                    .extend(attachments.iter().cloned().map(|mut a| {
                        a.message_index = index;
                        a
                    }));
            }
            AgentEvent::AssistantMessage { text } => self.messages.push(Turn {
                speaker: Speaker::Assistant,
                text: text.clone(),
            }),
            AgentEvent::RefinedQuery { text } => self.refined_query = Some(text.clone()),
            AgentEvent::Confirmed => self.confirmed = true,
            AgentEvent::StatusChanged { status } => self.status = *status,
            AgentEvent::SpecificationExtracted { specification } => {
                self.specification = Some(specification.clone())
            }
            AgentEvent::AttachmentsMatched {
                assignments,
                flagged,
            } => {
                self.attachment_inputs = assignments.clone();
                self.flagged_attachments = flagged.clone();
            }
            AgentEvent::Draft { draft } => {
                self.iteration_count = self.iteration_count.max(draft.iteration);
                self.drafts.push(draft.clone());
            }
            AgentEvent::Final { result } => self.result = Some(result.clone()),
            AgentEvent::Matched { pipeline } => {
                if let Some(r) = &mut self.result {
                    r.pipeline = pipeline.clone();
                }
            }
            AgentEvent::Failed { reason } => {
                self.status = Status::Failed;
                self.failure = Some(reason.clone());
            }
        }
    }

    /// The conversation as plain text, one `User:`/`Assistant:` line per
    /// turn, with attachments shown by modality only.
    pub fn transcript_text(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.messages.iter().enumerate() {
            let who = match t.speaker {
                Speaker::User => "User",
                Speaker::Assistant => "Assistant",
            };
            out.push_str(&format!("{who}: {}\n", t.text));
            for a in self.attachments.iter().filter(|a| a.message_index == i) {
                out.push_str(&format!("[attached {} file]\n", a.modality));
            }
        }
        out
    }
}
