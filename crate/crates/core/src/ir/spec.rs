use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Modality, NodeKind, Pipeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecRole {
    Input,
    Output,
}

/// One input or output of the requested solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecRow {
    pub role: SpecRole,
    pub name: String,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl SpecRow {
    pub fn new(role: SpecRole, name: impl Into<String>, modality: Modality) -> Self {
        Self {
            role,
            name: name.into(),
            modality,
            language: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = Some(language.into());
        self
    }
}

impl fmt::Display for SpecRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            SpecRole::Input => "input",
            SpecRole::Output => "output",
        };
        write!(f, "{role} \"{}\": {}", self.name, self.modality)?;
        if let Some(lang) = &self.language {
            write!(f, ", language {lang}")?;
        }
        for (k, v) in &self.extra {
            write!(f, ", {k} {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecificationError {
    #[error("specification has no input row")]
    NoInputs,
    #[error("specification has no output row")]
    NoOutputs,
    #[error("specification is malformed: {0}")]
    Malformed(String),
}

/// Structured inputs/outputs of a requested solution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specification {
    pub rows: Vec<SpecRow>,
}

impl Specification {
    pub fn new(rows: Vec<SpecRow>) -> Result<Self, SpecificationError> {
        let spec = Self { rows };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SpecificationError> {
        if self.inputs().next().is_none() {
            return Err(SpecificationError::NoInputs);
        }
        if self.outputs().next().is_none() {
            return Err(SpecificationError::NoOutputs);
        }
        Ok(())
    }

    pub fn inputs(&self) -> impl Iterator<Item = &SpecRow> {
        self.rows.iter().filter(|r| r.role == SpecRole::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &SpecRow> {
        self.rows.iter().filter(|r| r.role == SpecRole::Output)
    }

    /// Derives rows from a pipeline's Input and Output nodes, in id order.
    /// A node's `name` param becomes the row name (falling back to the id),
    /// `language` becomes the language and other params go to `extra`.
    pub fn from_pipeline(p: &Pipeline) -> Self {
        let rows = p
            .nodes
            .values()
            .filter_map(|n| {
                let (role, port) = match n.kind {
                    NodeKind::Input => (SpecRole::Input, n.outputs.first()?),
                    NodeKind::Output => (SpecRole::Output, n.inputs.first()?),
                    _ => return None,
                };
                let mut extra = n.params.clone();
                let name = extra.remove("name").unwrap_or_else(|| n.id.clone());
                let language = extra.remove("language");
                Some(SpecRow {
                    role,
                    name,
                    modality: port.modality,
                    language,
                    extra,
                })
            })
            .collect::<Vec<_>>();
        // inputs first, stable within a role
        let (mut inputs, outputs): (Vec<_>, Vec<_>) =
            rows.into_iter().partition(|r| r.role == SpecRole::Input);
        inputs.extend(outputs);
        Self { rows: inputs }
    }

    /// One line per row, used inside prompts.
    pub fn render(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("- {r}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requires_both_roles() {
        assert_eq!(
            Specification::new(vec![SpecRow::new(SpecRole::Input, "a", Modality::Text)]),
            Err(SpecificationError::NoOutputs)
        );
        assert_eq!(
            Specification::new(vec![SpecRow::new(SpecRole::Output, "a", Modality::Text)]),
            Err(SpecificationError::NoInputs)
        );
    }

    #[test]
    fn renders_rows() {
        let spec = Specification::new(vec![
            SpecRow::new(SpecRole::Input, "Video file", Modality::Video).with_language("en"),
            SpecRow::new(SpecRole::Output, "Audio track 1", Modality::Audio).with_language("fr"),
        ])
        .unwrap();
        assert_eq!(
            spec.render(),
            "- input \"Video file\": video, language en\n- output \"Audio track 1\": audio, language fr"
        );
    }
}
