use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::ir::json::{pipeline_from_value, pipeline_to_value};
use crate::ir::{FunctionCatalog, Pipeline, Specification};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityLevel {
    Unambiguous,
    Ambiguous,
    VeryAmbiguous,
}

impl AmbiguityLevel {
    pub const ALL: [AmbiguityLevel; 3] = [
        AmbiguityLevel::Unambiguous,
        AmbiguityLevel::Ambiguous,
        AmbiguityLevel::VeryAmbiguous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityLevel::Unambiguous => "unambiguous",
            AmbiguityLevel::Ambiguous => "ambiguous",
            AmbiguityLevel::VeryAmbiguous => "very_ambiguous",
        }
    }
}

impl fmt::Display for AmbiguityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Manual,
    Synthetic,
}

/// A user query paired with the pipeline that answers it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub id: String,
    pub ambiguous_query: String,
    pub clear_query: String,
    pub specification: Specification,
    pub reference: Pipeline,
    pub ambiguity_level: AmbiguityLevel,
    pub provenance: Provenance,
}

/// A pipeline produced by some builder for the dataset entry `id`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedEntry {
    pub id: String,
    pub pipeline: Pipeline,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryLine {
    id: String,
    ambiguous_query: String,
    clear_query: String,
    specification: Specification,
    reference: Value,
    ambiguity_level: AmbiguityLevel,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratedLine {
    id: String,
    pipeline: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct DatasetError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

/// One JSON object per line, in the given order.
pub fn write_dataset(entries: &[DatasetEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let line = EntryLine {
            id: e.id.clone(),
            ambiguous_query: e.ambiguous_query.clone(),
            clear_query: e.clear_query.clone(),
            specification: e.specification.clone(),
            reference: pipeline_to_value(&e.reference),
            ambiguity_level: e.ambiguity_level,
            provenance: e.provenance,
        };
        out.push_str(&serde_json::to_string(&line).expect("entry serializes"));
        out.push('\n');
    }
    out
}

/// Blank lines are skipped.
pub fn read_dataset(
    text: &str,
    catalog: &FunctionCatalog,
) -> Result<Vec<DatasetEntry>, DatasetError> {
    lines(text)
        .map(|(n, raw)| {
            let err = |message: String| DatasetError { line: n, message };
            let line: EntryLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
            let reference =
                pipeline_from_value(line.reference, catalog).map_err(|e| err(e.to_string()))?;
            Ok(DatasetEntry {
                id: line.id,
                ambiguous_query: line.ambiguous_query,
                clear_query: line.clear_query,
                specification: line.specification,
                reference,
                ambiguity_level: line.ambiguity_level,
                provenance: line.provenance,
            })
        })
        .collect()
}

pub fn write_generated(entries: &[GeneratedEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let line = GeneratedLine {
            id: e.id.clone(),
            pipeline: pipeline_to_value(&e.pipeline),
        };
        out.push_str(&serde_json::to_string(&line).expect("entry serializes"));
        out.push('\n');
    }
    out
}

pub fn read_generated(
    text: &str,
    catalog: &FunctionCatalog,
) -> Result<Vec<GeneratedEntry>, DatasetError> {
    lines(text)
        .map(|(n, raw)| {
            let err = |message: String| DatasetError { line: n, message };
            let line: GeneratedLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
            let pipeline =
                pipeline_from_value(line.pipeline, catalog).map_err(|e| err(e.to_string()))?;
            Ok(GeneratedEntry {
                id: line.id,
                pipeline,
            })
        })
        .collect()
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}
