use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Modality, Port};

/// Language codes accepted by every language-valued parameter in the
/// shipped catalog.
pub const LANGUAGE_CODES: [&str; 8] = ["en", "fr", "de", "es", "pt", "ar", "zh", "ja"];

const BUILTIN_CATALOG: &str = include_str!("../../assets/catalog.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub modality: Modality,
    #[serde(default = "yes")]
    pub required: bool,
    /// Extra source modalities an edge into this port may carry, e.g. a
    /// speech recogniser reading the audio track of a video directly.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accepts: Vec<Modality>,
}

fn yes() -> bool {
    true
}

impl ParamSpec {
    pub fn port(&self) -> Port {
        Port::new(self.name.clone(), self.modality)
    }

    pub fn admits(&self, source: Modality) -> bool {
        self.modality == source || self.accepts.contains(&source)
    }
}

/// A configuration parameter and its allowed values. An empty value list
/// means free-form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub name: String,
    #[serde(default)]
    pub values: Vec<String>,
}

impl ParamDomain {
    pub fn allows(&self, value: &str) -> bool {
        self.values.is_empty() || self.values.iter().any(|v| v == value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub id: String,
    pub display_name: String,
    pub category: String,
    pub inputs: Vec<ParamSpec>,
    pub outputs: Vec<ParamSpec>,
    /// Every listed parameter must be supplied, either as a static value in
    /// the node's params or by an edge into an input port of the same name.
    #[serde(default)]
    pub required_params: Vec<ParamDomain>,
    /// Curation note explaining the chosen signature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FunctionSpec {
    pub fn param(&self, name: &str) -> Option<&ParamDomain> {
        self.required_params.iter().find(|p| p.name == name)
    }

    pub fn input(&self, name: &str) -> Option<&ParamSpec> {
        self.inputs.iter().find(|p| p.name == name)
    }

    /// Input ports that must have an incoming edge.
    pub fn required_inputs(&self) -> impl Iterator<Item = &ParamSpec> {
        self.inputs.iter().filter(|p| p.required)
    }

    fn check(&self) -> Result<(), CatalogError> {
        let bad = |reason: String| CatalogError::InvalidEntry {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(bad("empty id".into()));
        }
        if self.inputs.is_empty() || self.outputs.is_empty() {
            return Err(bad("needs at least one input and one output".into()));
        }
        for (side, ports) in [("input", &self.inputs), ("output", &self.outputs)] {
            let mut names = BTreeSet::new();
            for p in ports {
                if !names.insert(p.name.as_str()) {
                    return Err(bad(format!("duplicate {side} `{}`", p.name)));
                }
            }
        }
        let mut names = BTreeSet::new();
        for p in &self.required_params {
            if !names.insert(p.name.as_str()) {
                return Err(bad(format!("duplicate parameter `{}`", p.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("catalog is not valid JSON: {0}")]
    Parse(String),
    #[error("duplicate function id `{0}`")]
    DuplicateId(String),
    #[error("function `{id}`: {reason}")]
    InvalidEntry { id: String, reason: String },
    #[error("unknown function `{0}`")]
    NotFound(String),
    #[error("cannot read catalog {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    functions: Vec<FunctionSpec>,
}

/// The library of AI functions a pipeline may use. Ids are unique
/// case-insensitively.
#[derive(Debug, Clone)]
pub struct FunctionCatalog {
    functions: Vec<FunctionSpec>,
    index: HashMap<String, usize>,
}

impl FunctionCatalog {
    pub fn new(functions: Vec<FunctionSpec>) -> Result<Self, CatalogError> {
        let mut index = HashMap::with_capacity(functions.len());
        for (i, f) in functions.iter().enumerate() {
            f.check()?;
            if index.insert(f.id.to_lowercase(), i).is_some() {
                return Err(CatalogError::DuplicateId(f.id.clone()));
            }
        }
        Ok(Self { functions, index })
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        Self::new(file.functions)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// The catalog bundled with the crate.
    pub fn builtin() -> &'static FunctionCatalog {
        static CATALOG: OnceLock<FunctionCatalog> = OnceLock::new();
        CATALOG.get_or_init(|| {
            FunctionCatalog::from_json(BUILTIN_CATALOG).expect("bundled catalog is valid")
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CatalogFile {
            functions: self.functions.clone(),
        })
        .expect("catalog serializes")
    }

    /// Case-insensitive lookup.
    pub fn lookup(&self, id: &str) -> Result<&FunctionSpec, CatalogError> {
        self.get(id)
            .ok_or_else(|| CatalogError::NotFound(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Option<&FunctionSpec> {
        self.index
            .get(&id.to_lowercase())
            .map(|&i| &self.functions[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FunctionSpec> {
        self.functions.iter()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}
