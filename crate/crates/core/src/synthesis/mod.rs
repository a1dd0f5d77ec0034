//! Reference pipeline synthesis and the query/pipeline dataset format.

mod dataset;
mod expand;
mod queries;

pub use dataset::{
    read_dataset, read_generated, write_dataset, write_generated, AmbiguityLevel, DatasetEntry,
    DatasetError, GeneratedEntry, Provenance,
};
pub use expand::{expand_pipeline, synthesize_batch};
pub use queries::{
    generate_spec_and_queries, omitted_details, rate_ambiguity, template_queries, GeneratedQueries,
    AMBIGUOUS_QUERY_PROMPT, CLEAR_QUERY_PROMPT, RATE_AMBIGUITY_PROMPT,
};

use pipewright_gateway::GatewayError;
use thiserror::Error;

use crate::ir::Modality;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisConfig {
    pub n_function_nodes: usize,
    pub max_children: usize,
    pub n_inputs: usize,
    pub seed: u64,
}

impl SynthesisConfig {
    pub fn new(n_function_nodes: usize, seed: u64) -> Self {
        Self {
            n_function_nodes,
            max_children: 2,
            n_inputs: 1,
            seed,
        }
    }

    pub fn with_inputs(mut self, n_inputs: usize) -> Self {
        self.n_inputs = n_inputs;
        self
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: &str| Err(SynthesisError::InvalidConfig(m.to_string()));
        if self.n_function_nodes == 0 {
            return bad("n_function_nodes must be at least 1");
        }
        if self.n_inputs == 0 {
            return bad("n_inputs must be at least 1");
        }
        if self.n_inputs > self.n_function_nodes {
            return bad("every input needs its own function node, so n_inputs <= n_function_nodes");
        }
        if self.max_children == 0 {
            return bad("max_children must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("no catalog function consumes {modality} from `{node}`")]
    DeadEnd { node: String, modality: Modality },
    #[error("gateway call failed: {0}")]
    Gateway(#[from] GatewayError),
    #[error("could not read an ambiguity level from `{raw}`")]
    UnparseableRating { raw: String },
}
