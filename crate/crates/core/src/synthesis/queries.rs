use pipewright_gateway::{AgentRole, Gateway};

use super::{AmbiguityLevel, SynthesisError};
use crate::ir::{Pipeline, SpecRole, Specification};

pub const CLEAR_QUERY_PROMPT: &str = include_str!("../../assets/prompts/clear_query.txt");
pub const AMBIGUOUS_QUERY_PROMPT: &str = include_str!("../../assets/prompts/ambiguous_query.txt");
pub const RATE_AMBIGUITY_PROMPT: &str = include_str!("../../assets/prompts/rate_ambiguity.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedQueries {
    pub specification: Specification,
    pub clear_query: String,
    pub ambiguous_query: String,
}

/// Details the ambiguous query is told to leave out: the language of every
/// input that has one, or failing that the type of the first output.
pub fn omitted_details(spec: &Specification) -> Vec<String> {
    let langs: Vec<String> = spec
        .inputs()
        .filter(|r| r.language.is_some())
        .map(|r| format!("the language of the input \"{}\"", r.name))
        .collect();
    if !langs.is_empty() {
        return langs;
    }
    spec.outputs()
        .take(1)
        .map(|r| {
            format!(
                "the data type ({}) of the output \"{}\"",
                r.modality, r.name
            )
        })
        .collect()
}

/// Derives the specification from `p` and asks the gateway for a clear
/// query and a deliberately vague one. Replies are trimmed.
pub fn generate_spec_and_queries(
    p: &Pipeline,
    gateway: &Gateway,
) -> Result<GeneratedQueries, SynthesisError> {
    let specification = Specification::from_pipeline(p);
    let rendered = specification.render();
    let clear_query = gateway
        .ask(
            AgentRole::Utility,
            CLEAR_QUERY_PROMPT,
            &format!("Specification:\n{rendered}"),
        )?
        .trim()
        .to_string();
    let omit = omitted_details(&specification)
        .iter()
        .map(|d| format!("- {d}"))
        .collect::<Vec<_>>()
        .join("\n");
    let ambiguous_query = gateway
        .ask(
            AgentRole::Utility,
            AMBIGUOUS_QUERY_PROMPT,
            &format!("Specification:\n{rendered}\n\nLeave out:\n{omit}"),
        )?
        .trim()
        .to_string();
    Ok(GeneratedQueries {
        specification,
        clear_query,
        ambiguous_query,
    })
}

/// Offline stand-in for [`generate_spec_and_queries`]: fixed sentence
/// templates over the specification rows.
pub fn template_queries(p: &Pipeline) -> GeneratedQueries {
    let specification = Specification::from_pipeline(p);
    let describe = |role: SpecRole, with_language: bool| {
        specification
            .rows
            .iter()
            .filter(|r| r.role == role)
            .map(|r| match (&r.language, with_language) {
                (Some(l), true) => format!("{} \"{}\" in {l}", r.modality, r.name),
                _ => format!("{} \"{}\"", r.modality, r.name),
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let clear_query = format!(
        "Build a pipeline that takes {} and produces {}.",
        describe(SpecRole::Input, true),
        describe(SpecRole::Output, true)
    );
    let ambiguous_query = format!(
        "I have {} and want {}.",
        describe(SpecRole::Input, false),
        describe(SpecRole::Output, true)
    );
    GeneratedQueries {
        specification,
        clear_query,
        ambiguous_query,
    }
}

pub fn rate_ambiguity(query: &str, gateway: &Gateway) -> Result<AmbiguityLevel, SynthesisError> {
    let raw = gateway.ask(AgentRole::Utility, RATE_AMBIGUITY_PROMPT, query)?;
    parse_level(&raw).ok_or(SynthesisError::UnparseableRating { raw })
}

/// Reads the first non-empty line, ignoring case, punctuation and whether
/// words are joined by spaces, hyphens or underscores.
fn parse_level(raw: &str) -> Option<AmbiguityLevel> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let norm: String = line
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = norm.split_whitespace().collect();
    match words.as_slice() {
        ["unambiguous"] | ["not", "ambiguous"] => Some(AmbiguityLevel::Unambiguous),
        ["ambiguous"] => Some(AmbiguityLevel::Ambiguous),
        ["very", "ambiguous"] => Some(AmbiguityLevel::VeryAmbiguous),
        _ => None,
    }
}
