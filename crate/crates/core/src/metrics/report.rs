//! Dataset-level evaluation: exact-match rate, mean normalized edit
//! distance, breakdowns by ambiguity and reference size, and a histogram of
//! the edits that would repair the generated pipelines.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    exact_match_with, ged_with, EditEntity, EditKind, GedResult, HookError, Hooks, MatchConfig,
};
use crate::ir::Pipeline;
use crate::par::Exec;
use crate::synthesis::{AmbiguityLevel, DatasetEntry, GeneratedEntry};

/// Reference sizes (node counts) are grouped into these inclusive ranges.
const SIZE_BINS: [(usize, usize); 4] = [(1, 5), (6, 10), (11, 15), (16, usize::MAX)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub count: usize,
    pub proportion: f64,
}

/// Counts of edit operations. `operations` is keyed `<entity>_<kind>`
/// (e.g. `node_substitute`) and `substitution_causes` by cause; each
/// group's proportions sum to 1 unless it is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub operations: BTreeMap<String, HistogramBucket>,
    pub substitution_causes: BTreeMap<String, HistogramBucket>,
}

impl ErrorHistogram {
    pub fn is_empty(&self) -> bool {
        self.operations.is_empty()
    }
}

fn key<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enums serialize as strings"),
    }
}

fn buckets(counts: BTreeMap<String, usize>) -> BTreeMap<String, HistogramBucket> {
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(k, count)| {
            let proportion = count as f64 / total as f64;
            (k, HistogramBucket { count, proportion })
        })
        .collect()
}

pub fn error_breakdown<'a>(results: impl IntoIterator<Item = &'a GedResult>) -> ErrorHistogram {
    let mut ops = BTreeMap::new();
    let mut causes = BTreeMap::new();
    for r in results {
        for op in &r.edit_script {
            *ops.entry(format!("{}_{}", key(&op.entity), key(&op.kind)))
                .or_insert(0) += 1;
            if let Some(c) = op.cause {
                debug_assert!(op.entity == EditEntity::Node && op.kind == EditKind::Substitute);
                *causes.entry(key(&c)).or_insert(0) += 1;
            }
        }
    }
    ErrorHistogram {
        operations: buckets(ops),
        substitution_causes: buckets(causes),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub ambiguity_level: AmbiguityLevel,
    pub reference_nodes: usize,
    pub reference_size: usize,
    pub exact_match: bool,
    pub ged: GedResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub bin: String,
    pub pairs: usize,
    pub exact_match_pct: f64,
    pub ged_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pairs: usize,
    pub exact_match_pct: f64,
    /// Mean normalized distance, as a percentage.
    pub ged_pct: f64,
    pub timeouts: usize,
    pub by_ambiguity: Vec<AggregateRow>,
    pub by_reference_size: Vec<AggregateRow>,
    pub edits: ErrorHistogram,
    /// Sorted by id.
    pub records: Vec<PairRecord>,
}

impl EvaluationReport {
    /// Pretty JSON with a trailing newline; stable for identical inputs.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error(
        "ids differ: no generated pipeline for {missing:?}, no dataset entry for {unexpected:?}"
    )]
    IdMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("pair `{id}`: {source}")]
    Hook { id: String, source: HookError },
    #[error(transparent)]
    Config(#[from] super::ConfigError),
}

/// Exact match and edit distance for one pair.
pub fn evaluate_pair(
    generated: &Pipeline,
    reference: &Pipeline,
    cfg: &MatchConfig,
    hooks: Hooks<'_>,
) -> Result<(bool, GedResult), HookError> {
    let em = exact_match_with(generated, reference, cfg, hooks)?.matched;
    let ged = ged_with(generated, reference, cfg, hooks)?;
    Ok((em, ged))
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn aggregate(bin: String, records: &[&PairRecord]) -> AggregateRow {
    let n = records.len();
    let em = records.iter().filter(|r| r.exact_match).count();
    let ged = if n == 0 {
        0.0
    } else {
        100.0 * records.iter().map(|r| r.ged.normalized).sum::<f64>() / n as f64
    };
    AggregateRow {
        bin,
        pairs: n,
        exact_match_pct: pct(em, n),
        ged_pct: ged,
    }
}

fn size_bin(nodes: usize) -> String {
    let (lo, hi) = SIZE_BINS
        .iter()
        .copied()
        .find(|(lo, hi)| (*lo..=*hi).contains(&nodes))
        .unwrap_or((0, 0));
    match hi {
        usize::MAX => format!("{lo}+"),
        0 => "0".to_string(),
        _ => format!("{lo}-{hi}"),
    }
}

/// Pairs entries with generated pipelines by id and scores every pair.
///
/// The id sets must coincide. Pairs are independent, so `exec` may score
/// them concurrently; the report is ordered by id either way.
pub fn evaluate_dataset(
    entries: &[DatasetEntry],
    generated: &[GeneratedEntry],
    cfg: &MatchConfig,
    hooks: Hooks<'_>,
    exec: Exec,
) -> Result<EvaluationReport, EvaluationError> {
    cfg.validate()?;
    let mut refs: BTreeMap<&str, &DatasetEntry> = BTreeMap::new();
    for e in entries {
        if refs.insert(&e.id, e).is_some() {
            return Err(EvaluationError::DuplicateId(e.id.clone()));
        }
    }
    let mut gens: BTreeMap<&str, &Pipeline> = BTreeMap::new();
    for g in generated {
        if gens.insert(&g.id, &g.pipeline).is_some() {
            return Err(EvaluationError::DuplicateId(g.id.clone()));
        }
    }
    let ref_ids: BTreeSet<&str> = refs.keys().copied().collect();
    let gen_ids: BTreeSet<&str> = gens.keys().copied().collect();
    if ref_ids != gen_ids {
        return Err(EvaluationError::IdMismatch {
            missing: ref_ids
                .difference(&gen_ids)
                .map(|s| s.to_string())
                .collect(),
            unexpected: gen_ids
                .difference(&ref_ids)
                .map(|s| s.to_string())
                .collect(),
        });
    }

    let jobs: Vec<(&DatasetEntry, &Pipeline)> =
        refs.values().map(|e| (*e, gens[e.id.as_str()])).collect();
    let records = exec.try_map(&jobs, |(entry, gen)| {
        let (exact_match, ged) =
            evaluate_pair(gen, &entry.reference, cfg, hooks).map_err(|source| {
                EvaluationError::Hook {
                    id: entry.id.clone(),
                    source,
                }
            })?;
        Ok::<_, EvaluationError>(PairRecord {
            id: entry.id.clone(),
            ambiguity_level: entry.ambiguity_level,
            reference_nodes: entry.reference.node_count(),
            reference_size: entry.reference.size(),
            exact_match,
            ged,
        })
    })?;

    let all: Vec<&PairRecord> = records.iter().collect();
    let overall = aggregate(String::new(), &all);
    let by_ambiguity = AmbiguityLevel::ALL
        .iter()
        .map(|level| {
            let rs: Vec<&PairRecord> = all
                .iter()
                .copied()
                .filter(|r| r.ambiguity_level == *level)
                .collect();
            aggregate(level.to_string(), &rs)
        })
        .collect();
    let by_reference_size = SIZE_BINS
        .iter()
        .map(|(lo, _)| {
            let bin = size_bin(*lo);
            let rs: Vec<&PairRecord> = all
                .iter()
                .copied()
                .filter(|r| size_bin(r.reference_nodes) == bin)
                .collect();
            aggregate(bin, &rs)
        })
        .collect();
    Ok(EvaluationReport {
        pairs: records.len(),
        exact_match_pct: overall.exact_match_pct,
        ged_pct: overall.ged_pct,
        timeouts: records.iter().filter(|r| r.ged.timed_out).count(),
        by_ambiguity,
        by_reference_size,
        edits: error_breakdown(records.iter().map(|r| &r.ged)),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_bins() {
        assert_eq!(size_bin(1), "1-5");
        assert_eq!(size_bin(5), "1-5");
        assert_eq!(size_bin(11), "11-15");
        assert_eq!(size_bin(40), "16+");
        assert_eq!(size_bin(0), "0");
    }

    #[test]
    fn empty_breakdown() {
        assert!(error_breakdown(&[]).is_empty());
    }
}
