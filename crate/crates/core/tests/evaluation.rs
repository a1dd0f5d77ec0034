mod support;

use pipewright_core::ir::{FunctionCatalog, Node, Pipeline};
use pipewright_core::metrics::{evaluate_dataset, EvaluationError, Hooks, MatchConfig};
use pipewright_core::par::Exec;
use pipewright_core::synthesis::{
    expand_pipeline, read_dataset, read_generated, template_queries, AmbiguityLevel, DatasetEntry,
    GeneratedEntry, Provenance, SynthesisConfig,
};
use support::*;

fn catalog() -> &'static FunctionCatalog {
    FunctionCatalog::builtin()
}

fn entry(id: &str, reference: Pipeline, level: AmbiguityLevel) -> DatasetEntry {
    let q = template_queries(&reference);
    DatasetEntry {
        id: id.into(),
        ambiguous_query: q.ambiguous_query,
        clear_query: q.clear_query,
        specification: q.specification,
        reference,
        ambiguity_level: level,
        provenance: Provenance::Synthetic,
    }
}

fn generated(e: &DatasetEntry, p: Pipeline) -> GeneratedEntry {
    GeneratedEntry {
        id: e.id.clone(),
        pipeline: p,
    }
}

fn run(
    entries: &[DatasetEntry],
    gens: &[GeneratedEntry],
) -> pipewright_core::metrics::EvaluationReport {
    evaluate_dataset(
        entries,
        gens,
        &MatchConfig::default(),
        Hooks::offline(),
        Exec::default(),
    )
    .unwrap()
}

#[test]
fn perfect_generation_scores_full_marks() {
    let entries: Vec<DatasetEntry> = (0..6)
        .map(|i| {
            let p = expand_pipeline(&SynthesisConfig::new(1 + i, i as u64), catalog()).unwrap();
            entry(&format!("p{i}"), p, AmbiguityLevel::ALL[i % 3])
        })
        .collect();
    let gens: Vec<GeneratedEntry> = entries
        .iter()
        .map(|e| generated(e, e.reference.clone()))
        .collect();
    let r = run(&entries, &gens);
    assert_eq!(r.pairs, 6);
    assert_eq!(r.exact_match_pct, 100.0);
    assert_eq!(r.ged_pct, 0.0);
    assert!(r.edits.is_empty());
    assert!(r
        .by_ambiguity
        .iter()
        .all(|row| row.pairs == 2 && row.exact_match_pct == 100.0));
}

#[test]
fn half_off_by_one_node() {
    // ten-node references: a chain input -> 8 functions -> output
    let catalog = catalog();
    let chain = || {
        let mut p = Pipeline::new();
        p.add_node(Node::input("in", pipewright_core::ir::Modality::Text))
            .unwrap();
        let mut prev = ("in".to_string(), "data".to_string());
        for i in 0..8 {
            let id = format!("f{i}");
            p.add_node(
                Node::function(&id, catalog.get("text_normalization").unwrap())
                    .with_param("language", "en"),
            )
            .unwrap();
            p.connect((&prev.0, &prev.1), (&id, "text"));
            prev = (id, "text".into());
        }
        p.add_node(Node::output("out", pipewright_core::ir::Modality::Text))
            .unwrap();
        p.connect((&prev.0, &prev.1), ("out", "data"));
        p
    };
    let entries: Vec<DatasetEntry> = (0..4)
        .map(|i| entry(&format!("c{i}"), chain(), AmbiguityLevel::Unambiguous))
        .collect();
    let gens: Vec<GeneratedEntry> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut p = e.reference.clone();
            if i % 2 == 1 {
                p.nodes
                    .get_mut("f3")
                    .unwrap()
                    .params
                    .insert("language".into(), "de".into());
            }
            generated(e, p)
        })
        .collect();
    let r = run(&entries, &gens);
    assert_eq!(r.exact_match_pct, 50.0);
    // each miss costs 1 against 10 nodes + 9 edges; averaged over 4 pairs
    let expected = 100.0 * (2.0 / 19.0) / 4.0;
    assert!((r.ged_pct - expected).abs() < 1e-9, "{}", r.ged_pct);
    let row = r
        .by_reference_size
        .iter()
        .find(|row| row.bin == "6-10")
        .unwrap();
    assert_eq!(row.pairs, 4);
}

#[test]
fn ids_must_line_up() {
    let p = load_fixture("figure1.json");
    let entries = vec![entry("a", p.clone(), AmbiguityLevel::Ambiguous)];
    let gens = vec![GeneratedEntry {
        id: "b".into(),
        pipeline: p,
    }];
    match evaluate_dataset(
        &entries,
        &gens,
        &MatchConfig::default(),
        Hooks::offline(),
        Exec::Sequential,
    ) {
        Err(EvaluationError::IdMismatch {
            missing,
            unexpected,
        }) => {
            assert_eq!(missing, vec!["a".to_string()]);
            assert_eq!(unexpected, vec!["b".to_string()]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn bundled_corpus_report_is_stable() {
    let dir = fixtures_dir();
    let entries = read_dataset(
        &std::fs::read_to_string(dir.join("corpus.jsonl")).unwrap(),
        catalog(),
    )
    .unwrap();
    let gens = read_generated(
        &std::fs::read_to_string(dir.join("generated.jsonl")).unwrap(),
        catalog(),
    )
    .unwrap();
    let cfg = MatchConfig::default();
    let seq = evaluate_dataset(&entries, &gens, &cfg, Hooks::offline(), Exec::Sequential).unwrap();
    let par = evaluate_dataset(&entries, &gens, &cfg, Hooks::offline(), Exec::default()).unwrap();
    assert_eq!(seq.to_json(), par.to_json());
    assert_eq!(seq.timeouts, 0);
    let golden = std::fs::read_to_string(dir.join("golden_report.json")).unwrap();
    assert_eq!(seq.to_json(), golden);
}
