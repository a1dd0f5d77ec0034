use std::collections::BTreeSet;
use std::path::PathBuf;

use pipewright_core::ir::json::parse_pipeline_json;
use pipewright_core::ir::{Edge, Endpoint, FunctionCatalog, Modality, Node, NodeKind, Pipeline};
use pipewright_core::validator::{
    apply_mechanical_fixes, validate, Fixability, IssueCode, Location,
};
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name]
        .iter()
        .collect();
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn catalog() -> &'static FunctionCatalog {
    FunctionCatalog::builtin()
}

fn load(name: &str) -> Pipeline {
    parse_pipeline_json(&fixture(name), catalog()).unwrap()
}

#[test]
fn each_rule_fixture_triggers_exactly_its_code() {
    for code in IssueCode::ALL {
        let p = load(&format!("rules/{}.json", code.as_str().to_lowercase()));
        let report = validate(&p, catalog());
        assert_eq!(
            report.codes(),
            BTreeSet::from([code]),
            "{code}: {:#?}",
            report.issues
        );
        for issue in &report.issues {
            for node in issue.location.nodes() {
                // dangling edges may name missing nodes; everything else must exist
                assert!(
                    code == IssueCode::DanglingEdge || p.nodes.contains_key(node),
                    "{code}: {node}"
                );
            }
        }
    }
}

#[test]
fn reference_pipelines_are_clean() {
    for name in [
        "figure1.json",
        "figure9a.json",
        "figure9b.json",
        "figure9d.json",
    ] {
        let report = validate(&load(name), catalog());
        assert!(report.is_valid, "{name}: {:#?}", report.issues);
    }
}

#[test]
fn shared_output_link_is_fixed_mechanically() {
    let p = load("figure5a.json");
    let report = validate(&p, catalog());
    assert_eq!(report.codes(), BTreeSet::from([IssueCode::DupOutput]));
    assert_eq!(report.issues[0].fixability, Fixability::Mechanical);
    assert_eq!(
        report.issues[0].location,
        Location::Port {
            node: "tts_fr".into(),
            port: "audio".into()
        }
    );

    let fixed = apply_mechanical_fixes(&p, &report, catalog());
    assert!(fixed.report.is_valid, "{:#?}", fixed.report.issues);
    assert_eq!(validate(&fixed.pipeline, catalog()), fixed.report);
    // three duplicates: one kept, two removed
    assert_eq!(p.nodes_of_kind(NodeKind::Output).count(), 3);
    let kept: Vec<&str> = fixed
        .pipeline
        .nodes_of_kind(NodeKind::Output)
        .map(|n| n.id.as_str())
        .collect();
    assert_eq!(kept, ["audio_1"]);
    assert_eq!(fixed.pipeline.node_count(), p.node_count() - 2);
    assert_eq!(fixed.applied.len(), 1);
}

#[test]
fn modality_mismatch_survives_fixing() {
    let p = load("figure5b.json");
    let report = validate(&p, catalog());
    assert_eq!(
        report.codes(),
        BTreeSet::from([IssueCode::ModalityMismatch])
    );
    assert_eq!(report.issues[0].fixability, Fixability::LlmAssisted);
    let fixed = apply_mechanical_fixes(&p, &report, catalog());
    assert_eq!(fixed.pipeline, p);
    assert!(fixed.applied.is_empty());
    assert_eq!(fixed.report, report);
}

#[test]
fn missing_language_edges_are_reported() {
    let report = validate(&load("figure9c.json"), catalog());
    let missing: Vec<String> = report
        .issues
        .iter()
        .filter(|i| i.code == IssueCode::MissingRequiredParam)
        .map(|i| i.location.to_string())
        .collect();
    assert_eq!(
        missing,
        [
            "asr.language",
            "mt_de.source_language",
            "mt_fr.source_language"
        ]
    );
    assert!(report
        .issues
        .iter()
        .all(|i| i.fixability == Fixability::LlmAssisted));
}

#[test]
fn dangling_edges_are_dropped() {
    let p = load("rules/dangling_edge.json");
    let fixed = apply_mechanical_fixes(&p, &validate(&p, catalog()), catalog());
    assert!(fixed.report.is_valid);
    assert_eq!(fixed.pipeline.edge_count(), 1);
}

#[test]
fn video_may_feed_a_recogniser_but_not_translation() {
    let p = load("figure1.json");
    let e = Edge::parse("video_in.data", "asr.audio").unwrap();
    assert!(p.edges.contains(&e));
    let mut q = p.clone();
    q.edges.remove(&e);
    q.edges
        .insert(Edge::parse("video_in.data", "mt_fr.text").unwrap());
    q.edges
        .remove(&Edge::parse("asr.text", "mt_fr.text").unwrap());
    let codes = validate(&q, catalog()).codes();
    assert!(codes.contains(&IssueCode::ModalityMismatch));
}

#[derive(Debug, Clone)]
enum Mutation {
    /// Hang an extra Output node on an existing output port.
    DuplicateOutput(usize),
    /// Add an edge to a node that does not exist.
    DanglingEdge(usize),
    /// Point an edge at a port name that does not exist.
    BogusPort(usize),
    RemoveEdge(usize),
    RemoveNode(usize),
    /// Connect two arbitrary ports.
    RandomEdge(usize, usize),
    SetParam(usize, usize),
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        3 => any::<usize>().prop_map(Mutation::DuplicateOutput),
        2 => any::<usize>().prop_map(Mutation::DanglingEdge),
        1 => any::<usize>().prop_map(Mutation::BogusPort),
        1 => any::<usize>().prop_map(Mutation::RemoveEdge),
        1 => any::<usize>().prop_map(Mutation::RemoveNode),
        1 => (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Mutation::RandomEdge(a, b)),
        1 => (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Mutation::SetParam(a, b)),
    ]
}

fn output_ports(p: &Pipeline) -> Vec<(String, String, Modality)> {
    p.nodes
        .values()
        .flat_map(|n| {
            n.outputs
                .iter()
                .map(|o| (n.id.clone(), o.name.clone(), o.modality))
        })
        .collect()
}

fn input_ports(p: &Pipeline) -> Vec<(String, String)> {
    p.nodes
        .values()
        .flat_map(|n| n.inputs.iter().map(|i| (n.id.clone(), i.name.clone())))
        .collect()
}

fn mutate(p: &mut Pipeline, m: &Mutation, serial: usize) {
    let outs = output_ports(p);
    let ins = input_ports(p);
    match *m {
        Mutation::DuplicateOutput(k) if !outs.is_empty() => {
            let (node, port, modality) = &outs[k % outs.len()];
            let id = format!("dup{serial}");
            p.add_node(Node::output(id.as_str(), *modality)).unwrap();
            p.connect((node, port), (&id, "data"));
        }
        Mutation::DanglingEdge(k) if !outs.is_empty() => {
            let (node, port, _) = &outs[k % outs.len()];
            p.connect((node, port), (&format!("ghost{serial}"), "data"));
        }
        Mutation::BogusPort(k) if !p.edges.is_empty() => {
            let e = p.edges.iter().nth(k % p.edges.len()).unwrap().clone();
            p.edges.remove(&e);
            p.edges.insert(Edge::new(
                e.source,
                Endpoint::new(e.target.node, format!("nope{serial}")),
            ));
        }
        Mutation::RemoveEdge(k) if !p.edges.is_empty() => {
            let e = p.edges.iter().nth(k % p.edges.len()).unwrap().clone();
            p.edges.remove(&e);
        }
        Mutation::RemoveNode(k) if !p.nodes.is_empty() => {
            let id = p.nodes.keys().nth(k % p.nodes.len()).unwrap().clone();
            p.remove_node(&id);
        }
        Mutation::RandomEdge(a, b) if !outs.is_empty() && !ins.is_empty() => {
            let (sn, sp, _) = &outs[a % outs.len()];
            let (tn, tp) = &ins[b % ins.len()];
            p.connect((sn, sp), (tn, tp));
            if p.check_acyclic().is_err() {
                p.edges
                    .remove(&Edge::new(Endpoint::new(sn, sp), Endpoint::new(tn, tp)));
            }
        }
        Mutation::SetParam(a, b) if !p.nodes.is_empty() => {
            let id = p.nodes.keys().nth(a % p.nodes.len()).unwrap().clone();
            let (key, value) = [
                ("language", "fr"),
                ("target_language", "xx"),
                ("tone", "formal"),
            ][b % 3];
            p.nodes
                .get_mut(&id)
                .unwrap()
                .params
                .insert(key.into(), value.into());
        }
        _ => {}
    }
}

fn base() -> impl Strategy<Value = Pipeline> {
    prop_oneof![
        Just(load("figure1.json")),
        Just(load("figure5a.json")),
        Just(load("figure5b.json")),
        Just(load("figure9b.json")),
        Just(load("figure9c.json")),
        Just(load("figure9d.json")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fixing_is_idempotent_and_never_adds_issues(
        mut p in base(),
        mutations in prop::collection::vec(mutation(), 1..6),
    ) {
        for (i, m) in mutations.iter().enumerate() {
            mutate(&mut p, m, i);
        }
        let report = validate(&p, catalog());
        let once = apply_mechanical_fixes(&p, &report, catalog());
        prop_assert!(once.report.issues.len() <= report.issues.len());
        prop_assert_eq!(&validate(&once.pipeline, catalog()), &once.report);
        let twice = apply_mechanical_fixes(&once.pipeline, &once.report, catalog());
        prop_assert_eq!(&twice.pipeline, &once.pipeline);
        prop_assert!(twice.applied.is_empty());
        prop_assert!(!once.report.issues.iter().any(|i| i.code == IssueCode::DanglingEdge));
    }

    #[test]
    fn validation_is_deterministic(mut p in base(), mutations in prop::collection::vec(mutation(), 0..4)) {
        for (i, m) in mutations.iter().enumerate() {
            mutate(&mut p, m, i);
        }
        let a = validate(&p, catalog());
        let b = validate(&p.clone(), catalog());
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.is_valid, a.issues.is_empty());
        let mut sorted = a.issues.clone();
        sorted.sort_by(|x, y| (x.code, &x.location).cmp(&(y.code, &y.location)));
        prop_assert_eq!(sorted, a.issues);
    }
}
