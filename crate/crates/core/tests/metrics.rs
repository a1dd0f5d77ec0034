mod support;

use std::time::{Duration, Instant};

use pipewright_core::ir::Edge;
use pipewright_core::ir::{FunctionCatalog, Node, Pipeline};
use pipewright_core::metrics::{
    edge_match, error_breakdown, exact_match, exact_match_with, ged, node_match, CodeJudge,
    EditEntity, EditKind, HookError, Hooks, MatchConfig, SubstitutionCause,
};
use pipewright_gateway::HashEmbedder;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

fn cfg() -> MatchConfig {
    MatchConfig::default()
}

#[test]
fn exact_match_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut positives = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let a = random_pipeline(&mut rng, n, 0.3);
        let b = match rng.random_range(0..3) {
            0 => relabel(&a, &mut rng),
            1 => relabel(&perturb(&a, &mut rng), &mut rng),
            _ => random_pipeline(&mut rng, n, 0.3),
        };
        let expected = brute_force_em(&a, &b);
        let got = exact_match(&a, &b, &cfg());
        assert_eq!(got.matched, expected, "a={a:?}\nb={b:?}");
        positives += expected as usize;
        if let Some(mapping) = got.mapping {
            for e in &a.edges {
                assert!(b.edges.iter().any(|f| edge_match(e, f, &mapping)));
            }
        }
    }
    assert!(
        positives > 50,
        "too few isomorphic pairs to be meaningful: {positives}"
    );
}

#[test]
fn renamed_dubbing_pipeline_matches_edge_for_edge() {
    let a = load_fixture("figure1.json");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = relabel(&a, &mut rng);
    let m = exact_match(&a, &b, &cfg()).mapping.expect("isomorphic");
    assert_eq!(m.len(), 11);
    for e in &a.edges {
        assert_eq!(b.edges.iter().filter(|f| edge_match(e, f, &m)).count(), 1);
    }
}

#[test]
fn missing_language_edges_break_exact_match() {
    let c = load_fixture("figure9c.json");
    let d = load_fixture("figure9d.json");
    assert!(!exact_match(&c, &d, &cfg()).matched);
    assert!(exact_match(&d, &d, &cfg()).matched);
    let r = ged(&c, &d, &cfg());
    assert_eq!(r.distance, 3.0);
    assert!(r
        .edit_script
        .iter()
        .all(|op| op.entity == EditEntity::Edge && op.kind == EditKind::Insert));
}

#[test]
fn ged_agrees_with_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..120 {
        let n1 = rng.random_range(0..=6);
        let n2 = rng.random_range(0..=6);
        let a = random_pipeline(&mut rng, n1, 0.35);
        let b = if rng.random_bool(0.5) && n1 > 0 {
            relabel(&perturb(&perturb(&a, &mut rng), &mut rng), &mut rng)
        } else {
            random_pipeline(&mut rng, n2, 0.35)
        };
        let r = ged(&a, &b, &cfg());
        assert!(!r.timed_out);
        assert_eq!(
            r.distance,
            exhaustive_ged(&a, &b) as f64,
            "a={a:?}\nb={b:?}"
        );
        assert_eq!(r.distance, r.edit_script.len() as f64);
        assert_eq!(r.distance == 0.0, exact_match(&a, &b, &cfg()).matched);
    }
}

#[test]
fn one_changed_target_language_is_one_substitution() {
    let reference = load_fixture("figure1.json");
    let mut generated = reference.clone();
    generated
        .nodes
        .get_mut("mt_de")
        .unwrap()
        .params
        .insert("target_language".into(), "pt".into());
    let r = ged(&generated, &reference, &cfg());
    assert_eq!(r.distance, 1.0);
    assert_eq!(r.edit_script.len(), 1);
    let op = &r.edit_script[0];
    assert_eq!(
        (op.entity, op.kind),
        (EditEntity::Node, EditKind::Substitute)
    );
    assert_eq!(op.cause, Some(SubstitutionCause::ParameterMismatch));
    assert_eq!(op.generated.as_deref(), Some("mt_de"));
    assert!((r.normalized - 1.0 / 21.0).abs() < 1e-12);
}

#[test]
fn redundant_recognizer_is_deleted() {
    let b = load_fixture("figure9b.json");
    let d = load_fixture("figure9d.json");
    let r = ged(&b, &d, &cfg());
    assert!(!r.timed_out);
    assert!(r.edit_script.iter().any(|op| op.entity == EditEntity::Node
        && op.kind == EditKind::Delete
        && op
            .generated
            .as_deref()
            .is_some_and(|g| g.starts_with("asr"))));
}

#[test]
fn seeded_edits_are_recovered_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let base = [
        load_fixture("figure1.json"),
        load_fixture("figure9d.json"),
        load_fixture("figure5a.json"),
    ];
    for i in 0..60 {
        let p = if i < 30 {
            base[i % 3].clone()
        } else {
            random_pipeline(&mut rng, 7, 0.3)
        };
        let k = 1 + i % 3;
        let q = seeded_mutations(&p, k, &mut rng);
        let r = ged(&q, &p, &cfg());
        assert!(!r.timed_out);
        assert_eq!(r.distance, k as f64, "k={k}\n{q:?}");
    }
}

#[test]
fn distance_is_symmetric_on_small_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..80 {
        let (n1, n2) = (rng.random_range(0..=7), rng.random_range(0..=7));
        let a = random_pipeline(&mut rng, n1, 0.3);
        let b = random_pipeline(&mut rng, n2, 0.3);
        assert_eq!(ged(&a, &b, &cfg()).distance, ged(&b, &a, &cfg()).distance);
    }
}

#[test]
fn budget_cuts_search_short_with_an_upper_bound() {
    let (star, path, optimum) = star_and_path(26);
    let cfg = cfg().with_time_budget(Duration::from_millis(300));
    let started = Instant::now();
    let r = ged(&star, &path, &cfg);
    assert!(started.elapsed() < Duration::from_millis(1300));
    assert!(r.timed_out);
    assert!(r.distance >= optimum);
    assert_eq!(r.distance, r.edit_script.len() as f64);
}

#[test]
fn small_star_and_path_distance_is_known() {
    let (star, path, optimum) = star_and_path(6);
    assert_eq!(exhaustive_ged(&star, &path) as f64, optimum);
    assert_eq!(ged(&star, &path, &cfg()).distance, optimum);
}

#[test]
fn breakdown_proportions() {
    let reference = load_fixture("figure1.json");
    let catalog = FunctionCatalog::builtin();
    // one node insertion, one edge deletion, two parameter substitutions
    let mut a = reference.clone();
    a.add_node(
        Node::function("extra", catalog.get("summarization").unwrap()).with_param("language", "en"),
    )
    .unwrap();
    let mut b = reference.clone();
    b.edges
        .remove(&"mt_fr.text->tts_fr.text".parse::<Edge>().unwrap());
    let mut c = reference.clone();
    for id in ["tts_fr", "tts_de"] {
        c.nodes
            .get_mut(id)
            .unwrap()
            .params
            .insert("language".into(), "ja".into());
    }
    let results: Vec<_> = [a, b, c]
        .iter()
        .map(|g| ged(g, &reference, &cfg()))
        .collect();
    let h = error_breakdown(&results);
    let share = |k: &str| h.operations.get(k).map(|b| b.proportion).unwrap_or(0.0);
    assert_eq!(share("node_delete"), 0.25);
    assert_eq!(share("edge_insert"), 0.25);
    assert_eq!(share("node_substitute"), 0.5);
    assert_eq!(h.substitution_causes["parameter_mismatch"].proportion, 1.0);

    let same = ged(&reference, &reference, &cfg());
    assert!(error_breakdown([&same]).is_empty());
}

#[test]
fn substitution_causes() {
    let catalog = FunctionCatalog::builtin();
    let mt = Node::function("x", catalog.get("machine_translation").unwrap());
    let sum = Node::function("x", catalog.get("summarization").unwrap());
    let llm = Node::generic_llm("x", "Summarise the text.");
    let llm2 = Node::generic_llm("x", "Draw a horse.");
    assert_eq!(
        SubstitutionCause::of(&mt, &sum),
        SubstitutionCause::WrongFunction
    );
    assert_eq!(
        SubstitutionCause::of(&mt, &llm),
        SubstitutionCause::WrongNodeType
    );
    assert_eq!(
        SubstitutionCause::of(&llm, &llm2),
        SubstitutionCause::PayloadMismatch
    );
    assert_eq!(
        SubstitutionCause::of(&mt.clone().with_param("target_language", "fr"), &mt),
        SubstitutionCause::ParameterMismatch
    );
}

struct Verdict(bool);

impl CodeJudge for Verdict {
    fn same_task(&self, _: &str, _: &str) -> Result<bool, HookError> {
        Ok(self.0)
    }
}

#[test]
fn script_nodes_defer_to_the_judge() {
    let a = Node::script("s", "print(1)", vec![], vec![]);
    let b = Node::script("s", "print( 2 )", vec![], vec![]);
    for verdict in [true, false] {
        let judge = Verdict(verdict);
        let hooks = Hooks {
            embedder: &HashEmbedder,
            judge: &judge,
        };
        assert_eq!(node_match(&a, &b, &cfg(), hooks).unwrap(), verdict);
        let mut pa = Pipeline::new();
        pa.add_node(a.clone()).unwrap();
        let mut pb = Pipeline::new();
        pb.add_node(b.clone()).unwrap();
        assert_eq!(
            exact_match_with(&pa, &pb, &cfg(), hooks).unwrap().matched,
            verdict
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn self_distance_is_zero(seed in any::<u64>(), n in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_pipeline(&mut rng, n, 0.25);
        let r = ged(&p, &relabel(&p, &mut rng), &cfg());
        prop_assert_eq!(r.distance, 0.0);
        prop_assert!(r.edit_script.is_empty());
        prop_assert!(exact_match(&p, &p, &cfg()).matched);
    }

    #[test]
    fn triangle_inequality_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_pipeline(&mut rng, 5, 0.3);
        let b = perturb(&a, &mut rng);
        let c = perturb(&b, &mut rng);
        let d = |x: &Pipeline, y: &Pipeline| ged(x, y, &cfg()).distance;
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }
}
