use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::kg::GraphDelta;
use crate::planner::SearchMode;
use crate::sim::scenario::Scenario;
use crate::testutil::{pipeline_for, DRAWER_RECOVERY, TWO_DRAWERS};

fn exec_failure(detail: &str, focus: &[&str]) -> Failure {
    Failure::Exec(ExecError {
        class: ExecErrorClass::PreconditionViolation,
        action: "(put_in robot_1 watch drawer cabinet_area)".into(),
        step: Some(2),
        focus: focus.iter().map(|s| s.to_string()).collect(),
        detail: detail.into(),
    })
}

#[test]
fn diagnose_maps_failure_classes() {
    let goals: BTreeSet<String> = ["watch", "drawer"].iter().map(|s| s.to_string()).collect();
    let d = diagnose(&Failure::NoPlan(NotFoundReason::Exhausted), &goals);
    assert_eq!(d.class, DiagnosticClass::Planner);
    assert_eq!(d.focus, vec!["drawer".to_string(), "watch".to_string()]);

    let d = diagnose(&exec_failure("drawer is closed", &["drawer"]), &goals);
    assert_eq!(d.class, DiagnosticClass::Execution);
    assert_eq!(d.focus, vec!["drawer".to_string()]);

    let not_found = Failure::Exec(ExecError {
        class: ExecErrorClass::ObjectNotFound,
        action: "(pickup robot_1 tomato kitchen)".into(),
        step: Some(0),
        focus: vec!["tomato".into()],
        detail: "object 'tomato' not found".into(),
    });
    let d = diagnose(&not_found, &goals);
    assert_eq!(d.class, DiagnosticClass::Perception);
    assert_eq!(d.focus, vec!["tomato".to_string()]);

    let synth = Failure::Synthesis {
        message: "missing location for in-scope entity 'cup'".into(),
        missing_location: Some("cup".into()),
    };
    let d = diagnose(&synth, &goals);
    assert_eq!(d.class, DiagnosticClass::Perception);
    assert_eq!(d.focus, vec!["cup".to_string()]);
}

/// The drawer fixture after the failure observation: state corrected to
/// closed, openable still missing.
fn drawer_post_reveal() -> (Scenario, crate::kg::KnowledgeGraph) {
    let scenario = Scenario::parse(DRAWER_RECOVERY).unwrap();
    let world = scenario.build_world().unwrap();
    let mut graph = scenario.initial_graph(&world).unwrap();
    graph.apply_delta(&GraphDelta::additions_only(vec![(
        SubgraphKind::Property,
        Triple::new("drawer", "has_state", "closed").unwrap(),
    )]));
    (scenario, graph)
}

#[test]
fn drawer_execution_error_ranks_openable_first() {
    let (scenario, graph) = drawer_post_reveal();
    let pipeline = pipeline_for(&scenario);
    let goal_entities: BTreeSet<String> =
        ["watch", "keychain", "drawer"].iter().map(|s| s.to_string()).collect();
    let failure = exec_failure("drawer is closed", &["drawer"]);
    let diagnosis = diagnose(&failure, &goal_entities);
    let known: BTreeSet<String> = pipeline
        .inventory
        .entities
        .iter()
        .chain(&pipeline.inventory.robots)
        .cloned()
        .collect();
    let candidates = RuleBasedGenerator
        .generate(
            3,
            &failure,
            &diagnosis,
            &graph,
            &goal_entities,
            &known,
            &pipeline.inventory.robots,
            &BTreeSet::new(),
        )
        .unwrap();
    assert_eq!(candidates.len(), 3);
    assert_eq!(
        candidates[0].delta.canonical_string(),
        "+property drawer has_property openable"
    );
    // Weights proportional to the relevance scores (3, ...).
    assert!(candidates[0].weight > 0.0 && candidates[0].weight <= 1.0);
    assert_eq!(candidates[0].weight, candidates[1].weight);
}

#[test]
fn k_one_gives_single_unit_weight_candidate() {
    let (scenario, graph) = drawer_post_reveal();
    let pipeline = pipeline_for(&scenario);
    let goal_entities: BTreeSet<String> = ["drawer".to_string()].into_iter().collect();
    let failure = exec_failure("drawer is closed", &["drawer"]);
    let diagnosis = diagnose(&failure, &goal_entities);
    let known: BTreeSet<String> = pipeline.inventory.entities.clone();
    let candidates = RuleBasedGenerator
        .generate(
            1,
            &failure,
            &diagnosis,
            &graph,
            &goal_entities,
            &known,
            &pipeline.inventory.robots,
            &BTreeSet::new(),
        )
        .unwrap();
    assert_eq!(candidates.len(), 1);
    assert_eq!(candidates[0].weight, 1.0);
}

#[test]
fn unknown_entity_yields_no_candidates() {
    let (scenario, graph) = drawer_post_reveal();
    let pipeline = pipeline_for(&scenario);
    let failure = exec_failure("poltergeist is closed", &["poltergeist"]);
    let diagnosis = diagnose(&failure, &BTreeSet::new());
    let known: BTreeSet<String> = pipeline.inventory.entities.clone();
    let err = RuleBasedGenerator
        .generate(
            3,
            &failure,
            &diagnosis,
            &graph,
            &BTreeSet::new(),
            &known,
            &pipeline.inventory.robots,
            &BTreeSet::new(),
        )
        .unwrap_err();
    assert_eq!(err, ReplanError::NoCandidates);
}

fn eval(delta_tag: &str, p: f64, dc: Option<i64>, lambda: f64) -> CandidateEvaluation {
    let hypothesis = Hypothesis {
        delta: GraphDelta::additions_only(vec![(
            SubgraphKind::Property,
            Triple::new(delta_tag, "has_property", "openable").unwrap(),
        )]),
        weight: p,
        rationale: String::new(),
    };
    CandidateEvaluation { hypothesis, p, delta_cost: dc, plan: None, score: score(p, dc, lambda) }
}

#[test]
fn selection_matches_worked_example() {
    // p = (0.6, 0.4), raw deltas (2, 1) shift to denominators (9, 4) at
    // lambda 2: scores 0.0667 vs 0.1, so the second candidate wins.
    let evals = [eval("a", 0.6, Some(2), 2.0), eval("b", 0.4, Some(1), 2.0)];
    assert!((evals[0].score - 0.6 / 9.0).abs() < 1e-12);
    assert!((evals[1].score - 0.4 / 4.0).abs() < 1e-12);
    assert_eq!(score_and_select(&evals).unwrap(), 1);
}

#[test]
fn single_feasible_candidate_selected_regardless_of_cost() {
    let evals = [eval("a", 0.9, None, 2.0), eval("b", 0.1, Some(50), 2.0)];
    assert_eq!(score_and_select(&evals).unwrap(), 1);
}

#[test]
fn all_infeasible_is_selection_failed() {
    let evals = [eval("a", 0.6, None, 2.0), eval("b", 0.4, None, 2.0)];
    assert_eq!(score_and_select(&evals), Err(ReplanError::SelectionFailed));
}

#[test]
fn delta_cost_conventions() {
    assert_eq!(delta_cost(Some(4), 6), 2);
    assert_eq!(delta_cost(None, 3), 3);
    assert_eq!(delta_cost(Some(5), 4), -1);
    // Negative deltas shift to a unit denominator.
    assert_eq!(score(1.0, Some(-1), 2.0), 1.0);
}

#[test]
fn selection_matches_brute_force_oracle_on_random_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..2000 {
        let lambda = [0.0, 1.0, 2.0][rng.gen_range(0..3)];
        let n = rng.gen_range(1..8);
        let mut evals = Vec::new();
        for i in 0..n {
            let p = rng.gen_range(0.01..1.0);
            let dc = match rng.gen_range(0..4) {
                0 => None,
                1 => Some(rng.gen_range(-3..0)),
                _ => Some(rng.gen_range(0..12)),
            };
            evals.push(eval(&format!("e{i}"), p, dc, lambda));
        }
        // Independent argmax with the documented shift.
        let mut best: Option<usize> = None;
        for (i, e) in evals.iter().enumerate() {
            let s = match e.delta_cost {
                None => 0.0,
                Some(dc) => e.p / (((dc.max(0) + 1) as f64).powf(lambda)),
            };
            if s == 0.0 {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(j) => {
                    let sj = match evals[j].delta_cost {
                        None => 0.0,
                        Some(dc) => evals[j].p / (((dc.max(0) + 1) as f64).powf(lambda)),
                    };
                    let key_i = (s, e.p, std::cmp::Reverse(e.hypothesis.delta.canonical_string()));
                    let key_j =
                        (sj, evals[j].p, std::cmp::Reverse(evals[j].hypothesis.delta.canonical_string()));
                    if key_i > key_j {
                        Some(i)
                    } else {
                        Some(j)
                    }
                }
            };
        }
        match best {
            Some(want) => assert_eq!(score_and_select(&evals).unwrap(), want),
            None => assert_eq!(score_and_select(&evals), Err(ReplanError::SelectionFailed)),
        }
    }
}

#[test]
fn lambda_zero_reduces_to_argmax_p() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let n = rng.gen_range(2..6);
        let evals: Vec<CandidateEvaluation> = (0..n)
            .map(|i| eval(&format!("e{i}"), rng.gen_range(0.01..1.0), Some(rng.gen_range(0..10)), 0.0))
            .collect();
        let selected = score_and_select(&evals).unwrap();
        let max_p = evals.iter().map(|e| e.p).fold(f64::MIN, f64::max);
        assert_eq!(evals[selected].p, max_p);
    }
}

#[test]
fn score_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let dc = Some(rng.gen_range(0..10));
        let p_low = rng.gen_range(0.01..0.5);
        let p_high = p_low + rng.gen_range(0.01..0.5);
        // Equal cost: higher probability wins.
        let evals = [eval("a", p_low, dc, 2.0), eval("b", p_high, dc, 2.0)];
        assert_eq!(score_and_select(&evals).unwrap(), 1);
        // Equal probability: lower cost wins.
        let low_dc = rng.gen_range(0..5);
        let high_dc = low_dc + rng.gen_range(1..5);
        let evals = [eval("a", 0.5, Some(high_dc), 2.0), eval("b", 0.5, Some(low_dc), 2.0)];
        assert_eq!(score_and_select(&evals).unwrap(), 1);
    }
}

/// Drives the drawer scenario to its execution failure, applies the failure
/// observation, and returns everything the loop needs.
fn drawer_failure_setup() -> (
    Scenario,
    crate::sim::World,
    crate::kg::KnowledgeGraph,
    Failure,
    usize,
) {
    let scenario = Scenario::parse(DRAWER_RECOVERY).unwrap();
    let mut world = scenario.build_world().unwrap();
    let mut graph = scenario.initial_graph(&world).unwrap();
    let pipeline = pipeline_for(&scenario);
    let synthesized = pipeline.synthesize(&graph).unwrap();
    let task = ground(pipeline.domain, &synthesized.problem).unwrap();
    let (outcome, _) = plan_with_stats(&task, &PlannerConfig::with_mode(SearchMode::OptimalBfs));
    let p0 = outcome.found().expect("stale-open belief must yield a plan").clone();
    // The initial plan must not open the drawer (it believes it open).
    assert!(p0.actions.iter().all(|a| a.schema != "open"));
    let (_, err) = world.execute(&p0);
    let err = err.expect("putting into the closed drawer must fail");
    assert_eq!(err.detail, "drawer is closed");
    let reveal = world.observe_failure(&err);
    graph.apply_delta(&reveal);
    (scenario, world, graph, Failure::Exec(err), p0.cost())
}

#[test]
fn drawer_recovery_converges_in_one_iteration() {
    let (scenario, _world, mut graph, failure, base_cost) = drawer_failure_setup();
    let pipeline = pipeline_for(&scenario);
    let fresh_world = scenario.build_world().unwrap();
    let mut memo = BTreeSet::new();
    let mut nodes = 0u64;
    let success = replan_loop(
        &pipeline,
        &fresh_world,
        &mut graph,
        Some(base_cost),
        Some(failure),
        &ReplanConfig::default(),
        &RuleBasedGenerator,
        &mut memo,
        &mut nodes,
    )
    .expect("drawer recovery must converge");
    assert_eq!(success.iterations, 1);
    assert_eq!(success.committed.len(), 1);
    assert_eq!(
        success.committed[0].canonical_string(),
        "+property drawer has_property openable"
    );
    // The repaired plan opens the drawer before any put_in.
    let open_at = success.plan.actions.iter().position(|a| a.schema == "open").unwrap();
    let put_at = success.plan.actions.iter().position(|a| a.schema == "put_in").unwrap();
    assert!(open_at < put_at);
    // And it executes cleanly from the initial world.
    let mut replay = scenario.build_world().unwrap();
    let (_, err) = replay.execute(&success.plan);
    assert!(err.is_none(), "{err:?}");
    assert!(replay.goal_holds(&Triple::new("watch", "in", "drawer").unwrap()));
    assert!(replay.goal_holds(&Triple::new("keychain", "in", "drawer").unwrap()));
}

#[test]
fn no_error_entry_returns_inputs_unchanged() {
    let scenario = Scenario::parse(DRAWER_RECOVERY).unwrap();
    let world = scenario.build_world().unwrap();
    let mut graph = scenario.initial_graph(&world).unwrap();
    let before = graph.clone();
    let pipeline = pipeline_for(&scenario);
    let mut memo = BTreeSet::new();
    let mut nodes = 0u64;
    let success = replan_loop(
        &pipeline,
        &world,
        &mut graph,
        None,
        None,
        &ReplanConfig::default(),
        &RuleBasedGenerator,
        &mut memo,
        &mut nodes,
    )
    .expect("no-error entry must succeed");
    assert_eq!(success.iterations, 0);
    assert!(success.committed.is_empty());
    assert!(graph.same_content(&before));
}

/// Two closed drawers, both believed open: the dry-run probe surfaces the
/// second failure inside the loop, so convergence needs two iterations.
fn two_drawer_setup() -> (Scenario, crate::sim::World, crate::kg::KnowledgeGraph, Failure, usize)
{
    let scenario = Scenario::parse(TWO_DRAWERS).unwrap();
    let mut world = scenario.build_world().unwrap();
    let mut graph = scenario.initial_graph(&world).unwrap();
    let pipeline = pipeline_for(&scenario);
    let synthesized = pipeline.synthesize(&graph).unwrap();
    let task = ground(pipeline.domain, &synthesized.problem).unwrap();
    let (outcome, _) = plan_with_stats(&task, &PlannerConfig::with_mode(SearchMode::OptimalBfs));
    let p0 = outcome.found().unwrap().clone();
    let (_, err) = world.execute(&p0);
    let err = err.expect("first put_in must fail");
    let reveal = world.observe_failure(&err);
    graph.apply_delta(&reveal);
    (scenario, world, graph, Failure::Exec(err), p0.cost())
}

#[test]
fn two_fact_fixture_converges_in_two_iterations_with_dry_run() {
    let (scenario, _world, mut graph, failure, base_cost) = two_drawer_setup();
    let pipeline = pipeline_for(&scenario);
    let fresh_world = scenario.build_world().unwrap();
    let cfg = ReplanConfig { dry_run_probe: true, ..Default::default() };
    let mut memo = BTreeSet::new();
    let mut nodes = 0u64;
    let success = replan_loop(
        &pipeline,
        &fresh_world,
        &mut graph,
        Some(base_cost),
        Some(failure),
        &cfg,
        &RuleBasedGenerator,
        &mut memo,
        &mut nodes,
    )
    .expect("two-fact fixture must converge");
    assert_eq!(success.iterations, 2);
    let committed: BTreeSet<String> =
        success.committed.iter().map(|d| d.canonical_string()).collect();
    assert_eq!(
        committed,
        [
            "+property left_drawer has_property openable".to_string(),
            "+property right_drawer has_property openable".to_string(),
        ]
        .into_iter()
        .collect()
    );
}

#[test]
fn two_fact_fixture_exhausts_with_budget_one() {
    let (scenario, _world, mut graph, failure, base_cost) = two_drawer_setup();
    let pipeline = pipeline_for(&scenario);
    let fresh_world = scenario.build_world().unwrap();
    let cfg = ReplanConfig { dry_run_probe: true, max_iterations: 1, ..Default::default() };
    let mut memo = BTreeSet::new();
    let mut nodes = 0u64;
    let exhausted = replan_loop(
        &pipeline,
        &fresh_world,
        &mut graph,
        Some(base_cost),
        Some(failure),
        &cfg,
        &RuleBasedGenerator,
        &mut memo,
        &mut nodes,
    )
    .unwrap_err();
    assert_eq!(exhausted.reason, ExhaustedReason::MaxIterations);
    assert_eq!(exhausted.iterations, 1);
}

#[test]
fn committed_hypotheses_never_repeat_and_weights_normalize() {
    let (scenario, _world, mut graph, failure, base_cost) = two_drawer_setup();
    let pipeline = pipeline_for(&scenario);
    let fresh_world = scenario.build_world().unwrap();
    let cfg = ReplanConfig { dry_run_probe: true, ..Default::default() };
    let mut memo = BTreeSet::new();
    let mut nodes = 0u64;
    let success = replan_loop(
        &pipeline,
        &fresh_world,
        &mut graph,
        Some(base_cost),
        Some(failure),
        &cfg,
        &RuleBasedGenerator,
        &mut memo,
        &mut nodes,
    )
    .unwrap();
    let mut seen = BTreeSet::new();
    for delta in &success.committed {
        assert!(seen.insert(delta.canonical_string()), "hypothesis committed twice");
    }
    for record in &success.log {
        let total_p: f64 = record.candidates.iter().map(|c| c.p).sum();
        assert!((total_p - 1.0).abs() <= 1e-9, "batch probabilities must normalize");
        for c in &record.candidates {
            assert!(c.pi > 0.0 && c.pi <= 1.0);
            // Infeasible iff no finite delta cost iff zero score.
            assert_eq!(c.delta_cost.is_none(), c.score == 0.0);
        }
    }
}

#[test]
fn graph_grows_monotonically_under_default_generator() {
    let (scenario, _world, mut graph, failure, base_cost) = two_drawer_setup();
    let pipeline = pipeline_for(&scenario);
    let fresh_world = scenario.build_world().unwrap();
    let cfg = ReplanConfig { dry_run_probe: true, ..Default::default() };
    let mut memo = BTreeSet::new();
    let mut nodes = 0u64;
    let before = graph.len();
    let _ = replan_loop(
        &pipeline,
        &fresh_world,
        &mut graph,
        Some(base_cost),
        Some(failure),
        &cfg,
        &RuleBasedGenerator,
        &mut memo,
        &mut nodes,
    )
    .unwrap();
    assert!(graph.len() >= before);
}
