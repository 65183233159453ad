//! Hypothesis-scored replanning: diagnose a failure, generate top-k
//! candidate knowledge-graph fixes with weights, evaluate each by graph
//! update, resynthesis, and replanning, select by the probability-cost
//! objective, and iterate under budget.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::household;
use crate::kg::{GraphDelta, KnowledgeGraph, SubgraphKind, Triple, TriplePattern};
use crate::pddl::ground;
use crate::planner::{plan_with_stats, validate, NotFoundReason, PlanOutcome, Plan, PlannerConfig};
use crate::sim::{ExecError, ExecErrorClass, World};
use crate::synthesis::{Pipeline, SynthesisError, SynthesizedProblem};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplanError {
    #[error("no candidate fixes could be generated")]
    NoCandidates,
    #[error("every candidate was infeasible")]
    SelectionFailed,
}

/// The error signal Algorithm-style replanning consumes: an execution
/// failure, a planner failure, or a synthesis (perception-class) failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Failure {
    Exec(ExecError),
    NoPlan(NotFoundReason),
    Synthesis { message: String, missing_location: Option<String> },
}

impl Failure {
    pub fn from_synthesis(err: &SynthesisError) -> Self {
        let missing_location = match err {
            SynthesisError::MissingLocation(e) => Some(e.clone()),
            _ => None,
        };
        Failure::Synthesis { message: err.to_string(), missing_location }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Exec(e) => e.to_string(),
            Failure::NoPlan(reason) => format!("no plan found ({reason})"),
            Failure::Synthesis { message, .. } => message.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticClass {
    Planner,
    Execution,
    Perception,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnosis {
    pub class: DiagnosticClass,
    pub focus: Vec<String>,
}

/// Maps a failure to its diagnostic class and focus entities. Planner-class
/// failures focus on the goal entities (the error itself names none).
pub fn diagnose(failure: &Failure, goal_entities: &BTreeSet<String>) -> Diagnosis {
    match failure {
        Failure::Exec(e) => match e.class {
            ExecErrorClass::PreconditionViolation => Diagnosis {
                class: DiagnosticClass::Execution,
                focus: e.focus.clone(),
            },
            ExecErrorClass::ObjectNotFound => Diagnosis {
                class: DiagnosticClass::Perception,
                focus: e.focus.clone(),
            },
            ExecErrorClass::PlannerFailure => Diagnosis {
                class: DiagnosticClass::Planner,
                focus: goal_entities.iter().cloned().collect(),
            },
        },
        Failure::NoPlan(_) => Diagnosis {
            class: DiagnosticClass::Planner,
            focus: goal_entities.iter().cloned().collect(),
        },
        Failure::Synthesis { missing_location: Some(entity), .. } => Diagnosis {
            class: DiagnosticClass::Perception,
            focus: vec![entity.clone()],
        },
        Failure::Synthesis { .. } => Diagnosis {
            class: DiagnosticClass::Planner,
            focus: goal_entities.iter().cloned().collect(),
        },
    }
}

/// A candidate knowledge-graph fix with its proposal weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub delta: GraphDelta,
    /// Proposal weight in (0, 1].
    pub weight: f64,
    pub rationale: String,
}

#[derive(Debug, Clone)]
pub struct ReplanConfig {
    pub k: usize,
    pub lambda: f64,
    pub max_iterations: usize,
    pub planner: PlannerConfig,
    /// Opt-in convergence probe: dry-run the candidate plan on a copy of the
    /// world instead of relying on symbolic validation alone.
    pub dry_run_probe: bool,
}

impl Default for ReplanConfig {
    fn default() -> Self {
        ReplanConfig {
            k: 5,
            lambda: 2.0,
            max_iterations: 10,
            planner: PlannerConfig::default(),
            dry_run_probe: false,
        }
    }
}

/// One scored candidate: normalized probability, plan-cost delta (None when
/// no valid plan exists), and the probability-cost score.
#[derive(Debug, Clone)]
pub struct CandidateEvaluation {
    pub hypothesis: Hypothesis,
    pub p: f64,
    pub delta_cost: Option<i64>,
    pub plan: Option<Plan>,
    pub score: f64,
}

/// Plan-cost delta: new minus base when the base problem was solvable,
/// otherwise the new plan's full cost.
pub fn delta_cost(base_cost: Option<usize>, new_cost: usize) -> i64 {
    match base_cost {
        Some(base) => new_cost as i64 - base as i64,
        None => new_cost as i64,
    }
}

/// The probability-cost objective with the documented shift: the effective
/// denominator is (max(delta_cost, 0) + 1)^lambda, so negative deltas and
/// unsolvable bases stay well defined. Infeasible candidates score zero.
pub fn score(p: f64, delta_cost: Option<i64>, lambda: f64) -> f64 {
    match delta_cost {
        None => 0.0,
        Some(dc) => p / ((dc.max(0) + 1) as f64).powf(lambda),
    }
}

/// Argmax of score; ties break toward higher p, then the lexicographically
/// smaller hypothesis string. Fails when every candidate scores zero.
pub fn score_and_select(
    evaluations: &[CandidateEvaluation],
) -> Result<usize, ReplanError> {
    let mut best: Option<usize> = None;
    for (i, eval) in evaluations.iter().enumerate() {
        if eval.score == 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some(j) => {
                let other = &evaluations[j];
                eval.score > other.score
                    || (eval.score == other.score && eval.p > other.p)
                    || (eval.score == other.score
                        && eval.p == other.p
                        && eval.hypothesis.delta.canonical_string()
                            < other.hypothesis.delta.canonical_string())
            }
        };
        if better {
            best = Some(i);
        }
    }
    best.ok_or(ReplanError::SelectionFailed)
}

/// Candidate-fix generation behind one interface; the deterministic
/// rule-based generator is the reference implementation, and a remote
/// language-model generator may replace it.
pub trait CandidateGenerator {
    fn generate(
        &self,
        k: usize,
        failure: &Failure,
        diagnosis: &Diagnosis,
        view: &KnowledgeGraph,
        goal_entities: &BTreeSet<String>,
        known_names: &BTreeSet<String>,
        robots: &BTreeSet<String>,
        memo: &BTreeSet<String>,
    ) -> Result<Vec<Hypothesis>, ReplanError>;
}

/// Enumerates single-fact additions relevant to the diagnostic class, ranked
/// by a fixed relevance scoring: focus-entity match 3, goal-entity match 2,
/// capability match 1; weights are proportional to scores.
#[derive(Debug, Clone, Default)]
pub struct RuleBasedGenerator;

struct RankedCandidate {
    priority: usize,
    relevance: u32,
    kind: SubgraphKind,
    triple: Triple,
    rationale: String,
}

fn opposite_state(state: &str) -> Option<&'static str> {
    match state {
        "open" => Some("closed"),
        "closed" => Some("open"),
        "on" => Some("off"),
        "off" => Some("on"),
        _ => None,
    }
}

fn known_locations(view: &KnowledgeGraph) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for t in view.subgraph(SubgraphKind::Reach) {
        if t.relation == "connected" {
            out.insert(t.subject.clone());
            out.insert(t.object.clone());
        } else if t.relation == "at_location" {
            out.insert(t.object.clone());
        }
    }
    out
}

fn has_triple(view: &KnowledgeGraph, kind: SubgraphKind, t: &Triple) -> bool {
    view.contains(kind, t)
}

impl RuleBasedGenerator {
    fn relevance(
        triple: &Triple,
        focus: &[String],
        goal_entities: &BTreeSet<String>,
    ) -> u32 {
        let mentions = |name: &str| triple.subject == name || triple.object == name;
        if focus.iter().any(|f| mentions(f)) {
            3
        } else if goal_entities.iter().any(|g| mentions(g)) {
            2
        } else {
            1
        }
    }

    /// Priority bucket from error keywords: fixes touching the state family
    /// named by the message come first.
    fn priority(triple: &Triple, failure: &Failure) -> usize {
        let message = failure.message();
        let tokens: BTreeSet<&str> = message
            .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .filter(|t| !t.is_empty())
            .collect();
        let open_family = tokens.contains("open") || tokens.contains("closed");
        let toggle_family = tokens.contains("on") || tokens.contains("off");
        let subject_matter = [triple.relation.as_str(), triple.object.as_str()];
        let in_open_family = subject_matter
            .iter()
            .any(|s| matches!(*s, "openable" | "open" | "closed"));
        let in_toggle_family =
            subject_matter.iter().any(|s| matches!(*s, "toggleable" | "on" | "off"));
        if (open_family && in_open_family) || (toggle_family && in_toggle_family) {
            0
        } else {
            1
        }
    }
}

impl CandidateGenerator for RuleBasedGenerator {
    fn generate(
        &self,
        k: usize,
        failure: &Failure,
        diagnosis: &Diagnosis,
        view: &KnowledgeGraph,
        goal_entities: &BTreeSet<String>,
        known_names: &BTreeSet<String>,
        robots: &BTreeSet<String>,
        memo: &BTreeSet<String>,
    ) -> Result<Vec<Hypothesis>, ReplanError> {
        let mut ranked: Vec<RankedCandidate> = Vec::new();
        let graph_names = view.entities();
        let focus_known: Vec<String> = diagnosis
            .focus
            .iter()
            .filter(|f| known_names.contains(*f) || graph_names.contains(*f))
            .cloned()
            .collect();

        let mut push = |kind: SubgraphKind, triple: Triple, rationale: String| {
            if has_triple(view, kind, &triple) {
                return;
            }
            let delta = GraphDelta::additions_only(vec![(kind, triple.clone())]);
            if memo.contains(&delta.canonical_string()) {
                return;
            }
            ranked.push(RankedCandidate {
                priority: RuleBasedGenerator::priority(&triple, failure),
                relevance: RuleBasedGenerator::relevance(&triple, &diagnosis.focus, goal_entities),
                kind,
                triple,
                rationale,
            });
        };

        match diagnosis.class {
            DiagnosticClass::Execution => {
                let detail = match failure {
                    Failure::Exec(e) => e.detail.clone(),
                    _ => failure.message(),
                };
                for f in &focus_known {
                    // Message-derived corrections: the error names the state
                    // (or position) the world actually exhibits.
                    for state in household::STATES {
                        if detail == format!("{f} is {state}") {
                            push(
                                SubgraphKind::Property,
                                Triple::new(f, "has_state", state).unwrap(),
                                format!("{f} is actually {state}"),
                            );
                        }
                        if detail == format!("{f} is not {state}") {
                            if let Some(opposite) = opposite_state(state) {
                                push(
                                    SubgraphKind::Property,
                                    Triple::new(f, "has_state", opposite).unwrap(),
                                    format!("{f} is actually {opposite}"),
                                );
                            }
                        }
                    }
                    if let Some(rest) = detail.strip_prefix(&format!("{f} is at ")) {
                        if let Some((actual, _)) = rest.split_once(", not ") {
                            push(
                                SubgraphKind::Reach,
                                Triple::new(f, "at_location", actual).unwrap(),
                                format!("{f} is actually at {actual}"),
                            );
                        }
                    }
                    if robots.contains(f) {
                        continue;
                    }
                    for affordance in household::AFFORDANCES {
                        push(
                            SubgraphKind::Property,
                            Triple::new(f, "has_property", affordance).unwrap(),
                            format!("{f} may be {affordance}"),
                        );
                    }
                }
            }
            DiagnosticClass::Perception => {
                for f in &focus_known {
                    for location in known_locations(view) {
                        push(
                            SubgraphKind::Reach,
                            Triple::new(f, "at_location", &location).unwrap(),
                            format!("{f} may be at {location}"),
                        );
                    }
                }
            }
            DiagnosticClass::Planner => {
                for g in &focus_known {
                    if robots.contains(g) {
                        continue;
                    }
                    for affordance in household::AFFORDANCES {
                        push(
                            SubgraphKind::Property,
                            Triple::new(g, "has_property", affordance).unwrap(),
                            format!("{g} may be {affordance}"),
                        );
                    }
                    let located = view
                        .query(
                            &TriplePattern::new(Some(g), Some("at_location"), None),
                            Some(SubgraphKind::Reach),
                        )
                        .is_empty();
                    if located {
                        for location in known_locations(view) {
                            push(
                                SubgraphKind::Reach,
                                Triple::new(g, "at_location", &location).unwrap(),
                                format!("{g} may be at {location}"),
                            );
                        }
                    }
                }
                for robot in robots {
                    for capability in household::CAPABILITIES {
                        push(
                            SubgraphKind::Property,
                            Triple::new(robot, "has_capability", capability).unwrap(),
                            format!("{robot} may have capability {capability}"),
                        );
                    }
                }
            }
        }

        ranked.sort_by(|a, b| {
            a.priority
                .cmp(&b.priority)
                .then(b.relevance.cmp(&a.relevance))
                .then(a.triple.to_string().cmp(&b.triple.to_string()))
        });
        ranked.truncate(k);
        if ranked.is_empty() {
            return Err(ReplanError::NoCandidates);
        }
        let total: u32 = ranked.iter().map(|c| c.relevance).sum();
        Ok(ranked
            .into_iter()
            .map(|c| Hypothesis {
                delta: GraphDelta::additions_only(vec![(c.kind, c.triple)]),
                weight: f64::from(c.relevance) / f64::from(total),
                rationale: c.rationale,
            })
            .collect())
    }
}

/// One structured log line per iteration of the loop.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub error_class: DiagnosticClass,
    pub error: String,
    pub candidates: Vec<CandidateRecord>,
    pub selected: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateRecord {
    pub delta: String,
    pub rationale: String,
    pub pi: f64,
    pub p: f64,
    pub delta_cost: Option<i64>,
    pub score: f64,
}

#[derive(Debug)]
pub struct ReplanSuccess {
    pub synthesized: SynthesizedProblem,
    pub plan: Plan,
    pub iterations: usize,
    pub committed: Vec<GraphDelta>,
    pub log: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustedReason {
    MaxIterations,
    NoCandidates,
    SelectionFailed,
}

#[derive(Debug)]
pub struct ReplanExhausted {
    pub reason: ExhaustedReason,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
}

/// Evaluates one hypothesis: apply to a temporary graph, resynthesize,
/// replan, and compute the cost delta against the current base problem.
fn evaluate(
    pipeline: &Pipeline,
    graph: &KnowledgeGraph,
    hypothesis: Hypothesis,
    p: f64,
    base_cost: Option<usize>,
    cfg: &ReplanConfig,
    planner_nodes: &mut u64,
) -> CandidateEvaluation {
    let mut temp = graph.clone();
    temp.apply_delta(&hypothesis.delta);
    let outcome = pipeline.synthesize(&temp).ok().and_then(|sp| {
        ground(pipeline.domain, &sp.problem).ok().and_then(|task| {
            let (outcome, stats) = plan_with_stats(&task, &cfg.planner);
            *planner_nodes += stats.expanded;
            match outcome {
                PlanOutcome::Found(plan) => Some(plan),
                PlanOutcome::NotFound(_) => None,
            }
        })
    });
    match outcome {
        Some(plan) => {
            let dc = delta_cost(base_cost, plan.cost());
            let s = score(p, Some(dc), cfg.lambda);
            CandidateEvaluation { hypothesis, p, delta_cost: Some(dc), plan: Some(plan), score: s }
        }
        None => CandidateEvaluation { hypothesis, p, delta_cost: None, plan: None, score: 0.0 },
    }
}

/// The full iterative repair loop. Mutates `graph` by committing selected
/// hypotheses; `memo` carries committed-delta strings across invocations so
/// the same fix is never committed twice. Returns the repaired problem and
/// plan, or the exhaustion record with the full iteration log.
#[allow(clippy::too_many_arguments)]
pub fn replan_loop(
    pipeline: &Pipeline,
    world: &World,
    graph: &mut KnowledgeGraph,
    base_plan_cost: Option<usize>,
    e0: Option<Failure>,
    cfg: &ReplanConfig,
    generator: &dyn CandidateGenerator,
    memo: &mut BTreeSet<String>,
    planner_nodes: &mut u64,
) -> Result<ReplanSuccess, ReplanExhausted> {
    let mut log: Vec<IterationRecord> = Vec::new();
    let mut committed: Vec<GraphDelta> = Vec::new();
    let mut iterations = 0usize;

    let goal_entities: BTreeSet<String> = pipeline
        .synthesize_goal_only()
        .map(|g| g.entities(&pipeline.inventory))
        .unwrap_or_default();

    let mut error = match e0 {
        Some(e) => e,
        None => {
            // No error: the loop body never runs; return the current
            // synthesis and plan unchanged.
            return finish(pipeline, graph, cfg, planner_nodes, iterations, committed, log)
                .map_err(|reason| ReplanExhausted { reason, iterations, log: Vec::new() });
        }
    };
    let mut base_cost = base_plan_cost;

    loop {
        if iterations >= cfg.max_iterations {
            return Err(ReplanExhausted {
                reason: ExhaustedReason::MaxIterations,
                iterations,
                log,
            });
        }
        iterations += 1;
        let diagnosis = diagnose(&error, &goal_entities);
        let view = pipeline.view(graph);
        let known_names: BTreeSet<String> = pipeline
            .inventory
            .entities
            .iter()
            .chain(&pipeline.inventory.robots)
            .cloned()
            .collect();
        let candidates = match generator.generate(
            cfg.k,
            &error,
            &diagnosis,
            &view,
            &goal_entities,
            &known_names,
            &pipeline.inventory.robots,
            memo,
        ) {
            Ok(c) => c,
            Err(ReplanError::NoCandidates) => {
                return Err(ReplanExhausted {
                    reason: ExhaustedReason::NoCandidates,
                    iterations,
                    log,
                })
            }
            Err(ReplanError::SelectionFailed) => unreachable!("generator cannot select"),
        };

        // Normalize proposal weights into probabilities (Alg. line 5).
        let total_weight: f64 = candidates.iter().map(|h| h.weight).sum();
        let probabilities: Vec<f64> =
            candidates.iter().map(|h| h.weight / total_weight).collect();
        debug_assert!((probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-9);

        let evaluations: Vec<CandidateEvaluation> = candidates
            .into_iter()
            .zip(&probabilities)
            .map(|(h, &p)| evaluate(pipeline, graph, h, p, base_cost, cfg, planner_nodes))
            .collect();
        let candidate_records: Vec<CandidateRecord> = evaluations
            .iter()
            .map(|e| CandidateRecord {
                delta: e.hypothesis.delta.canonical_string(),
                rationale: e.hypothesis.rationale.clone(),
                pi: e.hypothesis.weight,
                p: e.p,
                delta_cost: e.delta_cost,
                score: e.score,
            })
            .collect();

        let selected = match score_and_select(&evaluations) {
            Ok(i) => i,
            Err(ReplanError::SelectionFailed) => {
                log.push(IterationRecord {
                    iteration: iterations,
                    error_class: diagnosis.class,
                    error: error.message(),
                    candidates: candidate_records,
                    selected: None,
                });
                return Err(ReplanExhausted {
                    reason: ExhaustedReason::SelectionFailed,
                    iterations,
                    log,
                });
            }
            Err(ReplanError::NoCandidates) => unreachable!("selection cannot lack candidates"),
        };
        let chosen = evaluations[selected].hypothesis.clone();
        graph.apply_delta(&chosen.delta);
        memo.insert(chosen.delta.canonical_string());
        committed.push(chosen.delta.clone());
        log.push(IterationRecord {
            iteration: iterations,
            error_class: diagnosis.class,
            error: error.message(),
            candidates: candidate_records,
            selected: Some(chosen.delta.canonical_string()),
        });

        // Regenerate the final problem and plan from the committed graph.
        let synthesized = match pipeline.synthesize(graph) {
            Ok(sp) => sp,
            Err(e) => {
                error = Failure::from_synthesis(&e);
                base_cost = None;
                continue;
            }
        };
        let task = match ground(pipeline.domain, &synthesized.problem) {
            Ok(t) => t,
            Err(e) => {
                error = Failure::Synthesis { message: e.to_string(), missing_location: None };
                base_cost = None;
                continue;
            }
        };
        let (outcome, stats) = plan_with_stats(&task, &cfg.planner);
        *planner_nodes += stats.expanded;
        let plan = match outcome {
            PlanOutcome::Found(p) => p,
            PlanOutcome::NotFound(reason) => {
                error = Failure::NoPlan(reason);
                base_cost = None;
                continue;
            }
        };
        // Convergence probe: symbolic validation, plus an optional
        // simulator dry-run on a copy of the world.
        if !validate(&plan, &task).is_valid() {
            error = Failure::NoPlan(NotFoundReason::Exhausted);
            base_cost = None;
            continue;
        }
        if cfg.dry_run_probe {
            let mut probe_world = world.clone();
            let (_, exec_err) = probe_world.execute(&plan);
            if let Some(e) = exec_err {
                // The probe observed a failure; fold its state reveals into
                // the graph just as real execution feedback would.
                let reveal = probe_world.observe_failure(&e);
                graph.apply_delta(&reveal);
                base_cost = Some(plan.cost());
                error = Failure::Exec(e);
                continue;
            }
        }
        return Ok(ReplanSuccess { synthesized, plan, iterations, committed, log });
    }
}

/// Terminal synthesis + plan for the no-error entry.
fn finish(
    pipeline: &Pipeline,
    graph: &KnowledgeGraph,
    cfg: &ReplanConfig,
    planner_nodes: &mut u64,
    iterations: usize,
    committed: Vec<GraphDelta>,
    log: Vec<IterationRecord>,
) -> Result<ReplanSuccess, ExhaustedReason> {
    let synthesized =
        pipeline.synthesize(graph).map_err(|_| ExhaustedReason::NoCandidates)?;
    let task =
        ground(pipeline.domain, &synthesized.problem).map_err(|_| ExhaustedReason::NoCandidates)?;
    let (outcome, stats) = plan_with_stats(&task, &cfg.planner);
    *planner_nodes += stats.expanded;
    match outcome {
        PlanOutcome::Found(plan) => {
            Ok(ReplanSuccess { synthesized, plan, iterations, committed, log })
        }
        PlanOutcome::NotFound(_) => Err(ExhaustedReason::NoCandidates),
    }
}

#[cfg(test)]
mod tests;
