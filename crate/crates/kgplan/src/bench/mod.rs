//! Scenario suite runner: drives the full pipeline (graph derivation,
//! synthesis, planning, deordered execution, observation, replanning) per
//! variant and computes TCR/GCR/ER/PT/ET.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::household;
use crate::kg::{GraphDelta, KnowledgeGraph, SubgraphKind, Triple, TriplePattern};
use crate::pddl::{ground, GroundAction};
use crate::planner::{deorder, plan_with_stats, PlanOutcome, PlannerConfig};
use crate::replan::{
    replan_loop, Failure, IterationRecord, ReplanConfig, RuleBasedGenerator,
};
use crate::sim::scenario::Scenario;
use crate::sim::World;
use crate::synthesis::{Ablation, Inventory, Pipeline, TaskDescription};

/// Virtual planning-time rate: seconds charged per search node expanded.
/// Keeps PT deterministic and byte-stable across runs.
const SECONDS_PER_NODE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("empty suite")]
    EmptySuite,
    #[error("invalid scenario {path}: {message}")]
    ScenarioInvalid { path: String, message: String },
    #[error("cannot read suite: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse suite: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Run variants: the ablation rows plus the no-discovery condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoReplan,
    NoReach,
    NoReachProperty,
    NoGraphs,
    PartialObs,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoReplan,
        Variant::NoReach,
        Variant::NoReachProperty,
        Variant::NoGraphs,
        Variant::PartialObs,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Variant::Full),
            "no_replan" => Some(Variant::NoReplan),
            "no_reach" => Some(Variant::NoReach),
            "no_reach_property" => Some(Variant::NoReachProperty),
            "no_graphs" => Some(Variant::NoGraphs),
            "partial_obs" => Some(Variant::PartialObs),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoReplan => "no_replan",
            Variant::NoReach => "no_reach",
            Variant::NoReachProperty => "no_reach_property",
            Variant::NoGraphs => "no_graphs",
            Variant::PartialObs => "partial_obs",
        }
    }

    fn ablation(self) -> Ablation {
        match self {
            Variant::NoReach => Ablation { drop_reach: true, ..Default::default() },
            Variant::NoReachProperty => {
                Ablation { drop_reach: true, drop_property: true, ..Default::default() }
            }
            Variant::NoGraphs => {
                Ablation { drop_relation: true, drop_property: true, drop_reach: true }
            }
            _ => Ablation::default(),
        }
    }

    fn replanning_enabled(self) -> bool {
        self != Variant::NoReplan
    }

    fn discovery_enabled(self) -> bool {
        self != Variant::PartialObs
    }
}

/// Per-scenario result row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioRecord {
    pub scenario: String,
    pub variant: Variant,
    pub success: bool,
    pub goal_total: usize,
    pub goal_achieved: usize,
    pub actions_planned: usize,
    pub actions_ok: usize,
    pub pt_secs: f64,
    pub et_ticks: u64,
    pub replan_iters: usize,
    /// First failed action (canonical string) and its detail, if any.
    pub first_failure: Option<(String, String)>,
}

/// Aggregated metrics, all percentages in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub tcr: f64,
    pub gcr: f64,
    pub er: f64,
    pub mean_pt: f64,
    pub mean_et: f64,
}

/// Computes the aggregate metrics. Zero denominators fall back to 100 (rate
/// metrics) by convention.
pub fn compute_metrics(records: &[ScenarioRecord]) -> Result<MetricsReport, BenchError> {
    if records.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    let n = records.len() as f64;
    let successes = records.iter().filter(|r| r.success).count() as f64;
    let goal_total: usize = records.iter().map(|r| r.goal_total).sum();
    let goal_achieved: usize = records.iter().map(|r| r.goal_achieved).sum();
    let planned: usize = records.iter().map(|r| r.actions_planned).sum();
    let ok: usize = records.iter().map(|r| r.actions_ok).sum();
    let gcr = if goal_total == 0 {
        100.0
    } else {
        100.0 * goal_achieved as f64 / goal_total as f64
    };
    let er = if planned == 0 { 100.0 } else { 100.0 * ok as f64 / planned as f64 };
    Ok(MetricsReport {
        tcr: 100.0 * successes / n,
        gcr,
        er,
        mean_pt: records.iter().map(|r| r.pt_secs).sum::<f64>() / n,
        mean_et: records.iter().map(|r| r.et_ticks as f64).sum::<f64>() / n,
    })
}

/// One JSONL line of the replan log.
#[derive(Debug, Clone, Serialize)]
pub struct LogLine {
    pub scenario: String,
    pub variant: Variant,
    pub round: usize,
    #[serde(flatten)]
    pub record: IterationRecord,
}

#[derive(Debug)]
pub struct ScenarioRun {
    pub record: ScenarioRecord,
    pub log: Vec<LogLine>,
}

/// Maps an executed action's symbolic effects back onto the knowledge graph
/// so resynthesis starts from the current world state. Extra placement
/// triples are cleared on pickup (the graph layer knows lifting an object
/// removes it from its container or surface).
fn propagate_effects(graph: &mut KnowledgeGraph, action: &GroundAction) {
    let args = &action.args;
    let mut delta_add: Vec<(SubgraphKind, Triple)> = Vec::new();
    let mut delta_remove: Vec<(SubgraphKind, Triple)> = Vec::new();
    match action.schema.as_str() {
        "goto" => {
            delta_add.push((
                SubgraphKind::Reach,
                Triple::new(&args[0], "at_location", &args[2]).unwrap(),
            ));
        }
        "pickup" => {
            let (robot, item) = (&args[0], &args[1]);
            delta_add
                .push((SubgraphKind::Relation, Triple::new(robot, "holding", item).unwrap()));
            delta_remove.push((
                SubgraphKind::Property,
                Triple::new(robot, "has_property", "hand_free").unwrap(),
            ));
            for (kind, triple) in graph.query(&TriplePattern::new(Some(item), None, None), None) {
                if matches!(triple.relation.as_str(), "at_location" | "in" | "on")
                    && triple.subject == *item
                {
                    delta_remove.push((kind, triple));
                }
            }
        }
        "put_in" | "put_on" => {
            let (robot, item, target, location) = (&args[0], &args[1], &args[2], &args[3]);
            let relation = if action.schema == "put_in" { "in" } else { "on" };
            delta_remove
                .push((SubgraphKind::Relation, Triple::new(robot, "holding", item).unwrap()));
            delta_add
                .push((SubgraphKind::Relation, Triple::new(item, relation, target).unwrap()));
            delta_add.push((
                SubgraphKind::Reach,
                Triple::new(item, "at_location", location).unwrap(),
            ));
            delta_add.push((
                SubgraphKind::Property,
                Triple::new(robot, "has_property", "hand_free").unwrap(),
            ));
        }
        "open" | "close" | "toggle_on" | "toggle_off" | "slice" => {
            let state = match action.schema.as_str() {
                "open" => "open",
                "close" => "closed",
                "toggle_on" => "on",
                "toggle_off" => "off",
                _ => "sliced",
            };
            delta_add.push((
                SubgraphKind::Property,
                Triple::new(&args[1], "has_state", state).unwrap(),
            ));
        }
        _ => {}
    }
    let delta = GraphDelta::new(delta_add.into_iter().collect(), delta_remove.into_iter().collect())
        .expect("effect deltas never overlap");
    graph.apply_delta(&delta);
}

/// Walks one robot toward unobserved locations (breadth-first from its
/// position) and observes each until something new is revealed. Returns the
/// number of movement ticks spent and whether the graph changed.
fn observation_sweep(world: &mut World, graph: &mut KnowledgeGraph) -> (u64, bool) {
    let mut ticks = 0u64;
    let robot_names: Vec<String> = world.robots.keys().cloned().collect();
    for robot in &robot_names {
        // Try the current location first.
        let delta = world.observe(robot);
        if !delta.is_empty() && graph.apply_delta(&delta) {
            return (ticks, true);
        }
        // Breadth-first over connectivity, tracking paths.
        let start = world.robots[robot].location.clone();
        let mut parents: BTreeMap<String, String> = BTreeMap::new();
        let mut queue = VecDeque::from([start.clone()]);
        let mut seen: BTreeSet<String> = [start.clone()].into_iter().collect();
        let mut targets: Vec<String> = Vec::new();
        while let Some(here) = queue.pop_front() {
            for (a, b) in world.connections.iter() {
                if *a == here && seen.insert(b.clone()) {
                    parents.insert(b.clone(), here.clone());
                    targets.push(b.clone());
                    queue.push_back(b.clone());
                }
            }
        }
        for target in targets {
            // Rebuild the path from the current robot position.
            let mut path = vec![target.clone()];
            let mut cur = target.clone();
            while let Some(p) = parents.get(&cur) {
                path.push(p.clone());
                cur = p.clone();
            }
            path.reverse();
            let mut moved = false;
            for window in path.windows(2) {
                let at = world.robots[robot].location.clone();
                if at != window[0] {
                    continue;
                }
                let step = GroundAction {
                    schema: "goto".into(),
                    args: vec![robot.clone(), window[0].clone(), window[1].clone()],
                    pre: Default::default(),
                    add: Default::default(),
                    del: Default::default(),
                };
                if world.step(&step).is_ok() {
                    ticks += 1;
                    moved = true;
                    propagate_effects(graph, &step);
                }
            }
            let delta = world.observe(robot);
            if !delta.is_empty() && graph.apply_delta(&delta) {
                return (ticks, true);
            }
            let _ = moved;
        }
    }
    (ticks, false)
}

/// Runs one scenario under a variant. Deterministic for a fixed seed (the
/// seed is recorded but the rule-based pipeline draws no randomness).
pub fn run_scenario(
    scenario: &Scenario,
    variant: Variant,
    planner_cfg: &PlannerConfig,
    replan_cfg: &ReplanConfig,
) -> Result<ScenarioRun, BenchError> {
    let mut world = scenario.build_world().map_err(|e| BenchError::ScenarioInvalid {
        path: scenario.name.clone(),
        message: e.to_string(),
    })?;
    let mut graph =
        scenario.initial_graph(&world).map_err(|e| BenchError::ScenarioInvalid {
            path: scenario.name.clone(),
            message: e.to_string(),
        })?;

    let inventory = Inventory {
        entities: scenario.inventory(),
        robots: scenario.robots(),
        locations: world.locations.clone(),
    };
    let pipeline = Pipeline::new(
        household::domain(),
        TaskDescription {
            text: scenario.task_text.clone(),
            structured_goal: scenario.structured_goal.clone(),
        },
        inventory,
        scenario.type_map(),
        scenario.name.clone(),
    )
    .with_ablation(variant.ablation());

    // Ground-truth goal conditions, checked against the final world.
    let goal_truth: Vec<Triple> = match &scenario.structured_goal {
        Some(t) => t.clone(),
        None => pipeline
            .synthesize_goal_only()
            .map_err(|e| BenchError::ScenarioInvalid {
                path: scenario.name.clone(),
                message: format!("no ground-truth goal: {e}"),
            })?
            .goal_triples,
    };

    let replan_cfg = ReplanConfig { planner: planner_cfg.clone(), ..replan_cfg.clone() };
    let mut record = ScenarioRecord {
        scenario: scenario.name.clone(),
        variant,
        success: false,
        goal_total: goal_truth.len(),
        goal_achieved: 0,
        actions_planned: 0,
        actions_ok: 0,
        pt_secs: 0.0,
        et_ticks: 0,
        replan_iters: 0,
        first_failure: None,
    };
    let mut log: Vec<LogLine> = Vec::new();
    let mut planner_nodes = 0u64;
    let mut memo: BTreeSet<String> = BTreeSet::new();

    let max_rounds = world.locations.len() + replan_cfg.max_iterations + 4;
    let mut last_plan_cost: Option<usize> = None;
    let mut finished = false;

    for round in 0..max_rounds {
        // Synthesize and plan from the current graph.
        let failure: Failure = match pipeline.synthesize(&graph) {
            Err(e) => Failure::from_synthesis(&e),
            Ok(synthesized) => match ground(pipeline.domain, &synthesized.problem) {
                Err(e) => Failure::Synthesis { message: e.to_string(), missing_location: None },
                Ok(task) => {
                    let (outcome, stats) = plan_with_stats(&task, planner_cfg);
                    planner_nodes += stats.expanded;
                    match outcome {
                        PlanOutcome::NotFound(reason) => Failure::NoPlan(reason),
                        PlanOutcome::Found(plan) => {
                            record.actions_planned += plan.cost();
                            last_plan_cost = Some(plan.cost());
                            let pop = deorder(&plan, &task).expect("planner output validates");
                            let (trace, exec_err) = world.execute_partial_order(&pop);
                            record.actions_ok += trace.ok_steps();
                            record.et_ticks += trace.duration_ticks;
                            for rec in &trace.records {
                                if rec.outcome == crate::sim::StepOutcome::Ok {
                                    propagate_effects(&mut graph, &pop.actions[rec.step]);
                                }
                            }
                            match exec_err {
                                None => {
                                    finished = true;
                                    break;
                                }
                                Some(e) => {
                                    if record.first_failure.is_none() {
                                        record.first_failure =
                                            Some((e.action.clone(), e.detail.clone()));
                                    }
                                    Failure::Exec(e)
                                }
                            }
                        }
                    }
                }
            },
        };

        // Discovery channel: observe around the failure before hypothesizing.
        if variant.discovery_enabled() {
            let mut changed = false;
            if let Failure::Exec(e) = &failure {
                let reveal = world.observe_failure(e);
                changed |= graph.apply_delta(&reveal);
                let robot = e
                    .action
                    .trim_start_matches('(')
                    .split_whitespace()
                    .nth(1)
                    .unwrap_or_default()
                    .to_string();
                let seen = world.observe(&robot);
                changed |= graph.apply_delta(&seen);
            } else {
                let (ticks, swept) = observation_sweep(&mut world, &mut graph);
                record.et_ticks += ticks;
                changed |= swept;
            }
            if changed {
                continue;
            }
        }

        if !variant.replanning_enabled() {
            break;
        }
        let remaining = replan_cfg.max_iterations.saturating_sub(record.replan_iters);
        if remaining == 0 {
            break;
        }
        let cfg = ReplanConfig { max_iterations: remaining, ..replan_cfg.clone() };
        let outcome = replan_loop(
            &pipeline,
            &world,
            &mut graph,
            last_plan_cost,
            Some(failure),
            &cfg,
            &RuleBasedGenerator,
            &mut memo,
            &mut planner_nodes,
        );
        match outcome {
            Ok(success) => {
                record.replan_iters += success.iterations;
                for rec in success.log {
                    log.push(LogLine {
                        scenario: scenario.name.clone(),
                        variant,
                        round,
                        record: rec,
                    });
                }
                // The repaired plan is regenerated at the top of the next
                // round (synthesis is deterministic) and then executed.
            }
            Err(exhausted) => {
                record.replan_iters += exhausted.iterations;
                for rec in exhausted.log {
                    log.push(LogLine {
                        scenario: scenario.name.clone(),
                        variant,
                        round,
                        record: rec,
                    });
                }
                break;
            }
        }
    }

    record.goal_achieved = goal_truth.iter().filter(|t| world.goal_holds(t)).count();
    record.success = finished && record.goal_achieved == record.goal_total;
    record.pt_secs = planner_nodes as f64 * SECONDS_PER_NODE;
    Ok(ScenarioRun { record, log })
}

#[derive(Debug, Clone, Deserialize)]
pub struct SuiteSpec {
    pub name: String,
    pub scenarios: Vec<String>,
    #[serde(default)]
    pub planner: Option<PlannerConfig>,
    #[serde(default)]
    pub replan: Option<ReplanSettings>,
}

/// Replan knobs as they appear in suite files.
#[derive(Debug, Clone, Deserialize)]
pub struct ReplanSettings {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub dry_run_probe: bool,
}

fn default_k() -> usize {
    5
}
fn default_lambda() -> f64 {
    2.0
}
fn default_max_iterations() -> usize {
    10
}

impl ReplanSettings {
    fn to_config(&self, planner: PlannerConfig) -> ReplanConfig {
        ReplanConfig {
            k: self.k,
            lambda: self.lambda,
            max_iterations: self.max_iterations,
            planner,
            dry_run_probe: self.dry_run_probe,
        }
    }
}

impl SuiteSpec {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), BenchError> {
        let text = std::fs::read_to_string(path)?;
        let spec: SuiteSpec = toml::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok((spec, base))
    }
}

#[derive(Debug)]
pub struct SuiteReport {
    pub records: Vec<ScenarioRecord>,
    pub metrics: MetricsReport,
    pub log_lines: Vec<String>,
    pub invalid: Vec<(String, String)>,
    pub csv: String,
}

/// Runs every scenario of the suite under one variant. Scenario failures are
/// reported in `invalid` and the suite continues.
pub fn run_suite(
    spec: &SuiteSpec,
    base_dir: &Path,
    variant: Variant,
    seed: u64,
) -> Result<SuiteReport, BenchError> {
    if spec.scenarios.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    let planner_cfg = spec.planner.clone().unwrap_or_default();
    let replan_cfg = spec
        .replan
        .clone()
        .map(|r| r.to_config(planner_cfg.clone()))
        .unwrap_or_else(|| ReplanConfig { planner: planner_cfg.clone(), ..Default::default() });

    let mut records = Vec::new();
    let mut log_lines = Vec::new();
    let mut invalid = Vec::new();
    for rel in &spec.scenarios {
        let path = base_dir.join(rel);
        let scenario = match Scenario::load(&path) {
            Ok(s) => s,
            Err(e) => {
                invalid.push((rel.clone(), e.to_string()));
                continue;
            }
        };
        match run_scenario(&scenario, variant, &planner_cfg, &replan_cfg) {
            Ok(run) => {
                for line in &run.log {
                    log_lines
                        .push(serde_json::to_string(line).expect("log lines serialize"));
                }
                records.push(run.record);
            }
            Err(e) => invalid.push((rel.clone(), e.to_string())),
        }
    }
    let metrics = compute_metrics(&records)?;
    let csv = render_csv(&spec.name, variant, seed, &records, &metrics);
    Ok(SuiteReport { records, metrics, log_lines, invalid, csv })
}

/// CSV schema v1: one row per scenario plus an aggregate row. The aggregate
/// row reuses the success column for TCR and the pt/et columns for means.
fn render_csv(
    suite: &str,
    variant: Variant,
    seed: u64,
    records: &[ScenarioRecord],
    metrics: &MetricsReport,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# kgplan bench report v1");
    let _ = writeln!(out, "# suite: {suite}; variant: {}; seed: {seed}", variant.as_str());
    let _ = writeln!(
        out,
        "# pt_secs: virtual planning time ({SECONDS_PER_NODE} s per search node); et_ticks: simulated ticks (1 per action)"
    );
    let _ = writeln!(
        out,
        "# aggregate row: success column = TCR(%), goal/action columns = sums, pt/et columns = means"
    );
    let _ = writeln!(
        out,
        "scenario,variant,success,goal_total,goal_achieved,actions_planned,actions_ok,pt_secs,et_ticks,replan_iters"
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{},{}",
            r.scenario,
            r.variant.as_str(),
            r.success,
            r.goal_total,
            r.goal_achieved,
            r.actions_planned,
            r.actions_ok,
            r.pt_secs,
            r.et_ticks,
            r.replan_iters
        );
    }
    let goal_total: usize = records.iter().map(|r| r.goal_total).sum();
    let goal_achieved: usize = records.iter().map(|r| r.goal_achieved).sum();
    let planned: usize = records.iter().map(|r| r.actions_planned).sum();
    let ok: usize = records.iter().map(|r| r.actions_ok).sum();
    let iters: usize = records.iter().map(|r| r.replan_iters).sum();
    let _ = writeln!(
        out,
        "aggregate,{},{:.1},{},{},{},{},{:.6},{:.1},{}",
        variant.as_str(),
        metrics.tcr,
        goal_total,
        goal_achieved,
        planned,
        ok,
        metrics.mean_pt,
        metrics.mean_et,
        iters
    );
    out
}
