//! Forward state-space STRIPS planner with plan validation and causal-link
//! deordering for parallel multi-robot execution.

mod deorder;
mod search;

pub use deorder::deorder;
pub use search::{plan, plan_with_stats, SearchStats};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{applicable, apply, GroundAction, GroundAtom, GroundedTask, State};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlannerError {
    #[error("deorder requires a valid plan: {0}")]
    InvalidPlanInput(String),
}

/// A totally ordered plan; cost is its length.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Plan {
    pub actions: Vec<GroundAction>,
}

impl Plan {
    pub fn cost(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.actions.iter().enumerate() {
            writeln!(f, "{}. {}", i + 1, a.canonical())?;
        }
        write!(f, "; cost = {}", self.cost())
    }
}

/// Returns the plan length (unit action costs).
pub fn cost(plan: &Plan) -> usize {
    plan.cost()
}

/// A plan plus ordering constraints `(i, j)` meaning step i must precede
/// step j. Constraints always point forward in the original sequence, so the
/// order is acyclic by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialOrderPlan {
    pub actions: Vec<GroundAction>,
    pub order: BTreeSet<(usize, usize)>,
}

impl PartialOrderPlan {
    /// Direct predecessors of step `j`.
    pub fn predecessors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().filter(move |(_, b)| *b == j).map(|(a, _)| *a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    OptimalBfs,
    GreedyHadd,
    AstarHadd,
}

impl SearchMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "optimal_bfs" => Some(SearchMode::OptimalBfs),
            "greedy_hadd" => Some(SearchMode::GreedyHadd),
            "astar_hadd" => Some(SearchMode::AstarHadd),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::OptimalBfs => "optimal_bfs",
            SearchMode::GreedyHadd => "greedy_hadd",
            SearchMode::AstarHadd => "astar_hadd",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerConfig {
    #[serde(default = "default_mode")]
    pub mode: SearchMode,
    #[serde(default = "default_node_budget")]
    pub node_budget: usize,
    #[serde(default = "default_time_budget")]
    pub time_budget_secs: f64,
}

fn default_mode() -> SearchMode {
    SearchMode::AstarHadd
}

fn default_node_budget() -> usize {
    1_000_000
}

fn default_time_budget() -> f64 {
    300.0
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            mode: SearchMode::AstarHadd,
            node_budget: 1_000_000,
            time_budget_secs: 300.0,
        }
    }
}

impl PlannerConfig {
    pub fn with_mode(mode: SearchMode) -> Self {
        PlannerConfig { mode, ..Default::default() }
    }
}

/// Why no plan was returned. A value, not a fault: the replanner consumes it
/// as its error signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotFoundReason {
    /// The reachable state space contains no goal state.
    Exhausted,
    /// The node or time budget ran out first.
    BudgetExceeded,
}

impl fmt::Display for NotFoundReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NotFoundReason::Exhausted => f.write_str("exhausted"),
            NotFoundReason::BudgetExceeded => f.write_str("budget_exceeded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanOutcome {
    Found(Plan),
    NotFound(NotFoundReason),
}

impl PlanOutcome {
    pub fn found(&self) -> Option<&Plan> {
        match self {
            PlanOutcome::Found(p) => Some(p),
            PlanOutcome::NotFound(_) => None,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, PlanOutcome::Found(_))
    }
}

/// Where a plan replay failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidStep {
    At(usize),
    AtEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid { step: InvalidStep, missing: BTreeSet<GroundAtom> },
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// Replays the plan from the task's init: reports the first inapplicable
/// step with its missing precondition atoms, or the goal atoms unsatisfied
/// at the end.
pub fn validate(plan: &Plan, task: &GroundedTask) -> Validity {
    let mut state: State = task.init.clone();
    for (i, action) in plan.actions.iter().enumerate() {
        if !applicable(&state, action) {
            let missing = action.pre.iter().filter(|a| !state.contains(*a)).cloned().collect();
            return Validity::Invalid { step: InvalidStep::At(i), missing };
        }
        state = apply(&state, action).expect("applicable action must apply");
    }
    let missing: BTreeSet<GroundAtom> =
        task.goal.iter().filter(|g| !state.contains(*g)).cloned().collect();
    if missing.is_empty() {
        Validity::Valid
    } else {
        Validity::Invalid { step: InvalidStep::AtEnd, missing }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::pddl::{ground, parse_domain, parse_problem, Domain, Problem};

    pub(crate) fn chain_task() -> (Domain, Problem) {
        let d = parse_domain(
            "(define (domain move_world)\n\
             (:requirements :strips :typing)\n\
             (:types location robot)\n\
             (:predicates (at ?r - robot ?l - location) (connected ?a - location ?b - location))\n\
             (:action move\n\
               :parameters (?r - robot ?from - location ?to - location)\n\
               :precondition (and (at ?r ?from) (connected ?from ?to))\n\
               :effect (and (at ?r ?to) (not (at ?r ?from)))))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem chain) (:domain move_world)\n\
             (:objects r1 - robot a b c - location)\n\
             (:init (at r1 a) (connected a b) (connected b a) (connected b c) (connected c b))\n\
             (:goal (and (at r1 c))))",
            &d,
        )
        .unwrap();
        (d, p)
    }

    #[test]
    fn goal_already_satisfied_gives_empty_plan() {
        let (d, mut p) = chain_task();
        p.goal = [GroundAtom::new("at", &["r1", "a"])].into_iter().collect();
        let task = ground(&d, &p).unwrap();
        let outcome = plan(&task, &PlannerConfig::with_mode(SearchMode::OptimalBfs));
        let plan = outcome.found().unwrap();
        assert!(plan.is_empty());
        assert_eq!(cost(plan), 0);
    }

    #[test]
    fn chain_task_solved_in_two_moves() {
        // Hand BFS over the 3-state space: a -> b -> c.
        let (d, p) = chain_task();
        let task = ground(&d, &p).unwrap();
        for mode in [SearchMode::OptimalBfs, SearchMode::GreedyHadd, SearchMode::AstarHadd] {
            let outcome = plan(&task, &PlannerConfig::with_mode(mode));
            let got = outcome.found().unwrap();
            assert!(validate(got, &task).is_valid());
            if mode == SearchMode::OptimalBfs {
                assert_eq!(got.cost(), 2);
                assert_eq!(got.actions[0].canonical(), "(move r1 a b)");
                assert_eq!(got.actions[1].canonical(), "(move r1 b c)");
            }
        }
    }

    #[test]
    fn dead_end_goal_is_exhausted() {
        // b -> c edge exists so (at r1 c) stays in the universe, but the
        // robot is stranded at c's far side: start at c with only c -> b
        // traversable and goal at(r1, a) unreachable... keep it simpler:
        // start at a, remove a's outgoing edges, goal at(r1, c).
        let (d, mut p) = chain_task();
        p.init.remove(&GroundAtom::new("connected", &["a", "b"]));
        let task = ground(&d, &p).unwrap();
        let outcome = plan(&task, &PlannerConfig::with_mode(SearchMode::OptimalBfs));
        assert_eq!(outcome, PlanOutcome::NotFound(NotFoundReason::Exhausted));
    }

    #[test]
    fn budget_exhaustion_reported() {
        let (d, p) = chain_task();
        let task = ground(&d, &p).unwrap();
        let cfg =
            PlannerConfig { mode: SearchMode::OptimalBfs, node_budget: 1, time_budget_secs: 300.0 };
        let outcome = plan(&task, &cfg);
        assert_eq!(outcome, PlanOutcome::NotFound(NotFoundReason::BudgetExceeded));
    }

    #[test]
    fn validate_reports_swapped_steps() {
        let (d, p) = chain_task();
        let task = ground(&d, &p).unwrap();
        let good = plan(&task, &PlannerConfig::with_mode(SearchMode::OptimalBfs));
        let mut swapped = good.found().unwrap().clone();
        swapped.actions.swap(0, 1);
        match validate(&swapped, &task) {
            Validity::Invalid { step: InvalidStep::At(0), missing } => {
                assert_eq!(missing, [GroundAtom::new("at", &["r1", "b"])].into_iter().collect());
            }
            other => panic!("expected invalid at step 0, got {other:?}"),
        }
    }

    #[test]
    fn validate_reports_unmet_goal_for_empty_plan() {
        let (d, p) = chain_task();
        let task = ground(&d, &p).unwrap();
        match validate(&Plan::default(), &task) {
            Validity::Invalid { step: InvalidStep::AtEnd, missing } => {
                assert_eq!(missing, [GroundAtom::new("at", &["r1", "c"])].into_iter().collect());
            }
            other => panic!("expected invalid at end, got {other:?}"),
        }
    }

    #[test]
    fn fixed_config_gives_identical_plans() {
        let (d, p) = chain_task();
        let task = ground(&d, &p).unwrap();
        for mode in [SearchMode::OptimalBfs, SearchMode::GreedyHadd, SearchMode::AstarHadd] {
            let cfg = PlannerConfig::with_mode(mode);
            let a = plan(&task, &cfg);
            let b = plan(&task, &cfg);
            assert_eq!(a, b);
        }
    }
}
