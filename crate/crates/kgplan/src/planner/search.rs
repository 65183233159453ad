//! Search backends: breadth-first (optimal for unit costs), greedy
//! best-first on h_add, and A* with h_add.
//!
//! Determinism: ground actions are pre-sorted by canonical string, successors
//! are generated in that order, and priority ties fall back to (g, insertion
//! sequence), so a fixed config always yields the same plan.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::time::Instant;

use super::{NotFoundReason, Plan, PlanOutcome, PlannerConfig, SearchMode};
use crate::pddl::{GroundAtom, GroundedTask};

/// Counters from one search run; used for the virtual planning-time clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub expanded: u64,
    pub generated: u64,
}

/// Compact task view: atoms and actions as integer ids, states as sorted
/// id vectors.
struct Indexed {
    pre: Vec<Vec<u32>>,
    add: Vec<Vec<u32>>,
    del: Vec<Vec<u32>>,
    init: Vec<u32>,
    goal: Vec<u32>,
    atom_count: usize,
}

impl Indexed {
    fn build(task: &GroundedTask) -> Self {
        let mut ids: HashMap<GroundAtom, u32> = task
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i as u32))
            .collect();
        // Precondition atoms outside the init∪adds universe can never become
        // true; give them ids anyway so their actions index cleanly (and
        // simply never apply).
        for action in &task.actions {
            for atom in action.pre.iter().chain(&action.add).chain(&action.del) {
                let next = ids.len() as u32;
                ids.entry(atom.clone()).or_insert(next);
            }
        }
        let to_ids = |set: &std::collections::BTreeSet<GroundAtom>| -> Vec<u32> {
            let mut v: Vec<u32> = set.iter().map(|a| ids[a]).collect();
            v.sort_unstable();
            v
        };
        Indexed {
            pre: task.actions.iter().map(|a| to_ids(&a.pre)).collect(),
            add: task.actions.iter().map(|a| to_ids(&a.add)).collect(),
            del: task.actions.iter().map(|a| to_ids(&a.del)).collect(),
            init: to_ids(&task.init),
            goal: to_ids(&task.goal),
            atom_count: ids.len(),
        }
    }

    fn holds_all(state: &[u32], atoms: &[u32]) -> bool {
        atoms.iter().all(|a| state.binary_search(a).is_ok())
    }

    fn successor(&self, state: &[u32], action: usize) -> Vec<u32> {
        let mut next: Vec<u32> = state
            .iter()
            .copied()
            .filter(|a| self.del[action].binary_search(a).is_err())
            .collect();
        for &a in &self.add[action] {
            if let Err(pos) = next.binary_search(&a) {
                next.insert(pos, a);
            }
        }
        next
    }

    /// Additive heuristic: sum over goal atoms of least relaxed cost.
    /// `None` means some goal atom is unreachable even ignoring deletes.
    fn hadd(&self, state: &[u32]) -> Option<i64> {
        let mut cost = vec![i64::MAX; self.atom_count];
        for &a in state {
            cost[a as usize] = 0;
        }
        loop {
            let mut changed = false;
            for action in 0..self.pre.len() {
                let mut sum: i64 = 1;
                let mut reachable = true;
                for &p in &self.pre[action] {
                    let c = cost[p as usize];
                    if c == i64::MAX {
                        reachable = false;
                        break;
                    }
                    sum += c;
                }
                if !reachable {
                    continue;
                }
                for &a in &self.add[action] {
                    if sum < cost[a as usize] {
                        cost[a as usize] = sum;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut total = 0i64;
        for &g in &self.goal {
            let c = cost[g as usize];
            if c == i64::MAX {
                return None;
            }
            total += c;
        }
        Some(total)
    }
}

struct Node {
    state: Vec<u32>,
    parent: usize,
    action: usize,
}

fn reconstruct(task: &GroundedTask, nodes: &[Node], mut idx: usize) -> Plan {
    let mut actions = Vec::new();
    while idx != 0 {
        actions.push(task.actions[nodes[idx].action].clone());
        idx = nodes[idx].parent;
    }
    actions.reverse();
    Plan { actions }
}

/// Searches for a plan. See [`plan_with_stats`] for the counting variant.
pub fn plan(task: &GroundedTask, cfg: &PlannerConfig) -> PlanOutcome {
    plan_with_stats(task, cfg).0
}

/// Searches for a plan and reports node counters.
pub fn plan_with_stats(task: &GroundedTask, cfg: &PlannerConfig) -> (PlanOutcome, SearchStats) {
    let indexed = Indexed::build(task);
    let mut stats = SearchStats::default();
    if Indexed::holds_all(&indexed.init, &indexed.goal) {
        return (PlanOutcome::Found(Plan::default()), stats);
    }
    let start = Instant::now();
    let outcome = match cfg.mode {
        SearchMode::OptimalBfs => bfs(task, &indexed, cfg, start, &mut stats),
        SearchMode::GreedyHadd => best_first(task, &indexed, cfg, start, &mut stats, false),
        SearchMode::AstarHadd => best_first(task, &indexed, cfg, start, &mut stats, true),
    };
    (outcome, stats)
}

fn over_time(start: Instant, cfg: &PlannerConfig, expanded: u64) -> bool {
    // Clock checks are amortized; the budget is a coarse guard, not a metric.
    expanded % 1024 == 0 && start.elapsed().as_secs_f64() > cfg.time_budget_secs
}

fn bfs(
    task: &GroundedTask,
    indexed: &Indexed,
    cfg: &PlannerConfig,
    start: Instant,
    stats: &mut SearchStats,
) -> PlanOutcome {
    let mut nodes = vec![Node { state: indexed.init.clone(), parent: 0, action: 0 }];
    let mut visited: HashSet<Vec<u32>> = HashSet::new();
    visited.insert(indexed.init.clone());
    let mut queue: VecDeque<usize> = VecDeque::new();
    queue.push_back(0);
    while let Some(idx) = queue.pop_front() {
        if stats.expanded >= cfg.node_budget as u64 || over_time(start, cfg, stats.expanded) {
            return PlanOutcome::NotFound(NotFoundReason::BudgetExceeded);
        }
        stats.expanded += 1;
        for action in 0..indexed.pre.len() {
            if !Indexed::holds_all(&nodes[idx].state, &indexed.pre[action]) {
                continue;
            }
            let succ = indexed.successor(&nodes[idx].state, action);
            if !visited.insert(succ.clone()) {
                continue;
            }
            stats.generated += 1;
            let reached_goal = Indexed::holds_all(&succ, &indexed.goal);
            nodes.push(Node { state: succ, parent: idx, action });
            if reached_goal {
                return PlanOutcome::Found(reconstruct(task, &nodes, nodes.len() - 1));
            }
            queue.push_back(nodes.len() - 1);
        }
    }
    PlanOutcome::NotFound(NotFoundReason::Exhausted)
}

fn best_first(
    task: &GroundedTask,
    indexed: &Indexed,
    cfg: &PlannerConfig,
    start: Instant,
    stats: &mut SearchStats,
    use_g: bool,
) -> PlanOutcome {
    let mut nodes = vec![Node { state: indexed.init.clone(), parent: 0, action: 0 }];
    let mut g_values: Vec<i64> = vec![0];
    let mut best_g: HashMap<Vec<u32>, i64> = HashMap::new();
    best_g.insert(indexed.init.clone(), 0);
    let mut heap: BinaryHeap<Reverse<(i64, i64, u64, usize)>> = BinaryHeap::new();
    let h0 = match indexed.hadd(&indexed.init) {
        Some(h) => h,
        None => return PlanOutcome::NotFound(NotFoundReason::Exhausted),
    };
    let mut seq = 0u64;
    heap.push(Reverse((if use_g { h0 } else { h0 }, 0, seq, 0)));
    while let Some(Reverse((_, g, _, idx))) = heap.pop() {
        if g > best_g[&nodes[idx].state] {
            continue; // stale entry
        }
        if stats.expanded >= cfg.node_budget as u64 || over_time(start, cfg, stats.expanded) {
            return PlanOutcome::NotFound(NotFoundReason::BudgetExceeded);
        }
        stats.expanded += 1;
        if Indexed::holds_all(&nodes[idx].state, &indexed.goal) {
            return PlanOutcome::Found(reconstruct(task, &nodes, idx));
        }
        for action in 0..indexed.pre.len() {
            if !Indexed::holds_all(&nodes[idx].state, &indexed.pre[action]) {
                continue;
            }
            let succ = indexed.successor(&nodes[idx].state, action);
            let succ_g = g_values[idx] + 1;
            if let Some(&known) = best_g.get(&succ) {
                if known <= succ_g {
                    continue;
                }
            }
            let h = match indexed.hadd(&succ) {
                Some(h) => h,
                None => continue, // dead end under the relaxation
            };
            stats.generated += 1;
            best_g.insert(succ.clone(), succ_g);
            nodes.push(Node { state: succ, parent: idx, action });
            g_values.push(succ_g);
            seq += 1;
            let f = if use_g { succ_g + h } else { h };
            heap.push(Reverse((f, succ_g, seq, nodes.len() - 1)));
        }
    }
    PlanOutcome::NotFound(NotFoundReason::Exhausted)
}
