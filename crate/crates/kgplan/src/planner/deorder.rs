//! Causal-link deordering: converts a valid sequential plan into a partial
//! order whose every linearization is valid, so independent robots can act
//! in parallel.

use std::collections::BTreeSet;

use super::{validate, PartialOrderPlan, Plan, PlannerError};
use crate::pddl::{GroundAtom, GroundedTask};

/// Derives ordering constraints from causal links and their threats.
///
/// For every consumed precondition (and every goal atom, treated as consumed
/// by a virtual final step) the producer is the last earlier adder; deleters
/// of the linked atom are forced before the producer or after the consumer.
/// Steps with no shared atoms stay unordered.
pub fn deorder(plan: &Plan, task: &GroundedTask) -> Result<PartialOrderPlan, PlannerError> {
    if let super::Validity::Invalid { step, missing } = validate(plan, task) {
        let missing: Vec<String> = missing.iter().map(|a| a.to_string()).collect();
        return Err(PlannerError::InvalidPlanInput(format!(
            "invalid at {step:?}, missing {}",
            missing.join(", ")
        )));
    }

    let n = plan.actions.len();
    let mut order: BTreeSet<(usize, usize)> = BTreeSet::new();

    // Consumers are the real steps plus the goal as a virtual step n.
    let consumed_atoms = |j: usize| -> &BTreeSet<GroundAtom> {
        if j == n {
            &task.goal
        } else {
            &plan.actions[j].pre
        }
    };

    for j in 0..=n {
        for atom in consumed_atoms(j) {
            // Producer: last adder strictly before j, else the initial state.
            let producer =
                (0..j).rev().find(|&i| plan.actions[i].add.contains(atom));
            if let Some(i) = producer {
                if j < n {
                    order.insert((i, j));
                }
                for (k, action) in plan.actions.iter().enumerate() {
                    if k != i && action.del.contains(atom) {
                        if k < i {
                            order.insert((k, i));
                        } else if k > j {
                            // k cannot lie inside (i, j): the plan validated.
                            order.insert((j, k));
                        }
                    }
                }
            } else {
                // Init-supplied atom: every deleter must come after j.
                for (k, action) in plan.actions.iter().enumerate() {
                    if action.del.contains(atom) && k != j && j < n {
                        order.insert((j, k));
                    }
                }
            }
        }
    }

    Ok(PartialOrderPlan { actions: plan.actions.clone(), order })
}
