//! Grounding: typed binding enumeration with static-precondition pruning.

use std::collections::{BTreeMap, BTreeSet};

use super::{Domain, GroundAction, GroundAtom, PddlError, Problem, SchemaAtom, State, Term};

/// A grounded planning task: the fluent atom universe, the surviving ground
/// actions (sorted by canonical string), the initial state, and the goal.
#[derive(Debug, Clone)]
pub struct GroundedTask {
    pub atoms: BTreeSet<GroundAtom>,
    pub actions: Vec<GroundAction>,
    pub init: State,
    pub goal: BTreeSet<GroundAtom>,
}

fn instantiate(atom: &SchemaAtom, binding: &BTreeMap<&str, &str>) -> GroundAtom {
    let args = atom
        .args
        .iter()
        .map(|term| match term {
            Term::Var(v) => binding[v.as_str()].to_string(),
            Term::Const(c) => c.clone(),
        })
        .collect();
    GroundAtom { predicate: atom.predicate.clone(), args }
}

/// Grounds every action schema over the problem's objects (plus domain
/// constants). Predicates never touched by any effect are static: their
/// precondition atoms are checked against init and compiled away, and
/// actions with an unsatisfiable static precondition are pruned. Identical
/// bindings to distinct parameters are allowed; inequality must be encoded
/// with static guards.
pub fn ground(domain: &Domain, problem: &Problem) -> Result<GroundedTask, PddlError> {
    let mut static_preds: BTreeSet<&str> =
        domain.predicates.iter().map(|p| p.name.as_str()).collect();
    for action in &domain.actions {
        for atom in action.add_list.iter().chain(&action.delete_list) {
            static_preds.remove(atom.predicate.as_str());
        }
    }

    let mut objects: Vec<(&str, &str)> = Vec::new();
    for c in &domain.constants {
        objects.push((&c.name, &c.ty));
    }
    for o in &problem.objects {
        objects.push((&o.name, &o.ty));
    }

    let mut actions = Vec::new();
    for schema in &domain.actions {
        let candidates: Vec<Vec<&str>> = schema
            .params
            .iter()
            .map(|param| {
                objects
                    .iter()
                    .filter(|(_, ty)| domain.is_subtype(ty, &param.ty))
                    .map(|(name, _)| *name)
                    .collect()
            })
            .collect();
        if candidates.iter().any(|c| c.is_empty()) && !schema.params.is_empty() {
            continue;
        }
        let mut indices = vec![0usize; schema.params.len()];
        'enumerate: loop {
            let binding: BTreeMap<&str, &str> = schema
                .params
                .iter()
                .enumerate()
                .map(|(pos, param)| (param.name.as_str(), candidates[pos][indices[pos]]))
                .collect();

            let mut pre = BTreeSet::new();
            let mut statics_ok = true;
            for atom in &schema.precondition {
                let g = instantiate(atom, &binding);
                if static_preds.contains(g.predicate.as_str()) {
                    if !problem.init.contains(&g) {
                        statics_ok = false;
                        break;
                    }
                } else {
                    pre.insert(g);
                }
            }
            if statics_ok {
                let add: BTreeSet<GroundAtom> =
                    schema.add_list.iter().map(|a| instantiate(a, &binding)).collect();
                let del: BTreeSet<GroundAtom> =
                    schema.delete_list.iter().map(|a| instantiate(a, &binding)).collect();
                let args: Vec<String> =
                    schema.params.iter().map(|p| binding[p.name.as_str()].to_string()).collect();
                actions.push(GroundAction { schema: schema.name.clone(), args, pre, add, del });
            }

            // Odometer step over candidate lists.
            if schema.params.is_empty() {
                break 'enumerate;
            }
            let mut pos = indices.len() - 1;
            loop {
                indices[pos] += 1;
                if indices[pos] < candidates[pos].len() {
                    break;
                }
                indices[pos] = 0;
                if pos == 0 {
                    break 'enumerate;
                }
                pos -= 1;
            }
        }
    }
    actions.sort_by(|a, b| a.canonical().cmp(&b.canonical()));

    let mut atoms: BTreeSet<GroundAtom> = problem.init.clone();
    for action in &actions {
        atoms.extend(action.add.iter().cloned());
    }
    for goal_atom in &problem.goal {
        if !atoms.contains(goal_atom) {
            return Err(PddlError::UnreachableGoalAtom(goal_atom.to_string()));
        }
    }

    Ok(GroundedTask {
        atoms,
        actions,
        init: problem.init.clone(),
        goal: problem.goal.clone(),
    })
}
