//! STRIPS-subset PDDL: data model, parser, canonical printer, and grounder.
//!
//! The supported grammar is exactly `:strips` + `:typing` (plus domain
//! constants): positive conjunctive preconditions, add/delete effects,
//! positive conjunctive goals. Anything else is an [`PddlError::UnsupportedFeature`].

mod ground;
mod parser;
mod printer;

pub use ground::{ground, GroundedTask};
pub use parser::{parse_domain, parse_problem};
pub use printer::{print_domain, print_problem};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PddlError {
    #[error("syntax error at line {line}, col {col}: expected {expected}")]
    SyntaxError { line: usize, col: usize, expected: String },
    #[error("arity mismatch: predicate '{predicate}' expects {expected} args, got {got}")]
    ArityMismatch { predicate: String, expected: usize, got: usize },
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("unknown type '{0}'")]
    UnknownType(String),
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("type error: '{object}' has type '{actual}', expected '{expected}'")]
    TypeMismatch { object: String, actual: String, expected: String },
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("duplicate {category} '{name}'")]
    Duplicate { category: &'static str, name: String },
    #[error("free variable '?{0}' not declared in :parameters")]
    FreeVariable(String),
    #[error("add and delete lists overlap on {0}")]
    EffectOverlap(String),
    #[error("goal must contain at least one literal")]
    EmptyGoal,
    #[error("goal atom {0} is outside the reachable atom universe")]
    UnreachableGoalAtom(String),
    #[error("action {0} is not applicable: missing {1}")]
    InapplicableAction(String, String),
}

/// The implicit root of the type hierarchy.
pub const OBJECT_TYPE: &str = "object";

/// A term in an action schema body: a parameter reference or a domain constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => f.write_str(c),
        }
    }
}

/// An atom over schema terms, e.g. `(at_location ?r ?l)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SchemaAtom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl fmt::Display for SchemaAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A typed parameter of a predicate or action schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Param {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PredicateSchema {
    pub name: String,
    pub params: Vec<Param>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<Param>,
    pub precondition: BTreeSet<SchemaAtom>,
    pub add_list: BTreeSet<SchemaAtom>,
    pub delete_list: BTreeSet<SchemaAtom>,
}

/// A declared type and its (single) parent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TypeDef {
    pub name: String,
    pub parent: String,
}

/// A typed constant, used both for domain `:constants` and problem `:objects`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TypedObject {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub types: Vec<TypeDef>,
    pub constants: Vec<TypedObject>,
    pub predicates: Vec<PredicateSchema>,
    pub actions: Vec<ActionSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub domain_name: String,
    pub objects: Vec<TypedObject>,
    pub init: BTreeSet<GroundAtom>,
    pub goal: BTreeSet<GroundAtom>,
}

/// A fully instantiated atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(predicate: &str, args: &[&str]) -> Self {
        GroundAtom {
            predicate: predicate.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A state is a set of ground atoms under the closed-world assumption.
pub type State = BTreeSet<GroundAtom>;

/// A ground action: schema name plus binding, with instantiated
/// precondition/add/delete sets (static precondition atoms compiled away).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub schema: String,
    pub args: Vec<String>,
    pub pre: BTreeSet<GroundAtom>,
    pub add: BTreeSet<GroundAtom>,
    pub del: BTreeSet<GroundAtom>,
}

impl GroundAction {
    /// Canonical `(name arg...)` string; used for deterministic tie-breaking.
    pub fn canonical(&self) -> String {
        let mut s = format!("({}", self.schema);
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s.push(')');
        s
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl Domain {
    /// Builds a validated, canonically ordered domain. All list orders are
    /// normalized so structurally equal domains compare equal.
    pub fn new(
        name: String,
        mut types: Vec<TypeDef>,
        mut constants: Vec<TypedObject>,
        mut predicates: Vec<PredicateSchema>,
        mut actions: Vec<ActionSchema>,
    ) -> Result<Self, PddlError> {
        types.sort();
        constants.sort();
        predicates.sort();
        actions.sort_by(|a, b| a.name.cmp(&b.name));

        let mut type_names: BTreeSet<&str> = BTreeSet::new();
        type_names.insert(OBJECT_TYPE);
        for ty in &types {
            if ty.name == OBJECT_TYPE || !type_names.insert(&ty.name) {
                return Err(PddlError::Duplicate { category: "type", name: ty.name.clone() });
            }
        }
        for ty in &types {
            if !type_names.contains(ty.parent.as_str()) {
                return Err(PddlError::UnknownType(ty.parent.clone()));
            }
        }
        let check_ty = |ty: &str| -> Result<(), PddlError> {
            if type_names.contains(ty) {
                Ok(())
            } else {
                Err(PddlError::UnknownType(ty.to_string()))
            }
        };

        let mut const_names: BTreeSet<&str> = BTreeSet::new();
        for c in &constants {
            check_ty(&c.ty)?;
            if !const_names.insert(&c.name) {
                return Err(PddlError::Duplicate { category: "constant", name: c.name.clone() });
            }
        }

        let mut pred_arity: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &predicates {
            let mut param_names = BTreeSet::new();
            for param in &p.params {
                check_ty(&param.ty)?;
                if !param_names.insert(&param.name) {
                    return Err(PddlError::Duplicate {
                        category: "parameter",
                        name: param.name.clone(),
                    });
                }
            }
            if pred_arity.insert(&p.name, p.params.len()).is_some() {
                return Err(PddlError::Duplicate { category: "predicate", name: p.name.clone() });
            }
        }

        let mut action_names = BTreeSet::new();
        for a in &actions {
            if !action_names.insert(&a.name) {
                return Err(PddlError::Duplicate { category: "action", name: a.name.clone() });
            }
            let mut param_names: BTreeSet<&str> = BTreeSet::new();
            for param in &a.params {
                check_ty(&param.ty)?;
                if !param_names.insert(&param.name) {
                    return Err(PddlError::Duplicate {
                        category: "parameter",
                        name: param.name.clone(),
                    });
                }
            }
            for atom in a.precondition.iter().chain(&a.add_list).chain(&a.delete_list) {
                let arity = *pred_arity
                    .get(atom.predicate.as_str())
                    .ok_or_else(|| PddlError::UnknownPredicate(atom.predicate.clone()))?;
                if atom.args.len() != arity {
                    return Err(PddlError::ArityMismatch {
                        predicate: atom.predicate.clone(),
                        expected: arity,
                        got: atom.args.len(),
                    });
                }
                for term in &atom.args {
                    match term {
                        Term::Var(v) => {
                            if !param_names.contains(v.as_str()) {
                                return Err(PddlError::FreeVariable(v.clone()));
                            }
                        }
                        Term::Const(c) => {
                            if !const_names.contains(c.as_str()) {
                                return Err(PddlError::UnknownObject(c.clone()));
                            }
                        }
                    }
                }
            }
            if let Some(both) = a.add_list.intersection(&a.delete_list).next() {
                return Err(PddlError::EffectOverlap(both.to_string()));
            }
        }

        Ok(Domain { name, types, constants, predicates, actions })
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateSchema> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    /// True if `ty` equals `ancestor` or descends from it.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ty == ancestor {
            return true;
        }
        if ancestor == OBJECT_TYPE {
            return true;
        }
        let mut cur = ty;
        while let Some(def) = self.types.iter().find(|t| t.name == cur) {
            if def.parent == ancestor {
                return true;
            }
            cur = &def.parent;
        }
        false
    }
}

impl Problem {
    /// Builds a validated problem cross-checked against its domain.
    pub fn new(
        name: String,
        domain_name: String,
        mut objects: Vec<TypedObject>,
        init: BTreeSet<GroundAtom>,
        goal: BTreeSet<GroundAtom>,
        domain: &Domain,
    ) -> Result<Self, PddlError> {
        objects.sort();
        if goal.is_empty() {
            return Err(PddlError::EmptyGoal);
        }
        let mut obj_types: BTreeMap<&str, &str> = BTreeMap::new();
        for c in &domain.constants {
            obj_types.insert(&c.name, &c.ty);
        }
        for o in &objects {
            if !domain.types.iter().any(|t| t.name == o.ty) && o.ty != OBJECT_TYPE {
                return Err(PddlError::UnknownType(o.ty.clone()));
            }
            if obj_types.insert(&o.name, &o.ty).is_some() {
                return Err(PddlError::Duplicate { category: "object", name: o.name.clone() });
            }
        }
        for atom in init.iter().chain(goal.iter()) {
            let schema = domain
                .predicate(&atom.predicate)
                .ok_or_else(|| PddlError::UnknownPredicate(atom.predicate.clone()))?;
            if schema.params.len() != atom.args.len() {
                return Err(PddlError::ArityMismatch {
                    predicate: atom.predicate.clone(),
                    expected: schema.params.len(),
                    got: atom.args.len(),
                });
            }
            for (arg, param) in atom.args.iter().zip(&schema.params) {
                let actual = obj_types
                    .get(arg.as_str())
                    .ok_or_else(|| PddlError::UnknownObject(arg.clone()))?;
                if !domain.is_subtype(actual, &param.ty) {
                    return Err(PddlError::TypeMismatch {
                        object: arg.clone(),
                        actual: actual.to_string(),
                        expected: param.ty.clone(),
                    });
                }
            }
        }
        Ok(Problem { name, domain_name, objects, init, goal })
    }
}

/// True iff all of the action's preconditions hold in `state`.
pub fn applicable(state: &State, action: &GroundAction) -> bool {
    action.pre.iter().all(|a| state.contains(a))
}

/// Applies `(state - del) + add`; the action must be applicable.
pub fn apply(state: &State, action: &GroundAction) -> Result<State, PddlError> {
    if !applicable(state, action) {
        let missing: Vec<String> = action
            .pre
            .iter()
            .filter(|a| !state.contains(*a))
            .map(|a| a.to_string())
            .collect();
        return Err(PddlError::InapplicableAction(action.canonical(), missing.join(", ")));
    }
    let mut next = state.clone();
    for d in &action.del {
        next.remove(d);
    }
    for a in &action.add {
        next.insert(a.clone());
    }
    Ok(next)
}

/// True iff every goal literal of the problem holds in `state`.
pub fn goal_satisfied(state: &State, problem: &Problem) -> bool {
    problem.goal.iter().all(|g| state.contains(g))
}
