//! Canonical PDDL printing: sorted sections, 2-space indent, lowercase.
//! Printing the same model twice is byte-identical, and output re-parses to
//! an equal model.

use std::fmt::Write;

use super::{Domain, PddlError, Problem, SchemaAtom, TypedObject};

fn write_typed_objects(out: &mut String, indent: &str, objects: &[TypedObject]) {
    for o in objects {
        let _ = write!(out, "\n{indent}{} - {}", o.name, o.ty);
    }
}

fn atom_text(atom: &SchemaAtom) -> String {
    atom.to_string()
}

fn conjunction_text(atoms: &[String]) -> String {
    if atoms.len() == 1 {
        atoms[0].clone()
    } else {
        format!("(and {})", atoms.join(" "))
    }
}

/// Prints a domain in canonical form.
pub fn print_domain(domain: &Domain) -> String {
    let mut out = String::new();
    let _ = write!(out, "(define (domain {})", domain.name);
    let _ = write!(out, "\n  (:requirements :strips :typing)");
    if !domain.types.is_empty() {
        let _ = write!(out, "\n  (:types");
        for t in &domain.types {
            let _ = write!(out, "\n    {} - {}", t.name, t.parent);
        }
        let _ = write!(out, ")");
    }
    if !domain.constants.is_empty() {
        let _ = write!(out, "\n  (:constants");
        write_typed_objects(&mut out, "    ", &domain.constants);
        let _ = write!(out, ")");
    }
    if !domain.predicates.is_empty() {
        let _ = write!(out, "\n  (:predicates");
        for p in &domain.predicates {
            let _ = write!(out, "\n    ({}", p.name);
            for param in &p.params {
                let _ = write!(out, " ?{} - {}", param.name, param.ty);
            }
            let _ = write!(out, ")");
        }
        let _ = write!(out, ")");
    }
    for a in &domain.actions {
        let _ = write!(out, "\n  (:action {}", a.name);
        let _ = write!(out, "\n    :parameters (");
        let params: Vec<String> =
            a.params.iter().map(|p| format!("?{} - {}", p.name, p.ty)).collect();
        let _ = write!(out, "{})", params.join(" "));
        let pre: Vec<String> = a.precondition.iter().map(atom_text).collect();
        if !pre.is_empty() {
            let _ = write!(out, "\n    :precondition {}", conjunction_text(&pre));
        }
        let mut effects: Vec<String> = a.add_list.iter().map(atom_text).collect();
        effects.extend(a.delete_list.iter().map(|atom| format!("(not {})", atom_text(atom))));
        if !effects.is_empty() {
            let _ = write!(out, "\n    :effect {}", conjunction_text(&effects));
        }
        let _ = write!(out, ")");
    }
    out.push_str(")\n");
    out
}

/// Prints a problem in canonical form. The goal must be non-empty (enforced
/// upstream by [`Problem::new`]).
pub fn print_problem(problem: &Problem) -> Result<String, PddlError> {
    if problem.goal.is_empty() {
        return Err(PddlError::EmptyGoal);
    }
    let mut out = String::new();
    let _ = write!(out, "(define (problem {})", problem.name);
    let _ = write!(out, "\n  (:domain {})", problem.domain_name);
    if !problem.objects.is_empty() {
        let _ = write!(out, "\n  (:objects");
        write_typed_objects(&mut out, "    ", &problem.objects);
        let _ = write!(out, ")");
    }
    let _ = write!(out, "\n  (:init");
    for atom in &problem.init {
        let _ = write!(out, "\n    {atom}");
    }
    let _ = write!(out, ")");
    let _ = write!(out, "\n  (:goal (and");
    for atom in &problem.goal {
        let _ = write!(out, "\n    {atom}");
    }
    out.push_str(")))\n");
    Ok(out)
}
