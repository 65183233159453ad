//! Recursive-descent parser for the supported PDDL subset.

use std::collections::BTreeSet;

use super::{
    ActionSchema, Domain, GroundAtom, Param, PddlError, PredicateSchema, Problem, SchemaAtom,
    Term, TypeDef, TypedObject, OBJECT_TYPE,
};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    LParen,
    RParen,
    Symbol(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Vec<Spanned> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    while let Some(&ch) = chars.peek() {
        match ch {
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '(' => {
                out.push(Spanned { token: Token::LParen, line, col });
                chars.next();
                col += 1;
            }
            ')' => {
                out.push(Spanned { token: Token::RParen, line, col });
                chars.next();
                col += 1;
            }
            _ => {
                let start_col = col;
                let mut sym = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    sym.push(c.to_ascii_lowercase());
                    chars.next();
                    col += 1;
                }
                out.push(Spanned { token: Token::Symbol(sym), line, col: start_col });
            }
        }
    }
    out
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser { tokens: tokenize(text), pos: 0 }
    }

    fn error(&self, expected: &str) -> PddlError {
        let (line, col) = self
            .tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|s| (s.line, s.col))
            .unwrap_or((1, 1));
        PddlError::SyntaxError { line, col, expected: expected.to_string() }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|s| &s.token)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|s| s.token.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_lparen(&mut self, what: &str) -> Result<(), PddlError> {
        match self.next() {
            Some(Token::LParen) => Ok(()),
            _ => Err(self.error(&format!("'(' starting {what}"))),
        }
    }

    fn expect_rparen(&mut self, what: &str) -> Result<(), PddlError> {
        match self.next() {
            Some(Token::RParen) => Ok(()),
            _ => Err(self.error(&format!("')' closing {what}"))),
        }
    }

    fn expect_symbol(&mut self, what: &str) -> Result<String, PddlError> {
        match self.next() {
            Some(Token::Symbol(s)) => Ok(s),
            _ => Err(self.error(what)),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), PddlError> {
        let sym = self.expect_symbol(&format!("'{kw}'"))?;
        if sym == kw {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.error(&format!("'{kw}'")))
        }
    }

    fn at_rparen(&self) -> bool {
        matches!(self.peek(), Some(Token::RParen))
    }

    /// Parses `name... [- type] name... [- type]` until ')'; untyped names
    /// default to `object`.
    fn typed_list(&mut self, var_prefixed: bool) -> Result<Vec<(String, String)>, PddlError> {
        let mut out = Vec::new();
        let mut pending: Vec<String> = Vec::new();
        loop {
            if self.at_rparen() {
                for name in pending.drain(..) {
                    out.push((name, OBJECT_TYPE.to_string()));
                }
                return Ok(out);
            }
            let sym = self.expect_symbol("name or '-'")?;
            if sym == "-" {
                let ty = self.expect_symbol("type name")?;
                if pending.is_empty() {
                    return Err(self.error("name before '-'"));
                }
                for name in pending.drain(..) {
                    out.push((name, ty.clone()));
                }
            } else if var_prefixed {
                let name = sym.strip_prefix('?').ok_or_else(|| self.error("'?variable'"))?;
                if name.is_empty() {
                    return Err(self.error("'?variable'"));
                }
                pending.push(name.to_string());
            } else {
                if sym.starts_with('?') {
                    return Err(self.error("constant name (not a variable)"));
                }
                pending.push(sym);
            }
        }
    }

    /// Parses `(pred arg...)` where args may be `?vars` or constants.
    fn schema_atom(&mut self) -> Result<SchemaAtom, PddlError> {
        self.expect_lparen("atom")?;
        let predicate = self.expect_symbol("predicate name")?;
        let mut args = Vec::new();
        while !self.at_rparen() {
            let sym = self.expect_symbol("atom argument")?;
            if let Some(v) = sym.strip_prefix('?') {
                args.push(Term::Var(v.to_string()));
            } else {
                args.push(Term::Const(sym));
            }
        }
        self.expect_rparen("atom")?;
        Ok(SchemaAtom { predicate, args })
    }

    /// Parses `(pred const...)`.
    fn ground_atom(&mut self) -> Result<GroundAtom, PddlError> {
        let atom = self.schema_atom()?;
        let mut args = Vec::new();
        for term in atom.args {
            match term {
                Term::Const(c) => args.push(c),
                Term::Var(v) => {
                    return Err(PddlError::UnsupportedFeature(format!(
                        "variable '?{v}' in a ground context"
                    )))
                }
            }
        }
        Ok(GroundAtom { predicate: atom.predicate, args })
    }

    /// `(and (p ...) ...)` or a single atom. `allow_not` enables `(not ...)`
    /// entries, returned in the second set.
    fn conjunction(
        &mut self,
        allow_not: bool,
        context: &str,
    ) -> Result<(Vec<SchemaAtom>, Vec<SchemaAtom>), PddlError> {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        self.expect_lparen(context)?;
        match self.peek() {
            Some(Token::Symbol(s)) if s == "and" => {
                self.next();
                while !self.at_rparen() {
                    self.conjunct(allow_not, context, &mut pos, &mut neg)?;
                }
                self.expect_rparen(context)?;
            }
            _ => {
                // Single literal without `and`; rewind to reparse the list.
                self.pos -= 1;
                self.conjunct(allow_not, context, &mut pos, &mut neg)?;
            }
        }
        Ok((pos, neg))
    }

    fn conjunct(
        &mut self,
        allow_not: bool,
        context: &str,
        pos: &mut Vec<SchemaAtom>,
        neg: &mut Vec<SchemaAtom>,
    ) -> Result<(), PddlError> {
        // Look ahead for `(not ...)`.
        let checkpoint = self.pos;
        self.expect_lparen(context)?;
        if let Some(Token::Symbol(s)) = self.peek() {
            if s == "not" {
                if !allow_not {
                    return Err(PddlError::UnsupportedFeature(format!(
                        "negation in {context} (only :effect may delete)"
                    )));
                }
                self.next();
                let atom = self.schema_atom()?;
                self.expect_rparen("(not ...)")?;
                neg.push(atom);
                return Ok(());
            }
        }
        self.pos = checkpoint;
        pos.push(self.schema_atom()?);
        Ok(())
    }

    fn requirements(&mut self) -> Result<(), PddlError> {
        while !self.at_rparen() {
            let req = self.expect_symbol("requirement flag")?;
            match req.as_str() {
                ":strips" | ":typing" => {}
                other => {
                    return Err(PddlError::UnsupportedFeature(format!(
                        "requirement '{other}' (only :strips and :typing)"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Parses a domain file in the supported subset.
pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let mut p = Parser::new(text);
    p.expect_lparen("domain definition")?;
    p.expect_keyword("define")?;
    p.expect_lparen("(domain ...)")?;
    p.expect_keyword("domain")?;
    let name = p.expect_symbol("domain name")?;
    p.expect_rparen("(domain ...)")?;

    let mut types = Vec::new();
    let mut constants = Vec::new();
    let mut predicates = Vec::new();
    let mut actions = Vec::new();

    while !p.at_rparen() {
        p.expect_lparen("domain section")?;
        let section = p.expect_symbol("section keyword")?;
        match section.as_str() {
            ":requirements" => p.requirements()?,
            ":types" => {
                for (tname, parent) in p.typed_list(false)? {
                    types.push(TypeDef { name: tname, parent });
                }
            }
            ":constants" => {
                for (cname, ty) in p.typed_list(false)? {
                    constants.push(TypedObject { name: cname, ty });
                }
            }
            ":predicates" => {
                while !p.at_rparen() {
                    p.expect_lparen("predicate declaration")?;
                    let pname = p.expect_symbol("predicate name")?;
                    let params = p
                        .typed_list(true)?
                        .into_iter()
                        .map(|(n, ty)| Param { name: n, ty })
                        .collect();
                    p.expect_rparen("predicate declaration")?;
                    predicates.push(PredicateSchema { name: pname, params });
                }
            }
            ":action" => {
                let aname = p.expect_symbol("action name")?;
                let mut params = Vec::new();
                let mut precondition = BTreeSet::new();
                let mut add_list = BTreeSet::new();
                let mut delete_list = BTreeSet::new();
                while !p.at_rparen() {
                    let field = p.expect_symbol("action field keyword")?;
                    match field.as_str() {
                        ":parameters" => {
                            p.expect_lparen(":parameters list")?;
                            params = p
                                .typed_list(true)?
                                .into_iter()
                                .map(|(n, ty)| Param { name: n, ty })
                                .collect();
                            p.expect_rparen(":parameters list")?;
                        }
                        ":precondition" => {
                            let (pos, _) = p.conjunction(false, ":precondition")?;
                            precondition = pos.into_iter().collect();
                        }
                        ":effect" => {
                            let (pos, neg) = p.conjunction(true, ":effect")?;
                            add_list = pos.into_iter().collect();
                            delete_list = neg.into_iter().collect();
                        }
                        other => {
                            return Err(PddlError::UnsupportedFeature(format!(
                                "action field '{other}'"
                            )))
                        }
                    }
                }
                actions.push(ActionSchema { name: aname, params, precondition, add_list, delete_list });
            }
            other => {
                return Err(PddlError::UnsupportedFeature(format!("domain section '{other}'")))
            }
        }
        p.expect_rparen("domain section")?;
    }
    p.expect_rparen("domain definition")?;
    Domain::new(name, types, constants, predicates, actions)
}

/// Parses a problem file and cross-validates it against `domain`.
pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem, PddlError> {
    let mut p = Parser::new(text);
    p.expect_lparen("problem definition")?;
    p.expect_keyword("define")?;
    p.expect_lparen("(problem ...)")?;
    p.expect_keyword("problem")?;
    let name = p.expect_symbol("problem name")?;
    p.expect_rparen("(problem ...)")?;

    let mut domain_name = String::new();
    let mut objects = Vec::new();
    let mut init = BTreeSet::new();
    let mut goal = BTreeSet::new();

    while !p.at_rparen() {
        p.expect_lparen("problem section")?;
        let section = p.expect_symbol("section keyword")?;
        match section.as_str() {
            ":domain" => {
                domain_name = p.expect_symbol("domain name")?;
            }
            ":objects" => {
                for (oname, ty) in p.typed_list(false)? {
                    objects.push(TypedObject { name: oname, ty });
                }
            }
            ":init" => {
                while !p.at_rparen() {
                    init.insert(p.ground_atom()?);
                }
            }
            ":goal" => {
                let (pos, neg) = p.conjunction(true, ":goal")?;
                if !neg.is_empty() {
                    return Err(PddlError::UnsupportedFeature(
                        "negative goal literals".to_string(),
                    ));
                }
                for atom in pos {
                    let mut args = Vec::new();
                    for term in atom.args {
                        match term {
                            Term::Const(c) => args.push(c),
                            Term::Var(v) => {
                                return Err(PddlError::UnsupportedFeature(format!(
                                    "variable '?{v}' in :goal"
                                )))
                            }
                        }
                    }
                    goal.insert(GroundAtom { predicate: atom.predicate, args });
                }
            }
            other => {
                return Err(PddlError::UnsupportedFeature(format!("problem section '{other}'")))
            }
        }
        p.expect_rparen("problem section")?;
    }
    p.expect_rparen("problem definition")?;
    Problem::new(name, domain_name, objects, init, goal, domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::parse_domain;

    const MOVE_DOMAIN: &str = "(define (domain move_world)\n\
        (:requirements :strips :typing)\n\
        (:types location robot)\n\
        (:predicates (at ?r - robot ?l - location) (connected ?a - location ?b - location))\n\
        (:action move\n\
          :parameters (?r - robot ?from - location ?to - location)\n\
          :precondition (and (at ?r ?from) (connected ?from ?to))\n\
          :effect (and (at ?r ?to) (not (at ?r ?from)))))";

    #[test]
    fn untyped_entries_default_to_object() {
        let d = parse_domain("(define (domain d) (:types a b - a c) (:predicates (p ?x - c)))")
            .unwrap();
        let c = d.types.iter().find(|t| t.name == "c").unwrap();
        assert_eq!(c.parent, "object");
        let b = d.types.iter().find(|t| t.name == "b").unwrap();
        assert_eq!(b.parent, "a");
    }

    #[test]
    fn unknown_predicate_in_problem() {
        let d = parse_domain(MOVE_DOMAIN).unwrap();
        let err = parse_problem(
            "(define (problem p) (:domain move_world)\n\
             (:objects r1 - robot a - location)\n\
             (:init (flying r1))\n\
             (:goal (and (at r1 a))))",
            &d,
        )
        .unwrap_err();
        assert_eq!(err, PddlError::UnknownPredicate("flying".into()));
    }

    #[test]
    fn arity_mismatch_detected() {
        let d = parse_domain(MOVE_DOMAIN).unwrap();
        let err = parse_problem(
            "(define (problem p) (:domain move_world)\n\
             (:objects r1 - robot a - location)\n\
             (:init (at r1))\n\
             (:goal (and (at r1 a))))",
            &d,
        )
        .unwrap_err();
        assert_eq!(err, PddlError::ArityMismatch { predicate: "at".into(), expected: 2, got: 1 });
    }

    #[test]
    fn unknown_type_detected() {
        let err =
            parse_domain("(define (domain d) (:types a) (:predicates (p ?x - ghost)))").unwrap_err();
        assert_eq!(err, PddlError::UnknownType("ghost".into()));
    }

    #[test]
    fn unsupported_requirement_rejected_loudly() {
        let err = parse_domain("(define (domain d) (:requirements :strips :durative-actions))")
            .unwrap_err();
        assert_eq!(
            err,
            PddlError::UnsupportedFeature(
                "requirement ':durative-actions' (only :strips and :typing)".into()
            )
        );
    }

    #[test]
    fn negation_outside_effect_rejected() {
        let err = parse_domain(
            "(define (domain d) (:predicates (p ?x))\n\
             (:action a :parameters (?x) :precondition (not (p ?x)) :effect (p ?x)))",
        )
        .unwrap_err();
        assert!(matches!(err, PddlError::UnsupportedFeature(_)));
    }

    #[test]
    fn negative_goal_rejected() {
        let d = parse_domain(MOVE_DOMAIN).unwrap();
        let err = parse_problem(
            "(define (problem p) (:domain move_world)\n\
             (:objects r1 - robot a - location)\n\
             (:init (at r1 a))\n\
             (:goal (and (not (at r1 a)))))",
            &d,
        )
        .unwrap_err();
        assert_eq!(err, PddlError::UnsupportedFeature("negative goal literals".into()));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_domain("(define (domain d) (:types").unwrap_err();
        assert!(matches!(err, PddlError::SyntaxError { line: 1, .. }));
    }

    #[test]
    fn free_variable_in_effect_rejected() {
        let err = parse_domain(
            "(define (domain d) (:predicates (p ?x))\n\
             (:action a :parameters (?x) :precondition (p ?x) :effect (p ?y)))",
        )
        .unwrap_err();
        assert_eq!(err, PddlError::FreeVariable("y".into()));
    }

    #[test]
    fn single_literal_goal_without_and() {
        let d = parse_domain(MOVE_DOMAIN).unwrap();
        let p = parse_problem(
            "(define (problem p) (:domain move_world)\n\
             (:objects r1 - robot a - location)\n\
             (:init (at r1 a))\n\
             (:goal (at r1 a)))",
            &d,
        )
        .unwrap();
        assert_eq!(p.goal.len(), 1);
    }
}
