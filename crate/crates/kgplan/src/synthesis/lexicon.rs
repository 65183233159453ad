//! The goal-template lexicon: a data table mapping verb patterns to goal
//! triples, shipped as a config file and extendable without code changes.

use serde::Deserialize;

use super::SynthesisError;
use crate::kg::{normalize_token, Triple};

const DEFAULT_LEXICON: &str = include_str!("../../assets/lexicon.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct RelationTemplate {
    pub verb: String,
    pub prepositions: Vec<String>,
    pub relation: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StateTemplate {
    pub verbs: Vec<String>,
    pub state: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Lexicon {
    #[serde(default)]
    pub relation_templates: Vec<RelationTemplate>,
    #[serde(default)]
    pub state_templates: Vec<StateTemplate>,
}

impl Default for Lexicon {
    fn default() -> Self {
        toml::from_str(DEFAULT_LEXICON).expect("bundled lexicon must parse")
    }
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self, SynthesisError> {
        toml::from_str(text).map_err(|e| SynthesisError::Lexicon(e.to_string()))
    }

    /// First words of all template verbs, used to split clauses on "and".
    fn leading_verbs(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.relation_templates.iter().map(|t| t.verb.as_str()).collect();
        for t in &self.state_templates {
            for v in &t.verbs {
                out.push(v.split_whitespace().next().unwrap_or(v));
            }
        }
        out
    }

    /// Matches the task text against the templates, producing goal triples.
    /// Entities are resolved against `resolve` (a closure over the
    /// inventory); unresolvable phrases or unmatched text yield an error.
    pub fn match_text(
        &self,
        text: &str,
        resolve: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Vec<Triple>, SynthesisError> {
        let lowered = text.to_lowercase();
        let mut clauses: Vec<String> = Vec::new();
        for fragment in lowered.split(&[',', '.', ';'][..]) {
            let fragment = fragment.trim().trim_start_matches("and ").trim();
            if fragment.is_empty() {
                continue;
            }
            // Split on " and " only where the right side starts a new verb
            // phrase; otherwise the "and" joins an object list.
            let mut rest = fragment;
            loop {
                match find_verb_split(rest, &self.leading_verbs()) {
                    Some(pos) => {
                        clauses.push(rest[..pos].trim().to_string());
                        rest = rest[pos + 5..].trim();
                    }
                    None => {
                        clauses.push(rest.trim().to_string());
                        break;
                    }
                }
            }
        }

        let mut triples = Vec::new();
        for clause in &clauses {
            match self.match_clause(clause, resolve)? {
                Some(mut t) => triples.append(&mut t),
                None => {
                    return Err(SynthesisError::UngroundableGoal(format!(
                        "no goal template matches '{clause}'"
                    )))
                }
            }
        }
        if triples.is_empty() {
            return Err(SynthesisError::UngroundableGoal(
                "task text produced no goal conditions".to_string(),
            ));
        }
        Ok(triples)
    }

    fn match_clause(
        &self,
        clause: &str,
        resolve: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Option<Vec<Triple>>, SynthesisError> {
        // State templates first; their verb phrases may be multi-word
        // ("switch off"), so prefer the longest match.
        let mut state_hits: Vec<(&str, &str)> = Vec::new();
        for template in &self.state_templates {
            for verb in &template.verbs {
                if let Some(rest) = strip_phrase(clause, verb) {
                    state_hits.push((verb, rest));
                    let _ = &template.state;
                }
            }
        }
        state_hits.sort_by_key(|(v, _)| std::cmp::Reverse(v.len()));
        if let Some((verb, rest)) = state_hits.first() {
            let template = self
                .state_templates
                .iter()
                .find(|t| t.verbs.iter().any(|v| v == verb))
                .unwrap();
            let entity = resolve_phrase(rest, resolve)?;
            return Ok(Some(vec![
                Triple::new(&entity, "has_state", &template.state).expect("validated tokens")
            ]));
        }
        for template in &self.relation_templates {
            let Some(rest) = strip_phrase(clause, &template.verb) else { continue };
            let words: Vec<&str> = rest.split_whitespace().collect();
            let Some(split) = words.iter().position(|w| {
                template.prepositions.iter().any(|p| p == w)
            }) else {
                continue;
            };
            let items_part = words[..split].join(" ");
            let target_part = words[split + 1..].join(" ");
            let target = resolve_phrase(&target_part, resolve)?;
            let mut triples = Vec::new();
            for item in items_part.split(" and ") {
                let entity = resolve_phrase(item, resolve)?;
                triples.push(
                    Triple::new(&entity, &template.relation, &target).expect("validated tokens"),
                );
            }
            return Ok(Some(triples));
        }
        Ok(None)
    }
}

/// Returns the remainder if `clause` starts with the given verb phrase.
fn strip_phrase<'a>(clause: &'a str, phrase: &str) -> Option<&'a str> {
    let rest = clause.strip_prefix(phrase)?;
    if rest.is_empty() || rest.starts_with(' ') {
        Some(rest.trim_start())
    } else {
        None
    }
}

/// Finds " and " positions whose right-hand side begins a known verb.
fn find_verb_split(fragment: &str, verbs: &[&str]) -> Option<usize> {
    let mut search_from = 0;
    while let Some(rel) = fragment[search_from..].find(" and ") {
        let pos = search_from + rel;
        let right = &fragment[pos + 5..];
        let first_word = right.split_whitespace().next().unwrap_or("");
        if verbs.contains(&first_word) {
            return Some(pos);
        }
        search_from = pos + 5;
    }
    None
}

/// Strips articles and resolves a noun phrase to an inventory entity.
fn resolve_phrase(
    phrase: &str,
    resolve: &dyn Fn(&str) -> Option<String>,
) -> Result<String, SynthesisError> {
    let words: Vec<&str> =
        phrase.split_whitespace().filter(|w| !matches!(*w, "the" | "a" | "an")).collect();
    let candidate = normalize_token(&words.join(" "));
    resolve(&candidate).ok_or_else(|| {
        SynthesisError::UngroundableGoal(format!("'{phrase}' is not a known entity"))
    })
}
