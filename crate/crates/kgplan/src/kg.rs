//! Triple-store knowledge graph partitioned into relationship, property, and
//! reachability subgraphs, with functional-relation replacement, consistency
//! checking, and a line-oriented text serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KgError {
    #[error("malformed triple: empty {0} after normalization")]
    MalformedTriple(&'static str),
    #[error("delta conflict: {0} appears in both additions and removals")]
    DeltaConflict(String),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
}

/// Normalizes a token to lowercase snake_case: whitespace runs and dashes
/// become single underscores.
pub fn normalize_token(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut last_sep = true;
    for ch in raw.trim().chars() {
        if ch.is_whitespace() || ch == '-' {
            if !last_sep {
                out.push('_');
                last_sep = true;
            }
        } else {
            for lc in ch.to_lowercase() {
                out.push(lc);
            }
            last_sep = false;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

/// A (subject, relation, object) fact. Fields are normalized on construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: &str, relation: &str, object: &str) -> Result<Self, KgError> {
        let subject = normalize_token(subject);
        let relation = normalize_token(relation);
        let object = normalize_token(object);
        if subject.is_empty() {
            return Err(KgError::MalformedTriple("subject"));
        }
        if relation.is_empty() {
            return Err(KgError::MalformedTriple("relation"));
        }
        if object.is_empty() {
            return Err(KgError::MalformedTriple("object"));
        }
        Ok(Triple { subject, relation, object })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.subject, self.relation, self.object)
    }
}

/// The three subgraphs the graph is partitioned into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubgraphKind {
    Relation,
    Property,
    Reach,
}

impl SubgraphKind {
    pub const ALL: [SubgraphKind; 3] =
        [SubgraphKind::Relation, SubgraphKind::Property, SubgraphKind::Reach];

    pub fn as_str(self) -> &'static str {
        match self {
            SubgraphKind::Relation => "relation",
            SubgraphKind::Property => "property",
            SubgraphKind::Reach => "reach",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relation" => Some(SubgraphKind::Relation),
            "property" => Some(SubgraphKind::Property),
            "reach" => Some(SubgraphKind::Reach),
            _ => None,
        }
    }
}

impl fmt::Display for SubgraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-graph configuration: which relations are single-valued per subject and
/// which state values are mutually exclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphConfig {
    pub functional_relations: BTreeSet<String>,
    pub exclusive_state_sets: Vec<BTreeSet<String>>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            functional_relations: ["at_location", "has_state"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            exclusive_state_sets: vec![
                ["open", "closed"].iter().map(|s| s.to_string()).collect(),
                ["on", "off"].iter().map(|s| s.to_string()).collect(),
            ],
        }
    }
}

impl GraphConfig {
    /// A config with no functional relations and no exclusion sets.
    pub fn permissive() -> Self {
        GraphConfig { functional_relations: BTreeSet::new(), exclusive_state_sets: Vec::new() }
    }
}

/// A batched set of additions and removals applied atomically.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphDelta {
    additions: BTreeSet<(SubgraphKind, Triple)>,
    removals: BTreeSet<(SubgraphKind, Triple)>,
}

impl GraphDelta {
    pub fn new(
        additions: BTreeSet<(SubgraphKind, Triple)>,
        removals: BTreeSet<(SubgraphKind, Triple)>,
    ) -> Result<Self, KgError> {
        if let Some((_, t)) = additions.intersection(&removals).next() {
            return Err(KgError::DeltaConflict(t.to_string()));
        }
        Ok(GraphDelta { additions, removals })
    }

    pub fn additions_only<I: IntoIterator<Item = (SubgraphKind, Triple)>>(items: I) -> Self {
        GraphDelta { additions: items.into_iter().collect(), removals: BTreeSet::new() }
    }

    pub fn additions(&self) -> &BTreeSet<(SubgraphKind, Triple)> {
        &self.additions
    }

    pub fn removals(&self) -> &BTreeSet<(SubgraphKind, Triple)> {
        &self.removals
    }

    pub fn is_empty(&self) -> bool {
        self.additions.is_empty() && self.removals.is_empty()
    }

    /// Swaps additions and removals.
    pub fn inverse(&self) -> Self {
        GraphDelta { additions: self.removals.clone(), removals: self.additions.clone() }
    }

    pub fn merge(&mut self, other: &GraphDelta) {
        for a in &other.additions {
            self.removals.remove(a);
            self.additions.insert(a.clone());
        }
        for r in &other.removals {
            self.additions.remove(r);
            self.removals.insert(r.clone());
        }
    }

    /// Canonical one-line rendering, used for logging and memoization keys.
    pub fn canonical_string(&self) -> String {
        let mut parts = Vec::new();
        for (k, t) in &self.additions {
            parts.push(format!("+{} {} {} {}", k, t.subject, t.relation, t.object));
        }
        for (k, t) in &self.removals {
            parts.push(format!("-{} {} {} {}", k, t.subject, t.relation, t.object));
        }
        parts.join("; ")
    }
}

/// A consistency problem found by [`KnowledgeGraph::check_consistency`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A functional relation has more than one object for a subject.
    FunctionalConflict { kind: SubgraphKind, subject: String, relation: String, objects: Vec<String> },
    /// An `at_location` object that no `connected` triple mentions.
    DanglingLocation { subject: String, location: String },
    /// A subject holds two states from the same exclusion set.
    ExclusiveStates { kind: SubgraphKind, subject: String, states: Vec<String> },
}

/// A wildcard-capable query pattern over (subject, relation, object).
#[derive(Debug, Clone, Default)]
pub struct TriplePattern {
    pub subject: Option<String>,
    pub relation: Option<String>,
    pub object: Option<String>,
}

impl TriplePattern {
    pub fn new(subject: Option<&str>, relation: Option<&str>, object: Option<&str>) -> Self {
        TriplePattern {
            subject: subject.map(normalize_token),
            relation: relation.map(normalize_token),
            object: object.map(normalize_token),
        }
    }

    fn matches(&self, t: &Triple) -> bool {
        self.subject.as_deref().map_or(true, |s| s == t.subject)
            && self.relation.as_deref().map_or(true, |r| r == t.relation)
            && self.object.as_deref().map_or(true, |o| o == t.object)
    }
}

/// The three-part triple store. Mutations go through an exclusive handle and
/// bump `revision`; values are freely shareable across threads once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples_by_kind: BTreeMap<SubgraphKind, BTreeSet<Triple>>,
    entity_index: BTreeMap<String, BTreeSet<(SubgraphKind, Triple)>>,
    revision: u64,
    config: GraphConfig,
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        Self::new(GraphConfig::default())
    }
}

impl KnowledgeGraph {
    pub fn new(config: GraphConfig) -> Self {
        let mut triples_by_kind = BTreeMap::new();
        for kind in SubgraphKind::ALL {
            triples_by_kind.insert(kind, BTreeSet::new());
        }
        KnowledgeGraph { triples_by_kind, entity_index: BTreeMap::new(), revision: 0, config }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn subgraph(&self, kind: SubgraphKind) -> &BTreeSet<Triple> {
        &self.triples_by_kind[&kind]
    }

    pub fn len(&self) -> usize {
        self.triples_by_kind.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, kind: SubgraphKind, t: &Triple) -> bool {
        self.triples_by_kind[&kind].contains(t)
    }

    /// All entities occurring as a subject or object anywhere in the graph.
    pub fn entities(&self) -> BTreeSet<String> {
        self.entity_index.keys().cloned().collect()
    }

    fn index_add(&mut self, kind: SubgraphKind, t: &Triple) {
        self.entity_index
            .entry(t.subject.clone())
            .or_default()
            .insert((kind, t.clone()));
        self.entity_index
            .entry(t.object.clone())
            .or_default()
            .insert((kind, t.clone()));
    }

    fn index_remove(&mut self, kind: SubgraphKind, t: &Triple) {
        for key in [&t.subject, &t.object] {
            if let Some(set) = self.entity_index.get_mut(key) {
                set.remove(&(kind, t.clone()));
                if set.is_empty() {
                    self.entity_index.remove(key);
                }
            }
        }
    }

    fn raw_insert(&mut self, kind: SubgraphKind, t: Triple) -> bool {
        if self.triples_by_kind.get_mut(&kind).unwrap().insert(t.clone()) {
            self.index_add(kind, &t);
            true
        } else {
            false
        }
    }

    fn raw_remove(&mut self, kind: SubgraphKind, t: &Triple) -> bool {
        if self.triples_by_kind.get_mut(&kind).unwrap().remove(t) {
            self.index_remove(kind, t);
            true
        } else {
            false
        }
    }

    /// Inserts without bumping the revision; returns whether the triple set
    /// changed. Functional relations replace the previous object
    /// (last-writer-wins).
    fn insert_inner(&mut self, kind: SubgraphKind, t: Triple) -> bool {
        let mut changed = false;
        if self.config.functional_relations.contains(&t.relation) {
            let conflicting: Vec<Triple> = self.triples_by_kind[&kind]
                .iter()
                .filter(|old| {
                    old.subject == t.subject && old.relation == t.relation && old.object != t.object
                })
                .cloned()
                .collect();
            for old in conflicting {
                self.raw_remove(kind, &old);
                changed = true;
            }
        }
        changed | self.raw_insert(kind, t)
    }

    /// Inserts a triple into one subgraph. Increments the revision iff the
    /// graph changed; returns whether it did.
    pub fn insert(&mut self, kind: SubgraphKind, t: Triple) -> bool {
        let changed = self.insert_inner(kind, t);
        if changed {
            self.revision += 1;
        }
        changed
    }

    /// Removes a triple from one subgraph; revision bumps iff present.
    pub fn remove(&mut self, kind: SubgraphKind, t: &Triple) -> bool {
        let changed = self.raw_remove(kind, t);
        if changed {
            self.revision += 1;
        }
        changed
    }

    /// Applies removals then additions as one mutation. The revision bumps at
    /// most once, and only if the triple sets changed.
    pub fn apply_delta(&mut self, delta: &GraphDelta) -> bool {
        let mut changed = false;
        for (kind, t) in delta.removals() {
            changed |= self.raw_remove(*kind, t);
        }
        for (kind, t) in delta.additions() {
            changed |= self.insert_inner(*kind, t.clone());
        }
        if changed {
            self.revision += 1;
        }
        changed
    }

    /// Triples matching the pattern, optionally restricted to one subgraph.
    /// Pure: no mutation, deterministic order.
    pub fn query(
        &self,
        pattern: &TriplePattern,
        kind: Option<SubgraphKind>,
    ) -> BTreeSet<(SubgraphKind, Triple)> {
        let anchor = pattern.subject.as_ref().or(pattern.object.as_ref());
        let mut out = BTreeSet::new();
        if let Some(entity) = anchor {
            if let Some(incident) = self.entity_index.get(entity) {
                for (k, t) in incident {
                    if kind.map_or(true, |want| want == *k) && pattern.matches(t) {
                        out.insert((*k, t.clone()));
                    }
                }
            }
            return out;
        }
        for (k, triples) in &self.triples_by_kind {
            if kind.map_or(true, |want| want == *k) {
                for t in triples {
                    if pattern.matches(t) {
                        out.insert((*k, t.clone()));
                    }
                }
            }
        }
        out
    }

    /// Set union of the three subgraphs; a triple present in several kinds
    /// appears once.
    pub fn union_view(&self) -> BTreeSet<Triple> {
        let mut out = BTreeSet::new();
        for triples in self.triples_by_kind.values() {
            out.extend(triples.iter().cloned());
        }
        out
    }

    /// Reports functional conflicts, dangling `at_location` references, and
    /// exclusive-state pairs under this graph's own config.
    pub fn check_consistency(&self) -> Vec<Violation> {
        self.check_consistency_with(&self.config.clone())
    }

    /// Same checks, but audited under an externally supplied (possibly
    /// stricter) config.
    pub fn check_consistency_with(&self, config: &GraphConfig) -> Vec<Violation> {
        let mut out = Vec::new();
        for (kind, triples) in &self.triples_by_kind {
            let mut by_subject_relation: BTreeMap<(&str, &str), Vec<&str>> = BTreeMap::new();
            for t in triples {
                by_subject_relation
                    .entry((&t.subject, &t.relation))
                    .or_default()
                    .push(&t.object);
            }
            for ((subject, relation), objects) in &by_subject_relation {
                if config.functional_relations.contains(*relation) && objects.len() > 1 {
                    out.push(Violation::FunctionalConflict {
                        kind: *kind,
                        subject: subject.to_string(),
                        relation: relation.to_string(),
                        objects: objects.iter().map(|o| o.to_string()).collect(),
                    });
                }
            }
            let mut states_by_subject: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
            for t in triples {
                if t.relation == "has_state" {
                    states_by_subject.entry(&t.subject).or_default().push(&t.object);
                }
            }
            for (subject, states) in &states_by_subject {
                for set in &config.exclusive_state_sets {
                    let held: Vec<String> = states
                        .iter()
                        .filter(|s| set.contains(**s))
                        .map(|s| s.to_string())
                        .collect();
                    if held.len() > 1 {
                        out.push(Violation::ExclusiveStates {
                            kind: *kind,
                            subject: subject.to_string(),
                            states: held,
                        });
                    }
                }
            }
        }
        // Locations referenced by at_location must be known to the reach
        // subgraph's connectivity; an empty connectivity layer disables the
        // check (single-room graphs carry no edges).
        let reach = &self.triples_by_kind[&SubgraphKind::Reach];
        let mut connected_locations: BTreeSet<&str> = BTreeSet::new();
        for t in reach {
            if t.relation == "connected" {
                connected_locations.insert(&t.subject);
                connected_locations.insert(&t.object);
            }
        }
        if !connected_locations.is_empty() {
            for t in reach {
                if t.relation == "at_location" && !connected_locations.contains(t.object.as_str()) {
                    out.push(Violation::DanglingLocation {
                        subject: t.subject.clone(),
                        location: t.object.clone(),
                    });
                }
            }
        }
        out
    }

    /// Line-oriented canonical form: `<kind> <subject> <relation> <object>`,
    /// sorted by kind then triple.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for kind in SubgraphKind::ALL {
            for t in &self.triples_by_kind[&kind] {
                out.push_str(&format!("{} {} {} {}\n", kind, t.subject, t.relation, t.object));
            }
        }
        out
    }

    /// Parses the serialize format; `#` starts a comment line. Triples are
    /// restored verbatim (no functional replacement), so round-trips preserve
    /// the exact triple sets.
    pub fn deserialize(text: &str) -> Result<Self, KgError> {
        Self::deserialize_with(text, GraphConfig::default())
    }

    pub fn deserialize_with(text: &str, config: GraphConfig) -> Result<Self, KgError> {
        let mut graph = KnowledgeGraph::new(config);
        let mut changed = false;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(KgError::ParseError {
                    line: idx + 1,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let kind = SubgraphKind::parse(fields[0]).ok_or_else(|| KgError::ParseError {
                line: idx + 1,
                message: format!("unknown subgraph kind '{}'", fields[0]),
            })?;
            let triple = Triple::new(fields[1], fields[2], fields[3]).map_err(|e| {
                KgError::ParseError { line: idx + 1, message: e.to_string() }
            })?;
            changed |= graph.raw_insert(kind, triple);
        }
        if changed {
            graph.revision = 1;
        }
        Ok(graph)
    }

    /// Triple-set equality ignoring revision and config.
    pub fn same_content(&self, other: &KnowledgeGraph) -> bool {
        self.triples_by_kind == other.triples_by_kind
    }

    /// A copy with the given subgraphs emptied (ablation support).
    pub fn ablated_copy(&self, drop: &[SubgraphKind]) -> KnowledgeGraph {
        let mut out = KnowledgeGraph::new(self.config.clone());
        for kind in SubgraphKind::ALL {
            if drop.contains(&kind) {
                continue;
            }
            for t in &self.triples_by_kind[&kind] {
                out.raw_insert(kind, t.clone());
            }
        }
        out.revision = 1;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, r: &str, o: &str) -> Triple {
        Triple::new(s, r, o).unwrap()
    }

    fn rebuilt_index(
        g: &KnowledgeGraph,
    ) -> BTreeMap<String, BTreeSet<(SubgraphKind, Triple)>> {
        let mut index: BTreeMap<String, BTreeSet<(SubgraphKind, Triple)>> = BTreeMap::new();
        for kind in SubgraphKind::ALL {
            for triple in g.subgraph(kind) {
                index
                    .entry(triple.subject.clone())
                    .or_default()
                    .insert((kind, triple.clone()));
                index
                    .entry(triple.object.clone())
                    .or_default()
                    .insert((kind, triple.clone()));
            }
        }
        index
    }

    /// Fig. 4-style fixture: three disjoint subgraphs, three triples each.
    fn fixture() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::default();
        g.insert(SubgraphKind::Relation, t("cup", "on", "table"));
        g.insert(SubgraphKind::Relation, t("watch", "in", "drawer"));
        g.insert(SubgraphKind::Relation, t("book", "on", "desk"));
        g.insert(SubgraphKind::Property, t("robot_a", "has_capability", "pickup"));
        g.insert(SubgraphKind::Property, t("drawer", "has_state", "closed"));
        g.insert(SubgraphKind::Property, t("drawer", "has_property", "openable"));
        g.insert(SubgraphKind::Reach, t("microwave", "at_location", "location_1"));
        g.insert(SubgraphKind::Reach, t("cup", "at_location", "location_2"));
        g.insert(SubgraphKind::Reach, t("location_1", "connected", "location_2"));
        g
    }

    #[test]
    fn normalization_is_lower_snake_case() {
        assert_eq!(normalize_token("  Robot A "), "robot_a");
        assert_eq!(normalize_token("coffee-machine"), "coffee_machine");
        assert_eq!(normalize_token("Drawer"), "drawer");
        assert_eq!(normalize_token("   "), "");
    }

    #[test]
    fn malformed_triple_rejected() {
        assert_eq!(Triple::new("", "on", "table"), Err(KgError::MalformedTriple("subject")));
        assert_eq!(Triple::new("cup", " ", "table"), Err(KgError::MalformedTriple("relation")));
        assert_eq!(Triple::new("cup", "on", "-"), Err(KgError::MalformedTriple("object")));
    }

    #[test]
    fn insert_single_fact() {
        let mut g = KnowledgeGraph::default();
        assert!(g.insert(SubgraphKind::Relation, t("cup", "on", "table")));
        assert_eq!(g.len(), 1);
        assert!(g.contains(SubgraphKind::Relation, &t("cup", "on", "table")));
        assert_eq!(g.revision(), 1);
    }

    #[test]
    fn insert_is_idempotent() {
        let mut g = KnowledgeGraph::default();
        g.insert(SubgraphKind::Reach, t("microwave", "at_location", "location_1"));
        let before = g.clone();
        let rev = g.revision();
        assert!(!g.insert(SubgraphKind::Reach, t("microwave", "at_location", "location_1")));
        assert!(g.same_content(&before));
        assert_eq!(g.revision(), rev);
    }

    #[test]
    fn functional_relation_replaces_old_object() {
        let mut g = KnowledgeGraph::default();
        g.insert(SubgraphKind::Property, t("drawer", "has_state", "closed"));
        g.insert(SubgraphKind::Property, t("drawer", "has_state", "open"));
        let found = g.query(&TriplePattern::new(Some("drawer"), Some("has_state"), None), None);
        let objects: Vec<&str> =
            found.iter().map(|(_, triple)| triple.object.as_str()).collect();
        assert_eq!(objects, vec!["open"]);
    }

    #[test]
    fn query_single_fact_by_subject() {
        let mut g = KnowledgeGraph::default();
        g.insert(SubgraphKind::Relation, t("cup", "on", "table"));
        let found = g.query(&TriplePattern::new(Some("cup"), None, None), None);
        assert_eq!(found.len(), 1);
        assert!(found.contains(&(SubgraphKind::Relation, t("cup", "on", "table"))));
    }

    #[test]
    fn query_robot_capability_from_fixture() {
        let g = fixture();
        let found =
            g.query(&TriplePattern::new(Some("robot_a"), Some("has_capability"), None), None);
        assert_eq!(found.len(), 1);
        assert!(
            found.contains(&(SubgraphKind::Property, t("robot_a", "has_capability", "pickup")))
        );
    }

    #[test]
    fn query_matches_linear_scan_on_random_graph() {
        // Deterministic pseudo-random construction, no rng dependency needed.
        let mut g = KnowledgeGraph::new(GraphConfig::permissive());
        let mut all: Vec<(SubgraphKind, Triple)> = Vec::new();
        let mut state = 2463534242u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..50 {
            let kind = SubgraphKind::ALL[(next() % 3) as usize];
            let triple = t(
                &format!("e{}", next() % 12),
                &format!("r{}", next() % 4),
                &format!("e{}", next() % 12),
            );
            g.insert(kind, triple.clone());
            all.push((kind, triple));
        }
        let patterns = [
            TriplePattern::new(Some("e3"), None, None),
            TriplePattern::new(None, Some("r1"), None),
            TriplePattern::new(None, None, Some("e7")),
            TriplePattern::new(Some("e2"), Some("r0"), None),
            TriplePattern::new(None, None, None),
        ];
        for pattern in &patterns {
            for kind in [None, Some(SubgraphKind::Relation), Some(SubgraphKind::Reach)] {
                let got = g.query(pattern, kind);
                let want: BTreeSet<(SubgraphKind, Triple)> = all
                    .iter()
                    .filter(|(k, triple)| {
                        kind.map_or(true, |w| w == *k) && pattern.matches(triple)
                    })
                    .cloned()
                    .collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn union_of_empty_graph_is_empty() {
        assert!(KnowledgeGraph::default().union_view().is_empty());
    }

    #[test]
    fn union_view_of_fixture_has_nine_triples() {
        let g = fixture();
        assert_eq!(g.union_view().len(), 9);
        let total: usize = SubgraphKind::ALL.iter().map(|k| g.subgraph(*k).len()).sum();
        assert_eq!(total, 9);
    }

    #[test]
    fn union_view_deduplicates_across_kinds() {
        let mut g = KnowledgeGraph::default();
        g.insert(SubgraphKind::Relation, t("cup", "on", "table"));
        g.insert(SubgraphKind::Property, t("cup", "on", "table"));
        assert_eq!(g.union_view().len(), 1);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn apply_empty_delta_is_identity() {
        let mut g = fixture();
        let before = g.clone();
        let rev = g.revision();
        assert!(!g.apply_delta(&GraphDelta::default()));
        assert!(g.same_content(&before));
        assert_eq!(g.revision(), rev);
    }

    #[test]
    fn apply_delta_then_inverse_restores_content() {
        let mut g = fixture();
        let before = g.union_view();
        let delta = GraphDelta::new(
            [(SubgraphKind::Relation, t("plate", "on", "counter"))].into_iter().collect(),
            [(SubgraphKind::Relation, t("cup", "on", "table"))].into_iter().collect(),
        )
        .unwrap();
        g.apply_delta(&delta);
        g.apply_delta(&delta.inverse());
        assert_eq!(g.union_view(), before);
    }

    #[test]
    fn delta_with_overlap_is_rejected() {
        let item = (SubgraphKind::Relation, t("cup", "on", "table"));
        let err = GraphDelta::new(
            [item.clone()].into_iter().collect(),
            [item].into_iter().collect(),
        )
        .unwrap_err();
        assert!(matches!(err, KgError::DeltaConflict(_)));
    }

    #[test]
    fn revision_strictly_increases_across_mutations() {
        let mut g = KnowledgeGraph::default();
        let mut last = g.revision();
        let mutations: Vec<Box<dyn Fn(&mut KnowledgeGraph) -> bool>> = vec![
            Box::new(|g| g.insert(SubgraphKind::Relation, t("cup", "on", "table"))),
            Box::new(|g| g.insert(SubgraphKind::Property, t("cup", "has_state", "clean"))),
            Box::new(|g| {
                g.apply_delta(&GraphDelta::additions_only(vec![(
                    SubgraphKind::Reach,
                    t("cup", "at_location", "kitchen"),
                )]))
            }),
            Box::new(|g| g.remove(SubgraphKind::Relation, &t("cup", "on", "table"))),
        ];
        for m in mutations {
            assert!(m(&mut g));
            assert!(g.revision() > last);
            last = g.revision();
        }
    }

    #[test]
    fn entity_index_matches_rebuild() {
        let mut g = fixture();
        g.remove(SubgraphKind::Relation, &t("cup", "on", "table"));
        g.insert(SubgraphKind::Property, t("drawer", "has_state", "open"));
        assert_eq!(g.entity_index, rebuilt_index(&g));
    }

    #[test]
    fn consistency_empty_graph_clean() {
        assert!(KnowledgeGraph::default().check_consistency().is_empty());
    }

    #[test]
    fn consistency_flags_exclusive_states_under_strict_audit() {
        // Built permissive so both states can coexist, audited strict.
        let mut g = KnowledgeGraph::new(GraphConfig::permissive());
        g.insert(SubgraphKind::Property, t("box", "has_state", "open"));
        g.insert(SubgraphKind::Property, t("box", "has_state", "closed"));
        let violations = g.check_consistency_with(&GraphConfig::default());
        let exclusive: Vec<_> = violations
            .iter()
            .filter(|v| matches!(v, Violation::ExclusiveStates { .. }))
            .collect();
        assert_eq!(exclusive.len(), 1);
    }

    #[test]
    fn consistency_finds_exactly_seeded_conflicts() {
        let mut g = KnowledgeGraph::new(GraphConfig::permissive());
        // 16 clean triples.
        for i in 0..8 {
            g.insert(SubgraphKind::Relation, t(&format!("item_{i}"), "on", "shelf"));
            g.insert(
                SubgraphKind::Reach,
                t(&format!("item_{i}"), "at_location", "room_a"),
            );
        }
        g.insert(SubgraphKind::Reach, t("room_a", "connected", "room_b"));
        g.insert(SubgraphKind::Property, t("lamp", "has_state", "on"));
        // Seeded conflict 1: functional at_location with two objects.
        g.insert(SubgraphKind::Reach, t("stray", "at_location", "room_a"));
        g.insert(SubgraphKind::Reach, t("stray", "at_location", "room_b"));
        // Seeded conflict 2: exclusive states on one subject.
        g.insert(SubgraphKind::Property, t("lamp", "has_state", "off"));
        assert_eq!(g.len(), 21);
        // Audit with at_location functional and the default exclusion sets;
        // has_state left non-functional so the two seeded conflicts stay
        // independent.
        let audit = GraphConfig {
            functional_relations: ["at_location".to_string()].into_iter().collect(),
            ..GraphConfig::default()
        };
        let violations = g.check_consistency_with(&audit);
        assert_eq!(violations.len(), 2);
        assert!(violations.iter().any(|v| matches!(v, Violation::FunctionalConflict { subject, .. } if subject == "stray")));
        assert!(violations.iter().any(|v| matches!(v, Violation::ExclusiveStates { subject, .. } if subject == "lamp")));
    }

    #[test]
    fn consistency_flags_dangling_location() {
        let mut g = KnowledgeGraph::default();
        g.insert(SubgraphKind::Reach, t("room_a", "connected", "room_b"));
        g.insert(SubgraphKind::Reach, t("ghost", "at_location", "room_z"));
        let violations = g.check_consistency();
        assert_eq!(violations.len(), 1);
        assert!(matches!(
            &violations[0],
            Violation::DanglingLocation { subject, location }
                if subject == "ghost" && location == "room_z"
        ));
    }

    #[test]
    fn serialize_round_trip_empty() {
        let g = KnowledgeGraph::default();
        let parsed = KnowledgeGraph::deserialize(&g.serialize()).unwrap();
        assert!(parsed.same_content(&g));
    }

    #[test]
    fn serialize_round_trip_fixture() {
        let g = fixture();
        let parsed = KnowledgeGraph::deserialize(&g.serialize()).unwrap();
        assert!(parsed.same_content(&g));
        // Canonical form is a fixed point.
        assert_eq!(parsed.serialize(), g.serialize());
    }

    #[test]
    fn deserialize_arity_error_reports_line() {
        let err = KnowledgeGraph::deserialize("relation cup on").unwrap_err();
        assert_eq!(err, KgError::ParseError {
            line: 1,
            message: "expected 4 fields, found 3".into(),
        });
    }

    #[test]
    fn deserialize_unknown_kind_reports_line() {
        let text = "relation cup on table\nbogus a b c\n";
        let err = KnowledgeGraph::deserialize(text).unwrap_err();
        assert!(matches!(err, KgError::ParseError { line: 2, .. }));
    }
}
