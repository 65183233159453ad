//! Scenario files: a declarative world plus task description, structured
//! goal, initial-knowledge edits, observation rules, and type assignments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{Entity, FailureRule, ObservationOracle, Placement, Robot, World};
use crate::kg::{KgError, KnowledgeGraph, SubgraphKind, Triple};
use crate::sim::world_to_graph;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid triple in scenario: {0}")]
    Triple(#[from] KgError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default = "default_category")]
    pub category: String,
    pub task: String,
    #[serde(default)]
    pub goal: Option<GoalSection>,
    pub world: WorldSection,
    #[serde(default)]
    pub knowledge: KnowledgeSection,
    #[serde(default)]
    pub types: BTreeMap<String, String>,
    #[serde(default)]
    pub oracle: OracleSection,
}

fn default_category() -> String {
    "simple".to_string()
}

#[derive(Debug, Clone, Deserialize)]
pub struct GoalSection {
    pub triples: Vec<[String; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub locations: Vec<String>,
    #[serde(default)]
    pub connections: Vec<[String; 2]>,
    #[serde(default)]
    pub robots: Vec<RobotSection>,
    #[serde(default)]
    pub entities: Vec<EntitySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    pub name: String,
    pub location: String,
    pub capabilities: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntitySection {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: String,
    pub location: String,
    #[serde(rename = "in", default)]
    pub in_container: Option<String>,
    #[serde(default)]
    pub on: Option<String>,
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub affordances: Vec<String>,
    #[serde(default)]
    pub hidden: bool,
    #[serde(default)]
    pub slice_spawn: Vec<String>,
}

fn default_kind() -> String {
    "item".to_string()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeSection {
    /// Triples removed from the derived initial graph (symbolic omissions).
    #[serde(default)]
    pub omit: Vec<[String; 4]>,
    /// Triples asserted into the initial graph (possibly stale beliefs).
    #[serde(default)]
    pub assert: Vec<[String; 4]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub location_rules: Vec<LocationRuleSection>,
    #[serde(default)]
    pub failure_rules: Vec<FailureRuleSection>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LocationRuleSection {
    pub location: String,
    pub triples: Vec<[String; 4]>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FailureRuleSection {
    pub error_contains: String,
    pub triples: Vec<[String; 4]>,
}

/// A loaded, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub category: String,
    pub task_text: String,
    pub structured_goal: Option<Vec<Triple>>,
    file: ScenarioFile,
}

fn parse_kinded(raw: &[String; 4]) -> Result<(SubgraphKind, Triple), ScenarioError> {
    let kind = SubgraphKind::parse(&raw[0])
        .ok_or_else(|| ScenarioError::Invalid(format!("unknown subgraph kind '{}'", raw[0])))?;
    Ok((kind, Triple::new(&raw[1], &raw[2], &raw[3])?))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        let structured_goal = match &file.goal {
            Some(g) => {
                let mut triples = Vec::new();
                for [s, r, o] in &g.triples {
                    triples.push(Triple::new(s, r, o)?);
                }
                Some(triples)
            }
            None => None,
        };
        let scenario = Scenario {
            name: file.name.clone(),
            category: file.category.clone(),
            task_text: file.task.clone(),
            structured_goal,
            file,
        };
        scenario.build_world()?; // validate eagerly
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Builds a fresh world (with its oracle) from the declaration.
    pub fn build_world(&self) -> Result<World, ScenarioError> {
        let w = &self.file.world;
        let locations: BTreeSet<String> = w.locations.iter().cloned().collect();
        if locations.len() != w.locations.len() {
            return Err(ScenarioError::Invalid("duplicate location".into()));
        }
        let mut connections = BTreeSet::new();
        for [a, b] in &w.connections {
            for side in [a, b] {
                if !locations.contains(side) {
                    return Err(ScenarioError::Invalid(format!(
                        "connection references undeclared location '{side}'"
                    )));
                }
            }
            connections.insert((a.clone(), b.clone()));
            connections.insert((b.clone(), a.clone()));
        }
        let mut entities = BTreeMap::new();
        for e in &w.entities {
            if !locations.contains(&e.location) {
                return Err(ScenarioError::Invalid(format!(
                    "entity '{}' placed at undeclared location '{}'",
                    e.name, e.location
                )));
            }
            if e.in_container.is_some() && e.on.is_some() {
                return Err(ScenarioError::Invalid(format!(
                    "entity '{}' cannot be both in and on something",
                    e.name
                )));
            }
            let placement = match (&e.in_container, &e.on) {
                (Some(c), None) => Some(Placement::In(c.clone())),
                (None, Some(s)) => Some(Placement::On(s.clone())),
                _ => None,
            };
            let entity = Entity {
                name: e.name.clone(),
                kind: e.kind.clone(),
                states: e.states.iter().cloned().collect(),
                placement,
                location: Some(e.location.clone()),
                hidden: e.hidden,
                affordances: e.affordances.iter().cloned().collect(),
                slice_spawn: e.slice_spawn.clone(),
            };
            if entities.insert(e.name.clone(), entity).is_some() {
                return Err(ScenarioError::Invalid(format!("duplicate entity '{}'", e.name)));
            }
        }
        // Placement targets must exist; containment must be acyclic.
        for e in entities.values() {
            if let Some(Placement::In(t) | Placement::On(t)) = &e.placement {
                if !entities.contains_key(t) {
                    return Err(ScenarioError::Invalid(format!(
                        "entity '{}' placed in/on unknown entity '{t}'",
                        e.name
                    )));
                }
            }
        }
        for e in entities.values() {
            let mut seen = BTreeSet::new();
            let mut cur = e.name.clone();
            while let Some(Placement::In(next)) =
                entities.get(&cur).and_then(|x| x.placement.clone())
            {
                if !seen.insert(cur.clone()) {
                    return Err(ScenarioError::Invalid(format!(
                        "containment cycle through '{}'",
                        e.name
                    )));
                }
                cur = next;
            }
        }
        let mut robots = BTreeMap::new();
        for r in &w.robots {
            if !locations.contains(&r.location) {
                return Err(ScenarioError::Invalid(format!(
                    "robot '{}' placed at undeclared location '{}'",
                    r.name, r.location
                )));
            }
            if entities.contains_key(&r.name) {
                return Err(ScenarioError::Invalid(format!(
                    "name '{}' used for both a robot and an entity",
                    r.name
                )));
            }
            let robot = Robot {
                name: r.name.clone(),
                location: r.location.clone(),
                capabilities: r.capabilities.iter().cloned().collect(),
                holding: None,
            };
            if robots.insert(r.name.clone(), robot).is_some() {
                return Err(ScenarioError::Invalid(format!("duplicate robot '{}'", r.name)));
            }
        }
        let mut oracle = ObservationOracle::default();
        for rule in &self.file.oracle.location_rules {
            let mut triples = Vec::new();
            for raw in &rule.triples {
                let (kind, triple) = parse_kinded(raw)?;
                if !entities.contains_key(&triple.subject) && !robots.contains_key(&triple.subject)
                {
                    return Err(ScenarioError::Invalid(format!(
                        "oracle rule discloses unknown entity '{}'",
                        triple.subject
                    )));
                }
                triples.push((kind, triple));
            }
            oracle.location_rules.entry(rule.location.clone()).or_default().extend(triples);
        }
        for rule in &self.file.oracle.failure_rules {
            let mut triples = Vec::new();
            for raw in &rule.triples {
                triples.push(parse_kinded(raw)?);
            }
            oracle.failure_rules.push(FailureRule {
                error_contains: rule.error_contains.clone(),
                triples,
            });
        }
        Ok(World::new(locations, connections, entities, robots, oracle))
    }

    /// The initial knowledge graph: derived from the visible world, minus
    /// declared omissions, plus asserted (possibly stale) beliefs.
    pub fn initial_graph(&self, world: &World) -> Result<KnowledgeGraph, ScenarioError> {
        let mut graph = world_to_graph(world);
        for raw in &self.file.knowledge.omit {
            let (kind, triple) = parse_kinded(raw)?;
            graph.remove(kind, &triple);
        }
        for raw in &self.file.knowledge.assert {
            let (kind, triple) = parse_kinded(raw)?;
            graph.insert(kind, triple);
        }
        Ok(graph)
    }

    /// All nameable things: entities (hidden included; the task text may
    /// reference them) plus robots.
    pub fn inventory(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> =
            self.file.world.entities.iter().map(|e| e.name.clone()).collect();
        out.extend(self.file.world.robots.iter().map(|r| r.name.clone()));
        out
    }

    pub fn robots(&self) -> BTreeSet<String> {
        self.file.world.robots.iter().map(|r| r.name.clone()).collect()
    }

    /// Constant-to-PDDL-type assignments: world entities are items, robots
    /// robots, locations locations; `[types]` entries extend or override.
    pub fn type_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        for e in &self.file.world.entities {
            map.insert(e.name.clone(), "item".to_string());
            for piece in &e.slice_spawn {
                map.insert(piece.clone(), "item".to_string());
            }
        }
        for r in &self.file.world.robots {
            map.insert(r.name.clone(), "robot".to_string());
        }
        for l in &self.file.world.locations {
            map.insert(l.clone(), "location".to_string());
        }
        for (name, ty) in &self.file.types {
            map.insert(name.clone(), ty.clone());
        }
        map
    }
}
