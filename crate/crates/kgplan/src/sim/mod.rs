//! Deterministic multi-robot household world: executes plans with physical
//! failure detection, hides objects behind a scripted observation oracle,
//! and derives knowledge graphs from the visible world state.

pub mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::household;
use crate::kg::{GraphDelta, KnowledgeGraph, SubgraphKind, Triple};
use crate::pddl::GroundAction;
use crate::planner::{PartialOrderPlan, Plan};

/// Where an entity rests: inside a container or on a surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    In(String),
    On(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub name: String,
    pub kind: String,
    pub states: BTreeSet<String>,
    pub placement: Option<Placement>,
    /// None while held by a robot.
    pub location: Option<String>,
    pub hidden: bool,
    pub affordances: BTreeSet<String>,
    /// Names of pieces spawned when this entity is sliced.
    pub slice_spawn: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Robot {
    pub name: String,
    pub location: String,
    pub capabilities: BTreeSet<String>,
    pub holding: Option<String>,
}

/// Scripted stand-in for a vision model: per-location reveal rules plus
/// optional reveal-on-failure rules keyed by error message fragments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObservationOracle {
    pub location_rules: BTreeMap<String, Vec<(SubgraphKind, Triple)>>,
    pub failure_rules: Vec<FailureRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureRule {
    pub error_contains: String,
    pub triples: Vec<(SubgraphKind, Triple)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub locations: BTreeSet<String>,
    /// Directed connectivity edges (scenarios load both directions).
    pub connections: BTreeSet<(String, String)>,
    pub entities: BTreeMap<String, Entity>,
    pub robots: BTreeMap<String, Robot>,
    oracle: ObservationOracle,
    observed_locations: BTreeSet<String>,
    revision: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecErrorClass {
    PlannerFailure,
    PreconditionViolation,
    ObjectNotFound,
}

/// A deterministic execution failure. `focus` names the offending entities
/// for downstream diagnosis; the rendered message is stable per fixture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecError {
    pub class: ExecErrorClass,
    pub action: String,
    pub step: Option<usize>,
    pub focus: Vec<String>,
    pub detail: String,
}

impl ExecError {
    fn violation(action: &GroundAction, focus: &[&str], detail: String) -> Self {
        ExecError {
            class: ExecErrorClass::PreconditionViolation,
            action: action.canonical(),
            step: None,
            focus: focus.iter().map(|s| s.to_string()).collect(),
            detail,
        }
    }

    fn not_found(action: &GroundAction, entity: &str, detail: String) -> Self {
        ExecError {
            class: ExecErrorClass::ObjectNotFound,
            action: action.canonical(),
            step: None,
            focus: vec![entity.to_string()],
            detail,
        }
    }
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(step) => write!(f, "step {} {}: {}", step, self.action, self.detail),
            None => write!(f, "{}: {}", self.action, self.detail),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub action: String,
    pub outcome: StepOutcome,
    pub tick: u64,
    pub world_revision: u64,
}

/// Ordered execution records; at most one record is failed and it is last.
/// Simulated time is one tick per action attempt; partial-order execution
/// overlaps ticks across robots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub records: Vec<TraceRecord>,
    pub duration_ticks: u64,
}

impl ExecutionTrace {
    pub fn ok_steps(&self) -> usize {
        self.records.iter().filter(|r| r.outcome == StepOutcome::Ok).count()
    }
}

impl World {
    pub fn new(
        locations: BTreeSet<String>,
        connections: BTreeSet<(String, String)>,
        entities: BTreeMap<String, Entity>,
        robots: BTreeMap<String, Robot>,
        oracle: ObservationOracle,
    ) -> Self {
        World {
            locations,
            connections,
            entities,
            robots,
            oracle,
            observed_locations: BTreeSet::new(),
            revision: 0,
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn oracle(&self) -> &ObservationOracle {
        &self.oracle
    }

    fn entity_visible(&self, name: &str) -> Option<&Entity> {
        self.entities.get(name).filter(|e| !e.hidden)
    }

    /// Applies one action to the world. The acting robot is the first
    /// argument of every built-in schema. The physical checks may be
    /// stricter than the symbolic model (the replanning seed).
    pub fn step(&mut self, action: &GroundAction) -> Result<(), ExecError> {
        let schema = action.schema.as_str();
        if !household::ACTIONS.contains(&schema) {
            return Err(ExecError::violation(
                action,
                &[],
                format!("unsupported action schema '{schema}'"),
            ));
        }
        let robot_name = action.args.first().cloned().unwrap_or_default();
        if !self.robots.contains_key(&robot_name) {
            return Err(ExecError::violation(
                action,
                &[&robot_name],
                format!("unknown robot '{robot_name}'"),
            ));
        }
        let capability = household::required_capability(schema).unwrap();
        if !self.robots[&robot_name].capabilities.contains(capability) {
            return Err(ExecError::violation(
                action,
                &[&robot_name],
                format!("{robot_name} lacks capability {capability}"),
            ));
        }
        let result = match schema {
            "goto" => self.do_goto(action, &robot_name),
            "pickup" => self.do_pickup(action, &robot_name),
            "put_in" => self.do_put(action, &robot_name, true),
            "put_on" => self.do_put(action, &robot_name, false),
            "open" => self.do_open_close(action, &robot_name, true),
            "close" => self.do_open_close(action, &robot_name, false),
            "toggle_on" => self.do_toggle(action, &robot_name, true),
            "toggle_off" => self.do_toggle(action, &robot_name, false),
            "slice" => self.do_slice(action, &robot_name),
            _ => unreachable!("schema checked above"),
        };
        if result.is_ok() {
            self.revision += 1;
        }
        result
    }

    fn check_robot_at(
        &self,
        action: &GroundAction,
        robot: &str,
        location: &str,
    ) -> Result<(), ExecError> {
        let actual = &self.robots[robot].location;
        if actual != location {
            return Err(ExecError::violation(
                action,
                &[robot],
                format!("{robot} is at {actual}, not {location}"),
            ));
        }
        Ok(())
    }

    /// Looks up a visible entity resting at `location`.
    fn check_entity_at(
        &self,
        action: &GroundAction,
        name: &str,
        location: &str,
    ) -> Result<&Entity, ExecError> {
        let entity = match self.entity_visible(name) {
            Some(e) => e,
            None => {
                return Err(ExecError::not_found(
                    action,
                    name,
                    format!("object '{name}' not found"),
                ))
            }
        };
        if entity.location.as_deref() != Some(location) {
            return Err(ExecError::not_found(
                action,
                name,
                format!("{name} is not at {location}"),
            ));
        }
        Ok(entity)
    }

    fn do_goto(&mut self, action: &GroundAction, robot: &str) -> Result<(), ExecError> {
        let [_, from, to] = action.args.as_slice() else {
            return Err(ExecError::violation(action, &[], "goto expects 3 args".into()));
        };
        self.check_robot_at(action, robot, from)?;
        if !self.connections.contains(&(from.clone(), to.clone())) {
            return Err(ExecError::violation(
                action,
                &[robot],
                format!("no connection from {from} to {to}"),
            ));
        }
        self.robots.get_mut(robot).unwrap().location = to.clone();
        Ok(())
    }

    fn do_pickup(&mut self, action: &GroundAction, robot: &str) -> Result<(), ExecError> {
        let [_, item, location] = action.args.as_slice() else {
            return Err(ExecError::violation(action, &[], "pickup expects 3 args".into()));
        };
        self.check_robot_at(action, robot, location)?;
        let entity = self.check_entity_at(action, item, location)?;
        if let Some(Placement::In(container)) = &entity.placement {
            let container = container.clone();
            if self.entities[&container].states.contains("closed") {
                return Err(ExecError::violation(
                    action,
                    &[&container],
                    format!("{container} is closed"),
                ));
            }
        }
        let entity = &self.entities[item];
        if !entity.affordances.contains("pickupable") {
            return Err(ExecError::violation(
                action,
                &[item],
                format!("{item} is not pickupable"),
            ));
        }
        if let Some(held) = &self.robots[robot].holding {
            return Err(ExecError::violation(
                action,
                &[robot],
                format!("{robot} is already holding {held}"),
            ));
        }
        let entity = self.entities.get_mut(item).unwrap();
        entity.location = None;
        entity.placement = None;
        self.robots.get_mut(robot).unwrap().holding = Some(item.clone());
        Ok(())
    }

    fn do_put(
        &mut self,
        action: &GroundAction,
        robot: &str,
        into: bool,
    ) -> Result<(), ExecError> {
        let [_, item, target, location] = action.args.as_slice() else {
            return Err(ExecError::violation(action, &[], "put expects 4 args".into()));
        };
        self.check_robot_at(action, robot, location)?;
        if self.robots[robot].holding.as_deref() != Some(item.as_str()) {
            return Err(ExecError::violation(
                action,
                &[robot, item],
                format!("{robot} is not holding {item}"),
            ));
        }
        let target_entity = self.check_entity_at(action, target, location)?;
        if into {
            if !target_entity.affordances.contains("container") {
                return Err(ExecError::violation(
                    action,
                    &[target],
                    format!("{target} is not a container"),
                ));
            }
            if target_entity.states.contains("closed") {
                return Err(ExecError::violation(
                    action,
                    &[target],
                    format!("{target} is closed"),
                ));
            }
        } else if !target_entity.affordances.contains("surface") {
            return Err(ExecError::violation(
                action,
                &[target],
                format!("{target} is not a surface"),
            ));
        }
        let entity = self.entities.get_mut(item).unwrap();
        entity.location = Some(location.clone());
        entity.placement =
            Some(if into { Placement::In(target.clone()) } else { Placement::On(target.clone()) });
        self.robots.get_mut(robot).unwrap().holding = None;
        Ok(())
    }

    fn do_open_close(
        &mut self,
        action: &GroundAction,
        robot: &str,
        opening: bool,
    ) -> Result<(), ExecError> {
        let [_, item, location] = action.args.as_slice() else {
            return Err(ExecError::violation(action, &[], "open/close expects 3 args".into()));
        };
        self.check_robot_at(action, robot, location)?;
        let entity = self.check_entity_at(action, item, location)?;
        if !entity.affordances.contains("openable") {
            return Err(ExecError::violation(
                action,
                &[item],
                format!("{item} is not openable"),
            ));
        }
        let (need, gain) = if opening { ("closed", "open") } else { ("open", "closed") };
        if !entity.states.contains(need) {
            return Err(ExecError::violation(action, &[item], format!("{item} is not {need}")));
        }
        let entity = self.entities.get_mut(item).unwrap();
        entity.states.remove(need);
        entity.states.insert(gain.to_string());
        Ok(())
    }

    fn do_toggle(
        &mut self,
        action: &GroundAction,
        robot: &str,
        on: bool,
    ) -> Result<(), ExecError> {
        let [_, item, location] = action.args.as_slice() else {
            return Err(ExecError::violation(action, &[], "toggle expects 3 args".into()));
        };
        self.check_robot_at(action, robot, location)?;
        let entity = self.check_entity_at(action, item, location)?;
        if !entity.affordances.contains("toggleable") {
            return Err(ExecError::violation(
                action,
                &[item],
                format!("{item} is not toggleable"),
            ));
        }
        let (need, gain) = if on { ("off", "on") } else { ("on", "off") };
        if !entity.states.contains(need) {
            return Err(ExecError::violation(action, &[item], format!("{item} is not {need}")));
        }
        let entity = self.entities.get_mut(item).unwrap();
        entity.states.remove(need);
        entity.states.insert(gain.to_string());
        Ok(())
    }

    fn do_slice(&mut self, action: &GroundAction, robot: &str) -> Result<(), ExecError> {
        let [_, item, location] = action.args.as_slice() else {
            return Err(ExecError::violation(action, &[], "slice expects 3 args".into()));
        };
        self.check_robot_at(action, robot, location)?;
        let entity = self.check_entity_at(action, item, location)?;
        if !entity.affordances.contains("sliceable") {
            return Err(ExecError::violation(
                action,
                &[item],
                format!("{item} is not sliceable"),
            ));
        }
        let already_sliced = entity.states.contains("sliced");
        let spawn = entity.slice_spawn.clone();
        let kind = entity.kind.clone();
        let entity = self.entities.get_mut(item).unwrap();
        entity.states.insert("sliced".to_string());
        if !already_sliced {
            for piece in spawn {
                self.entities.insert(
                    piece.clone(),
                    Entity {
                        name: piece,
                        kind: kind.clone(),
                        states: BTreeSet::new(),
                        placement: None,
                        location: Some(location.clone()),
                        hidden: false,
                        affordances: ["pickupable".to_string()].into_iter().collect(),
                        slice_spawn: Vec::new(),
                    },
                );
            }
        }
        Ok(())
    }

    /// Runs a sequential plan, stopping at the first failure.
    pub fn execute(&mut self, plan: &Plan) -> (ExecutionTrace, Option<ExecError>) {
        let mut trace = ExecutionTrace::default();
        for (i, action) in plan.actions.iter().enumerate() {
            let tick = (i + 1) as u64;
            match self.step(action) {
                Ok(()) => {
                    trace.records.push(TraceRecord {
                        step: i,
                        action: action.canonical(),
                        outcome: StepOutcome::Ok,
                        tick,
                        world_revision: self.revision,
                    });
                    trace.duration_ticks = tick;
                }
                Err(mut e) => {
                    e.step = Some(i);
                    trace.records.push(TraceRecord {
                        step: i,
                        action: action.canonical(),
                        outcome: StepOutcome::Failed,
                        tick,
                        world_revision: self.revision,
                    });
                    trace.duration_ticks = tick;
                    return (trace, Some(e));
                }
            }
        }
        (trace, None)
    }

    /// Runs a partial-order plan greedily: per tick, each robot (in name
    /// order) executes its next own action once all ordering predecessors
    /// have completed in earlier ticks. Stops at the first failure.
    pub fn execute_partial_order(
        &mut self,
        pop: &PartialOrderPlan,
    ) -> (ExecutionTrace, Option<ExecError>) {
        let n = pop.actions.len();
        let mut trace = ExecutionTrace::default();
        let mut queues: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, action) in pop.actions.iter().enumerate() {
            let robot = action.args.first().cloned().unwrap_or_default();
            queues.entry(robot).or_default().push(i);
        }
        let mut done = vec![false; n];
        let mut completed = 0usize;
        let mut tick = 0u64;
        while completed < n {
            tick += 1;
            let mut progressed = false;
            let mut executed_this_tick: Vec<usize> = Vec::new();
            for (_, queue) in queues.iter_mut() {
                let Some(&next) = queue.first() else { continue };
                let ready = pop
                    .order
                    .iter()
                    .filter(|(_, j)| *j == next)
                    .all(|(i, _)| done[*i] && !executed_this_tick.contains(i));
                if !ready {
                    continue;
                }
                let action = &pop.actions[next];
                match self.step(action) {
                    Ok(()) => {
                        trace.records.push(TraceRecord {
                            step: next,
                            action: action.canonical(),
                            outcome: StepOutcome::Ok,
                            tick,
                            world_revision: self.revision,
                        });
                        done[next] = true;
                        executed_this_tick.push(next);
                        queue.remove(0);
                        completed += 1;
                        progressed = true;
                    }
                    Err(mut e) => {
                        e.step = Some(next);
                        trace.records.push(TraceRecord {
                            step: next,
                            action: action.canonical(),
                            outcome: StepOutcome::Failed,
                            tick,
                            world_revision: self.revision,
                        });
                        trace.duration_ticks = tick;
                        return (trace, Some(e));
                    }
                }
            }
            trace.duration_ticks = tick;
            if !progressed {
                let blocked = queues.values().filter_map(|q| q.first().copied()).min().unwrap_or(0);
                let action = &pop.actions[blocked];
                let e = ExecError::violation(action, &[], "partial order is blocked".into());
                return (trace, Some(e));
            }
        }
        (trace, None)
    }

    /// Applies the oracle's reveal rules for the robot's current location:
    /// hidden entities there become visible and their true triples are
    /// returned, together with any scripted extra triples. Idempotent per
    /// location.
    pub fn observe(&mut self, robot: &str) -> GraphDelta {
        let Some(robot) = self.robots.get(robot) else {
            return GraphDelta::default();
        };
        let location = robot.location.clone();
        if self.observed_locations.contains(&location) {
            return GraphDelta::default();
        }
        self.observed_locations.insert(location.clone());
        let mut additions: BTreeSet<(SubgraphKind, Triple)> = BTreeSet::new();
        let revealed: Vec<String> = self
            .entities
            .values()
            .filter(|e| e.hidden && e.location.as_deref() == Some(&location))
            .map(|e| e.name.clone())
            .collect();
        for name in &revealed {
            self.entities.get_mut(name).unwrap().hidden = false;
            additions.extend(entity_truth_triples(&self.entities[name]));
        }
        if let Some(rules) = self.oracle.location_rules.get(&location).cloned() {
            for (kind, triple) in rules {
                // Scripted triples may reveal entities placed elsewhere in
                // the world (e.g. seen through a doorway).
                if let Some(e) = self.entities.get_mut(&triple.subject) {
                    e.hidden = false;
                }
                additions.insert((kind, triple));
            }
        }
        if !revealed.is_empty() {
            self.revision += 1;
        }
        GraphDelta::additions_only(additions)
    }

    /// Post-failure observation: the true states of the entities named by
    /// the error (the stand-in for a vision model inspecting the failure),
    /// plus any scripted reveal-on-failure rules matching the message.
    pub fn observe_failure(&self, error: &ExecError) -> GraphDelta {
        let mut additions: BTreeSet<(SubgraphKind, Triple)> = BTreeSet::new();
        for name in &error.focus {
            if let Some(entity) = self.entity_visible(name) {
                for state in &entity.states {
                    additions.insert((
                        SubgraphKind::Property,
                        Triple::new(&entity.name, "has_state", state).unwrap(),
                    ));
                }
            }
        }
        let message = error.to_string();
        for rule in &self.oracle.failure_rules {
            if message.contains(&rule.error_contains) {
                additions.extend(rule.triples.iter().cloned());
            }
        }
        GraphDelta::additions_only(additions)
    }

    /// True iff a goal triple holds in the physical world.
    pub fn goal_holds(&self, triple: &Triple) -> bool {
        match triple.relation.as_str() {
            "in" => matches!(
                self.entities.get(&triple.subject).and_then(|e| e.placement.as_ref()),
                Some(Placement::In(c)) if *c == triple.object
            ),
            "on" => matches!(
                self.entities.get(&triple.subject).and_then(|e| e.placement.as_ref()),
                Some(Placement::On(s)) if *s == triple.object
            ),
            "has_state" => self
                .entities
                .get(&triple.subject)
                .map_or(false, |e| e.states.contains(&triple.object)),
            "at_location" => {
                if let Some(robot) = self.robots.get(&triple.subject) {
                    robot.location == triple.object
                } else {
                    self.entities
                        .get(&triple.subject)
                        .map_or(false, |e| e.location.as_deref() == Some(triple.object.as_str()))
                }
            }
            "holding" => self
                .robots
                .get(&triple.subject)
                .map_or(false, |r| r.holding.as_deref() == Some(triple.object.as_str())),
            _ => false,
        }
    }
}

/// All triples the graph would hold about one visible entity.
fn entity_truth_triples(entity: &Entity) -> Vec<(SubgraphKind, Triple)> {
    let mut out = Vec::new();
    if let Some(location) = &entity.location {
        out.push((
            SubgraphKind::Reach,
            Triple::new(&entity.name, "at_location", location).unwrap(),
        ));
    }
    match &entity.placement {
        Some(Placement::In(c)) => {
            out.push((SubgraphKind::Relation, Triple::new(&entity.name, "in", c).unwrap()));
        }
        Some(Placement::On(s)) => {
            out.push((SubgraphKind::Relation, Triple::new(&entity.name, "on", s).unwrap()));
        }
        None => {}
    }
    for state in &entity.states {
        out.push((
            SubgraphKind::Property,
            Triple::new(&entity.name, "has_state", state).unwrap(),
        ));
    }
    for affordance in &entity.affordances {
        out.push((
            SubgraphKind::Property,
            Triple::new(&entity.name, "has_property", affordance).unwrap(),
        ));
    }
    out
}

/// Derives the three-part knowledge graph from the visible world: containment
/// and support into the relation subgraph, states/affordances/capabilities
/// into the property subgraph, locations and connectivity into reach. Hidden
/// entities are omitted.
pub fn world_to_graph(world: &World) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph::default();
    for entity in world.entities.values() {
        if entity.hidden {
            continue;
        }
        for (kind, triple) in entity_truth_triples(entity) {
            graph.insert(kind, triple);
        }
    }
    for robot in world.robots.values() {
        graph.insert(
            SubgraphKind::Reach,
            Triple::new(&robot.name, "at_location", &robot.location).unwrap(),
        );
        for capability in &robot.capabilities {
            graph.insert(
                SubgraphKind::Property,
                Triple::new(&robot.name, "has_capability", capability).unwrap(),
            );
        }
        match &robot.holding {
            Some(item) => {
                graph.insert(
                    SubgraphKind::Relation,
                    Triple::new(&robot.name, "holding", item).unwrap(),
                );
            }
            None => {
                graph.insert(
                    SubgraphKind::Property,
                    Triple::new(&robot.name, "has_property", "hand_free").unwrap(),
                );
            }
        }
    }
    for (a, b) in &world.connections {
        graph.insert(SubgraphKind::Reach, Triple::new(a, "connected", b).unwrap());
    }
    graph
}
