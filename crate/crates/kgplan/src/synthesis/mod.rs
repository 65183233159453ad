//! Staged problem synthesis: extract the goal, then relational, property,
//! and reachability predicates from the task and the knowledge graph, and
//! assemble a PDDL problem. Each stage sits behind the [`Proposer`]
//! abstraction; the default rule-based proposers are deterministic, so the
//! whole pipeline is testable without a language model.

pub mod lexicon;
pub mod remote;

pub use lexicon::Lexicon;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::kg::{KnowledgeGraph, SubgraphKind, Triple, TriplePattern};
use crate::pddl::{Domain, GroundAtom, PddlError, Problem};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("ungroundable goal: {0}")]
    UngroundableGoal(String),
    #[error("missing location for in-scope entity '{0}'")]
    MissingLocation(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("no type assignment for constant '{0}'")]
    TypeAssignmentMissing(String),
    #[error("inconsistent bundle: {0}")]
    InconsistentBundle(String),
    #[error("proposal rejected after retries: {0}")]
    InvalidProposal(String),
    #[error("proposer transport failure: {0}")]
    Transport(String),
    #[error("bad lexicon: {0}")]
    Lexicon(String),
    #[error("object inventory is empty")]
    EmptyInventory,
    #[error(transparent)]
    Pddl(#[from] PddlError),
}

/// The natural-language instruction, optionally paired with scenario-provided
/// structured goal triples for deterministic runs.
#[derive(Debug, Clone)]
pub struct TaskDescription {
    pub text: String,
    pub structured_goal: Option<Vec<Triple>>,
}

/// Output of the goal stage: triples each mappable to a ground goal atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalSpec {
    pub goal_triples: Vec<Triple>,
}

impl GoalSpec {
    /// Entities referenced by the goal (subjects always; objects when they
    /// name inventory entities rather than state literals).
    pub fn entities(&self, inventory: &Inventory) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for t in &self.goal_triples {
            out.insert(t.subject.clone());
            if inventory.contains(&t.object) {
                out.insert(t.object.clone());
            }
        }
        out
    }
}

/// Ground atoms tagged by their originating stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredicateBundle {
    pub relation_atoms: BTreeSet<GroundAtom>,
    pub property_atoms: BTreeSet<GroundAtom>,
    pub reach_atoms: BTreeSet<GroundAtom>,
}

/// Nameable things in the scenario: entities, robots, locations.
#[derive(Debug, Clone, Default)]
pub struct Inventory {
    pub entities: BTreeSet<String>,
    pub robots: BTreeSet<String>,
    pub locations: BTreeSet<String>,
}

impl Inventory {
    pub fn contains(&self, name: &str) -> bool {
        self.entities.contains(name) || self.robots.contains(name)
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.robots.is_empty()
    }
}

/// Maps a knowledge-graph triple to its ground atom: `has_property`
/// triples become unary affordance atoms, everything else becomes a binary
/// atom named by the relation.
pub fn atom_from_triple(triple: &Triple) -> GroundAtom {
    if triple.relation == "has_property" {
        GroundAtom { predicate: triple.object.clone(), args: vec![triple.subject.clone()] }
    } else {
        GroundAtom {
            predicate: triple.relation.clone(),
            args: vec![triple.subject.clone(), triple.object.clone()],
        }
    }
}

/// Inverse of [`atom_from_triple`], with the subgraph each relation lives in.
pub fn triple_from_atom(atom: &GroundAtom) -> Option<(SubgraphKind, Triple)> {
    match atom.args.len() {
        1 => Some((
            SubgraphKind::Property,
            Triple::new(&atom.args[0], "has_property", &atom.predicate).ok()?,
        )),
        2 => {
            let kind = match atom.predicate.as_str() {
                "at_location" | "connected" => SubgraphKind::Reach,
                "has_state" | "has_capability" => SubgraphKind::Property,
                _ => SubgraphKind::Relation,
            };
            Some((kind, Triple::new(&atom.args[0], &atom.predicate, &atom.args[1]).ok()?))
        }
        _ => None,
    }
}

/// Goal extraction: structured goals pass through after inventory
/// validation; otherwise the lexicon templates match the task text.
pub fn extract_goal(
    task: &TaskDescription,
    inventory: &Inventory,
    lexicon: &Lexicon,
) -> Result<GoalSpec, SynthesisError> {
    if inventory.is_empty() {
        return Err(SynthesisError::EmptyInventory);
    }
    let triples = match &task.structured_goal {
        Some(tr) => tr.clone(),
        None => {
            let resolve =
                |name: &str| -> Option<String> { inventory.contains(name).then(|| name.to_string()) };
            lexicon.match_text(&task.text, &resolve)?
        }
    };
    validate_goal(&triples, inventory)?;
    Ok(GoalSpec { goal_triples: triples })
}

fn validate_goal(triples: &[Triple], inventory: &Inventory) -> Result<(), SynthesisError> {
    if triples.is_empty() {
        return Err(SynthesisError::UngroundableGoal("empty goal".into()));
    }
    for t in triples {
        if !inventory.contains(&t.subject) && !inventory.robots.contains(&t.subject) {
            return Err(SynthesisError::UngroundableGoal(format!(
                "goal subject '{}' is not in the inventory",
                t.subject
            )));
        }
        let object_ok = inventory.contains(&t.object)
            || inventory.locations.contains(&t.object)
            || crate::household::STATES.contains(&t.object.as_str());
        if !object_ok {
            return Err(SynthesisError::UngroundableGoal(format!(
                "goal object '{}' is not a known entity, location, or state",
                t.object
            )));
        }
    }
    Ok(())
}

/// Relation stage: the closure of relation triples touching goal entities,
/// out to `depth` hops, converted to ground atoms.
pub fn extract_relations(
    goal: &GoalSpec,
    _task: &TaskDescription,
    g_relation: &BTreeSet<Triple>,
    inventory: &Inventory,
    depth: usize,
) -> BTreeSet<GroundAtom> {
    let mut frontier = goal.entities(inventory);
    let mut selected: BTreeSet<Triple> = BTreeSet::new();
    for _ in 0..depth {
        let mut next = BTreeSet::new();
        for t in g_relation {
            if frontier.contains(&t.subject) || frontier.contains(&t.object) {
                if selected.insert(t.clone()) {
                    next.insert(t.subject.clone());
                    next.insert(t.object.clone());
                }
            }
        }
        if next.is_subset(&frontier) {
            break;
        }
        frontier.extend(next);
    }
    selected.iter().map(atom_from_triple).collect()
}

/// Property stage: capability triples for every robot, plus attribute and
/// state triples for every entity mentioned in the goal or relations.
pub fn extract_properties(
    goal: &GoalSpec,
    _task: &TaskDescription,
    relations: &BTreeSet<GroundAtom>,
    g_property: &BTreeSet<Triple>,
    inventory: &Inventory,
) -> BTreeSet<GroundAtom> {
    let mut scope = goal.entities(inventory);
    for atom in relations {
        for arg in &atom.args {
            if inventory.contains(arg) {
                scope.insert(arg.clone());
            }
        }
    }
    scope.extend(inventory.robots.iter().cloned());
    g_property
        .iter()
        .filter(|t| scope.contains(&t.subject))
        .map(atom_from_triple)
        .collect()
}

/// Reach stage: at_location atoms for every entity from the prior stages and
/// every robot, plus the connectivity map. Entities currently held (per the
/// relation atoms) need no location. An entirely empty reach subgraph is the
/// ablated, navigation-free mode and yields no atoms rather than an error.
pub fn extract_reachability(
    relations: &BTreeSet<GroundAtom>,
    properties: &BTreeSet<GroundAtom>,
    g_reach: &BTreeSet<Triple>,
    inventory: &Inventory,
) -> Result<BTreeSet<GroundAtom>, SynthesisError> {
    if g_reach.is_empty() {
        return Ok(BTreeSet::new());
    }
    let mut scope: BTreeSet<String> = BTreeSet::new();
    for atom in relations.iter().chain(properties) {
        for arg in &atom.args {
            if inventory.contains(arg) {
                scope.insert(arg.clone());
            }
        }
    }
    scope.extend(inventory.robots.iter().cloned());
    let held: BTreeSet<&str> = relations
        .iter()
        .filter(|a| a.predicate == "holding" && a.args.len() == 2)
        .map(|a| a.args[1].as_str())
        .collect();

    let mut out = BTreeSet::new();
    for name in &scope {
        let located = g_reach
            .iter()
            .find(|t| t.relation == "at_location" && t.subject == *name);
        match located {
            Some(t) => {
                out.insert(atom_from_triple(t));
            }
            None => {
                if !held.contains(name.as_str()) {
                    return Err(SynthesisError::MissingLocation(name.clone()));
                }
            }
        }
    }
    for t in g_reach {
        if t.relation == "connected" {
            out.insert(atom_from_triple(t));
        }
    }
    Ok(out)
}

/// Assembles and validates the problem: objects are all constants appearing
/// anywhere (typed via the scenario map), init is the union of the three
/// stage outputs, and the goal comes from the goal spec.
pub fn synthesize_problem(
    name: &str,
    goal: &GoalSpec,
    bundle: &PredicateBundle,
    domain: &Domain,
    type_map: &BTreeMap<String, String>,
) -> Result<Problem, SynthesisError> {
    check_bundle_consistency(bundle)?;
    let goal_atoms: BTreeSet<GroundAtom> = goal.goal_triples.iter().map(atom_from_triple).collect();
    let init: BTreeSet<GroundAtom> = bundle
        .relation_atoms
        .iter()
        .chain(&bundle.property_atoms)
        .chain(&bundle.reach_atoms)
        .cloned()
        .collect();

    let domain_constants: BTreeSet<&str> =
        domain.constants.iter().map(|c| c.name.as_str()).collect();
    let mut objects: BTreeMap<String, String> = BTreeMap::new();
    for atom in init.iter().chain(&goal_atoms) {
        let schema = domain.predicate(&atom.predicate).ok_or_else(|| {
            SynthesisError::SchemaMismatch(format!(
                "atom {atom} does not name a domain predicate"
            ))
        })?;
        if schema.params.len() != atom.args.len() {
            return Err(SynthesisError::SchemaMismatch(format!(
                "atom {atom} does not fit /{} schema '{}'",
                schema.params.len(),
                schema.name
            )));
        }
        for arg in &atom.args {
            if domain_constants.contains(arg.as_str()) {
                continue;
            }
            let ty = type_map
                .get(arg)
                .ok_or_else(|| SynthesisError::TypeAssignmentMissing(arg.clone()))?;
            objects.insert(arg.clone(), ty.clone());
        }
    }
    let objects: Vec<crate::pddl::TypedObject> = objects
        .into_iter()
        .map(|(name, ty)| crate::pddl::TypedObject { name, ty })
        .collect();
    let problem =
        Problem::new(name.to_string(), domain.name.clone(), objects, init, goal_atoms, domain)?;
    Ok(problem)
}

fn check_bundle_consistency(bundle: &PredicateBundle) -> Result<(), SynthesisError> {
    let exclusive: [(&str, &str); 2] = [("open", "closed"), ("on", "off")];
    let states: Vec<&GroundAtom> = bundle
        .property_atoms
        .iter()
        .filter(|a| a.predicate == "has_state" && a.args.len() == 2)
        .collect();
    for a in &states {
        for b in &states {
            if a.args[0] == b.args[0] {
                for (x, y) in exclusive {
                    if a.args[1] == x && b.args[1] == y {
                        return Err(SynthesisError::InconsistentBundle(format!(
                            "{} is both {x} and {y}",
                            a.args[0]
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// One abstraction over the staged extractors. The rule-based implementation
/// is deterministic; a remote implementation prompts a language model and
/// parses the reply into the same output types.
pub trait Proposer {
    fn goal(
        &self,
        task: &TaskDescription,
        inventory: &Inventory,
        lexicon: &Lexicon,
    ) -> Result<GoalSpec, SynthesisError>;

    fn relations(
        &self,
        goal: &GoalSpec,
        task: &TaskDescription,
        g_relation: &BTreeSet<Triple>,
        inventory: &Inventory,
        depth: usize,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError>;

    fn properties(
        &self,
        goal: &GoalSpec,
        task: &TaskDescription,
        relations: &BTreeSet<GroundAtom>,
        g_property: &BTreeSet<Triple>,
        inventory: &Inventory,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError>;

    fn reach(
        &self,
        relations: &BTreeSet<GroundAtom>,
        properties: &BTreeSet<GroundAtom>,
        g_reach: &BTreeSet<Triple>,
        inventory: &Inventory,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError>;

    /// How many times an invalid proposal may be retried (0 = fail fast).
    fn retries(&self) -> usize {
        0
    }
}

/// The deterministic, rule-based default.
#[derive(Debug, Clone, Default)]
pub struct RuleBasedProposer;

impl Proposer for RuleBasedProposer {
    fn goal(
        &self,
        task: &TaskDescription,
        inventory: &Inventory,
        lexicon: &Lexicon,
    ) -> Result<GoalSpec, SynthesisError> {
        extract_goal(task, inventory, lexicon)
    }

    fn relations(
        &self,
        goal: &GoalSpec,
        task: &TaskDescription,
        g_relation: &BTreeSet<Triple>,
        inventory: &Inventory,
        depth: usize,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError> {
        Ok(extract_relations(goal, task, g_relation, inventory, depth))
    }

    fn properties(
        &self,
        goal: &GoalSpec,
        task: &TaskDescription,
        relations: &BTreeSet<GroundAtom>,
        g_property: &BTreeSet<Triple>,
        inventory: &Inventory,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError> {
        Ok(extract_properties(goal, task, relations, g_property, inventory))
    }

    fn reach(
        &self,
        relations: &BTreeSet<GroundAtom>,
        properties: &BTreeSet<GroundAtom>,
        g_reach: &BTreeSet<Triple>,
        inventory: &Inventory,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError> {
        extract_reachability(relations, properties, g_reach, inventory)
    }
}

/// Which subgraphs are dropped before synthesis (ablation variants).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    pub drop_relation: bool,
    pub drop_property: bool,
    pub drop_reach: bool,
}

impl Ablation {
    pub fn dropped(&self) -> Vec<SubgraphKind> {
        let mut out = Vec::new();
        if self.drop_relation {
            out.push(SubgraphKind::Relation);
        }
        if self.drop_property {
            out.push(SubgraphKind::Property);
        }
        if self.drop_reach {
            out.push(SubgraphKind::Reach);
        }
        out
    }
}

/// The full Eqs.-style pipeline bound to a domain, task, and scenario
/// metadata. `synthesize` runs goal → relations → properties → reach →
/// problem over a given graph; every stage output is validated against the
/// graph before use, and retryable proposers get bounded retries.
pub struct Pipeline<'a> {
    pub domain: &'a Domain,
    pub task: TaskDescription,
    pub inventory: Inventory,
    pub type_map: BTreeMap<String, String>,
    pub lexicon: Lexicon,
    pub ablation: Ablation,
    pub closure_depth: usize,
    pub problem_name: String,
    proposer: Box<dyn Proposer>,
}

/// A synthesized problem with its intermediate stage outputs.
#[derive(Debug, Clone)]
pub struct SynthesizedProblem {
    pub problem: Problem,
    pub goal: GoalSpec,
    pub bundle: PredicateBundle,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        domain: &'a Domain,
        task: TaskDescription,
        inventory: Inventory,
        type_map: BTreeMap<String, String>,
        problem_name: String,
    ) -> Self {
        Pipeline {
            domain,
            task,
            inventory,
            type_map,
            lexicon: Lexicon::default(),
            ablation: Ablation::default(),
            closure_depth: 2,
            problem_name,
            proposer: Box::new(RuleBasedProposer),
        }
    }

    pub fn with_proposer(mut self, proposer: Box<dyn Proposer>) -> Self {
        self.proposer = proposer;
        self
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self
    }

    /// Runs only the goal stage (used for diagnosis focusing).
    pub fn synthesize_goal_only(&self) -> Result<GoalSpec, SynthesisError> {
        let goal = self.proposer.goal(&self.task, &self.inventory, &self.lexicon)?;
        validate_goal(&goal.goal_triples, &self.inventory)?;
        Ok(goal)
    }

    /// The graph view the pipeline actually reads (ablations applied).
    pub fn view(&self, graph: &KnowledgeGraph) -> KnowledgeGraph {
        let dropped = self.ablation.dropped();
        if dropped.is_empty() {
            graph.clone()
        } else {
            graph.ablated_copy(&dropped)
        }
    }

    pub fn synthesize(
        &self,
        graph: &KnowledgeGraph,
    ) -> Result<SynthesizedProblem, SynthesisError> {
        let view = self.view(graph);
        let g_relation = view.subgraph(SubgraphKind::Relation).clone();
        let g_property = view.subgraph(SubgraphKind::Property).clone();
        let g_reach = view.subgraph(SubgraphKind::Reach).clone();

        let goal = self.retrying(|| {
            let goal = self.proposer.goal(&self.task, &self.inventory, &self.lexicon)?;
            validate_goal(&goal.goal_triples, &self.inventory)?;
            Ok(goal)
        })?;

        let relations = self.retrying(|| {
            let atoms = self.proposer.relations(
                &goal,
                &self.task,
                &g_relation,
                &self.inventory,
                self.closure_depth,
            )?;
            self.check_grounded(&atoms, &view)?;
            Ok(atoms)
        })?;

        let properties = self.retrying(|| {
            let atoms = self.proposer.properties(
                &goal,
                &self.task,
                &relations,
                &g_property,
                &self.inventory,
            )?;
            self.check_grounded(&atoms, &view)?;
            Ok(atoms)
        })?;

        let reach = self.retrying(|| {
            let atoms =
                self.proposer.reach(&relations, &properties, &g_reach, &self.inventory)?;
            self.check_grounded(&atoms, &view)?;
            Ok(atoms)
        })?;

        let bundle = PredicateBundle { relation_atoms: relations, property_atoms: properties, reach_atoms: reach };
        let problem = synthesize_problem(
            &self.problem_name,
            &goal,
            &bundle,
            self.domain,
            &self.type_map,
        )?;
        Ok(SynthesizedProblem { problem, goal, bundle })
    }

    /// Monotone-grounding gate: every proposed atom must map back to a
    /// triple present in the (ablated) graph.
    fn check_grounded(
        &self,
        atoms: &BTreeSet<GroundAtom>,
        view: &KnowledgeGraph,
    ) -> Result<(), SynthesisError> {
        for atom in atoms {
            let Some((_, triple)) = triple_from_atom(atom) else {
                return Err(SynthesisError::InvalidProposal(format!(
                    "atom {atom} has no triple form"
                )));
            };
            let found = view.query(
                &TriplePattern::new(
                    Some(&triple.subject),
                    Some(&triple.relation),
                    Some(&triple.object),
                ),
                None,
            );
            if found.is_empty() {
                return Err(SynthesisError::InvalidProposal(format!(
                    "atom {atom} is not grounded in the knowledge graph"
                )));
            }
        }
        Ok(())
    }

    fn retrying<T>(
        &self,
        mut attempt: impl FnMut() -> Result<T, SynthesisError>,
    ) -> Result<T, SynthesisError> {
        let retries = self.proposer.retries();
        let mut last_err = None;
        for _ in 0..=retries {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(e @ (SynthesisError::InvalidProposal(_) | SynthesisError::Transport(_)))
                    if retries > 0 =>
                {
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| SynthesisError::InvalidProposal("no attempts".into())))
    }
}
