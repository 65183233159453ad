//! Shared test fixtures: scenario texts and pipeline builders.

use crate::household;
use crate::sim::scenario::Scenario;
use crate::synthesis::{Inventory, Pipeline, TaskDescription};

/// The drawer recovery scenario: the graph wrongly believes the drawer is
/// open and omits its openable affordance.
pub(crate) const DRAWER_RECOVERY: &str = r#"
name = "drawer_recovery"
category = "simple"
task = "Put the watch and keychain inside the drawer"

[goal]
triples = [["watch", "in", "drawer"], ["keychain", "in", "drawer"]]

[world]
locations = ["desk_area", "cabinet_area"]
connections = [["desk_area", "cabinet_area"]]

[[world.robots]]
name = "robot_1"
location = "desk_area"
capabilities = ["navigate", "pickup", "place", "open_close"]

[[world.entities]]
name = "desk"
location = "desk_area"
affordances = ["surface"]

[[world.entities]]
name = "watch"
location = "desk_area"
on = "desk"
affordances = ["pickupable"]

[[world.entities]]
name = "keychain"
location = "desk_area"
on = "desk"
affordances = ["pickupable"]

[[world.entities]]
name = "drawer"
location = "cabinet_area"
states = ["closed"]
affordances = ["container", "openable"]

[knowledge]
omit = [["property", "drawer", "has_property", "openable"]]
assert = [["property", "drawer", "has_state", "open"]]
"#;

/// Two closed drawers, both believed open, both missing their openable
/// affordance: repairing the task needs two independent facts.
pub(crate) const TWO_DRAWERS: &str = r#"
name = "two_drawers"
category = "complex"
task = "Put the watch inside the left_drawer and put the keychain inside the right_drawer"

[goal]
triples = [["watch", "in", "left_drawer"], ["keychain", "in", "right_drawer"]]

[world]
locations = ["desk_area", "cabinet_area"]
connections = [["desk_area", "cabinet_area"]]

[[world.robots]]
name = "robot_1"
location = "desk_area"
capabilities = ["navigate", "pickup", "place", "open_close"]

[[world.entities]]
name = "desk"
location = "desk_area"
affordances = ["surface"]

[[world.entities]]
name = "watch"
location = "desk_area"
on = "desk"
affordances = ["pickupable"]

[[world.entities]]
name = "keychain"
location = "desk_area"
on = "desk"
affordances = ["pickupable"]

[[world.entities]]
name = "left_drawer"
location = "cabinet_area"
states = ["closed"]
affordances = ["container", "openable"]

[[world.entities]]
name = "right_drawer"
location = "cabinet_area"
states = ["closed"]
affordances = ["container", "openable"]

[knowledge]
omit = [
  ["property", "left_drawer", "has_property", "openable"],
  ["property", "right_drawer", "has_property", "openable"],
]
assert = [
  ["property", "left_drawer", "has_state", "open"],
  ["property", "right_drawer", "has_state", "open"],
]
"#;

pub(crate) fn pipeline_for(scenario: &Scenario) -> Pipeline<'static> {
    let world = scenario.build_world().expect("fixture world must build");
    let inventory = Inventory {
        entities: scenario.inventory(),
        robots: scenario.robots(),
        locations: world.locations.clone(),
    };
    Pipeline::new(
        household::domain(),
        TaskDescription {
            text: scenario.task_text.clone(),
            structured_goal: scenario.structured_goal.clone(),
        },
        inventory,
        scenario.type_map(),
        scenario.name.clone(),
    )
}
