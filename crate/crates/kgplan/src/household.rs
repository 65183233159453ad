//! The authored household domain and its shared vocabularies.
//!
//! The domain is fixed per environment; problems are synthesized against it.
//! The simulator's nine built-in action schemas mirror the domain's actions
//! one-to-one, so plans execute directly.

use std::sync::OnceLock;

use crate::pddl::{parse_domain, Domain};

/// Canonical domain text (a fixed point of the canonical printer).
pub const DOMAIN_TEXT: &str = include_str!("../assets/household.pddl");

pub const DOMAIN_NAME: &str = "household";

/// Robot capability tokens, one per action family.
pub const CAPABILITIES: [&str; 6] =
    ["navigate", "open_close", "pickup", "place", "slice", "toggle"];

/// Entity affordance tokens (unary predicates via `has_property` triples).
pub const AFFORDANCES: [&str; 6] =
    ["container", "openable", "pickupable", "sliceable", "surface", "toggleable"];

/// State value tokens (objects of `has_state` triples).
pub const STATES: [&str; 5] = ["closed", "off", "on", "open", "sliced"];

/// The simulator's built-in action schema names.
pub const ACTIONS: [&str; 9] = [
    "close", "goto", "open", "pickup", "put_in", "put_on", "slice", "toggle_off", "toggle_on",
];

/// Capability required by each action schema.
pub fn required_capability(action: &str) -> Option<&'static str> {
    match action {
        "goto" => Some("navigate"),
        "pickup" => Some("pickup"),
        "put_in" | "put_on" => Some("place"),
        "open" | "close" => Some("open_close"),
        "toggle_on" | "toggle_off" => Some("toggle"),
        "slice" => Some("slice"),
        _ => None,
    }
}

/// The parsed household domain (parsed once, then shared).
pub fn domain() -> &'static Domain {
    static DOMAIN: OnceLock<Domain> = OnceLock::new();
    DOMAIN.get_or_init(|| parse_domain(DOMAIN_TEXT).expect("bundled domain must parse"))
}
