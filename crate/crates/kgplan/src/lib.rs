//! Knowledge-graph-grounded symbolic planning and replanning for
//! heterogeneous multi-robot teams.
//!
//! The pipeline: a structured [`kg::KnowledgeGraph`] drives staged
//! [`synthesis`] of PDDL problems over a fixed [`household`] domain, a
//! forward-search [`planner`] produces multi-robot plans, the [`sim`]
//! executor surfaces failures, and the [`replan`] loop repairs the graph via
//! hypothesis scoring until the goal is reachable. [`bench`] runs scenario
//! suites and computes TCR/GCR/ER/PT/ET metrics.

pub mod bench;
pub mod household;
pub mod kg;
pub mod pddl;
pub mod planner;
pub mod replan;
pub mod sim;
pub mod synthesis;

#[cfg(test)]
pub(crate) mod testutil;
