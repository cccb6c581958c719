//! Multi-UAV path planning: a seeded swarm simulator, a flow-field planner
//! whose gains are learned by multi-agent actor-critic training, and an
//! optional learned world model for multi-step critic targets.

// Negated float comparisons reject NaN; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agents;
pub mod env;
pub mod harness;
pub mod ifds;
pub mod mbrl;
pub mod nets;
pub mod obs;
pub mod par;

pub use env::{EnvConfig, Vec3, WorldState};
