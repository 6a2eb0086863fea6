//! Budgeted exploration benchmark: procedurally generated environments,
//! baseline agents, an episode harness, and analysis utilities.

// Float checks are written `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod agents;
pub mod analysis;
pub mod envcore;
pub mod harness;
pub mod hill;
pub mod instance;
pub mod presets;
pub mod protocol;
pub mod query;
pub mod rng;
pub mod sat;
pub mod theory;
pub mod tree;
