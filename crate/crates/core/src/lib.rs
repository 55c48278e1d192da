//! Hierarchical dynamic scene graphs.
//!
//! A persistent global graph of regions and large static objects is built
//! once from a posed scan. Each camera's perception stream is cut into
//! sliding windows, and every window becomes a small relation subgraph of
//! tracked instances. At every tick those subgraphs are anchored onto the
//! global graph, producing an immutable [`UnifiedSnapshot`] that the query
//! layer, the route planner and the task agent read.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod demo;
pub mod dynamic;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod model;
pub mod sim;
pub mod static_graph;
pub mod store;

pub use error::{Error, Result};
pub use model::*;
