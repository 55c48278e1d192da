//! Domain types shared by every pipeline stage.

mod geometry;
mod types;

pub use geometry::*;
pub use types::*;
