//! Task-driven multi-robot exploration with compressed map sharing.
//!
//! Sensors compress their local windows into per-group means and variances,
//! an Actor decodes the accumulated constraints into a map estimate, bounds
//! the per-cell compression uncertainty, plans a path on the estimate and
//! steers the Sensors toward uncertain cells near that path.

pub mod codec;
pub mod engine;
pub mod estimation;
pub mod grid;
pub mod encoder;
pub mod planner;
pub mod selector;
