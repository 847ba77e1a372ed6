//! Space-time topology optimization for additive manufacturing.
//!
//! The crate couples a structural layout described by a density field with a
//! fabrication sequence described by an elemental pseudo-time field. The time
//! field is not free: it is the solution of a virtual steady-state heat
//! problem driven by the evolving structure, which keeps it smooth, monotone
//! away from the build plate, and differentiable with respect to the design.
//! Thresholding the time field reconstructs the partial structures present
//! at each moment of fabrication; those intermediates enter the objective
//! and constraints, so layout and process are optimized concurrently.

pub mod band;
pub mod baseline;
pub mod elasticity;
pub mod error;
pub mod field;
pub mod filter;
pub mod grid;
pub mod heat;
pub mod model;
pub mod optimizer;
pub mod projection;
pub mod sensitivities;
pub mod sequence;

pub use error::{Error, Result};
pub use grid::{build_grid, BuildPlate, Grid};
