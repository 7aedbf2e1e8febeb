//! Nonlinear filtering for diffusions driven by an additive bounded-variation input.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bv;
pub mod checks;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod io;
pub mod mollify;
pub mod oracle;
pub mod particle;
pub mod rng;
pub mod scenario;
pub mod simulate;
pub mod zakai;

pub use bv::BVPath;
pub use error::{Error, Result};
pub use grid::{DensityField, SpatialGrid, TimeGrid};
pub use scenario::{validate_scenario, Scenario, ScenarioSpec};
