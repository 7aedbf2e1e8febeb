//! Grid solver for the unnormalised and normalised filter.

pub mod mass;
pub mod solver;
pub mod stencil;

pub use mass::{innovation_increments, mass_formula_check, MassFormulaReport};
pub use solver::{jump_reset, run_ks, run_zakai, shift_values, FilterRun, RunOptions, ZakaiSolver};
pub use stencil::GeneratorStencil;
