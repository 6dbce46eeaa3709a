//! Numerical engines: grids and value fields, the semi-Lagrangian dynamic
//! programming solver, ergodic-constant extraction, and the one-dimensional
//! monotone junction scheme.

mod grid;
mod junction;
mod semi_lagrangian;

pub use grid::{FieldMeta, Grid, Stencil, ValueField};
pub use junction::{junction_ergodic_1d, junction_solve_1d, Boundary, Junction, JunctionProblem, Piece};
pub use semi_lagrangian::{
    default_time_step, ergodic_constant, relative_value_iteration, value_iteration,
    value_iteration_from, DpOperator, DpProblem, ErgodicMethod, ErgodicResult, SolverControl,
};
