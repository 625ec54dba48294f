//! Quasi-reversibility solver: minimizes the squared PDE residual plus an
//! `H^2` Tikhonov penalty over grid functions matching the boundary and
//! initial data.

mod functional;
mod grid;
mod solver;
mod stencil;
mod verification;

pub use functional::{functional_value, residual_operator, CoefficientField, Functional};
pub use grid::{Grid, GridFunction};
pub use solver::{
    extract_estimates, feasible_lift, lift_boundary_data, minimize, solve_problem, BoundaryData,
    RegularizedSolution, SolverConfig, StopReason,
};
pub use verification::{
    convergence_experiment, manufactured_recovery, ConvergenceRow, ManufacturedCase,
    ManufacturedReport, BETA_FLOOR, EPSILON_FRAC, NOISE_LEVELS, RECOVERY_TOLERANCE,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QrmError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("array shape {got:?} does not match grid {expected:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("regularization parameter must lie in (0, 1), got {0}")]
    Beta(f64),
    #[error("coefficient field must be positive: {0}")]
    Coefficient(String),
    #[error("inconsistent data: {0}")]
    Data(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
