//! Trace-maximizing LMI solver and the multiplier line search around it.

mod center;
mod problem;
mod search;
mod solver;

pub use center::{affine_center_heuristic, center_heuristic, center_weights};
pub use problem::{LmiConstraint, LmiProblem, Sense};
pub use search::{
    default_lambda_grid, line_search_lambda, logspace, LambdaTrial, LineSearchResult, REFINE_SOLVES,
};
pub use solver::{
    solve_fixed_lambda, ConstraintResidual, Infeasibility, SolveOptions, SolveResult, SolveStatus,
};
