//! Exact routing model for small residual problems.

mod bnb;
mod instance;
mod lp_file;
mod model;
mod named;
pub mod simplex;
mod validate;

pub use bnb::{is_feasible_point, solve, solve_with_start, MilpSolution, SolveLimits, SolveStatus, INTEGRALITY_TOL};
pub use instance::{MilpInstance, VarLayout};
pub use lp_file::{export_lp, parse_lp, write_lp};
pub use model::{build_model, Constraint, MilpModel, Sense, VarKind, Variable};
pub use named::NamedSolution;
pub use validate::{decode_routes, validate_solution, Routes, ValidationReport};
