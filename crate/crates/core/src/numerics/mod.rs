//! Dense numerical kernels: simplex projection, convex QP and LP.

pub mod linalg;
pub mod lp;
pub mod qp;
pub mod simplex;

use thiserror::Error;

pub use linalg::Matrix;
pub use lp::{solve_lp, LpProblem, LpSettings, LpSolution, LpStatus, Sense};
pub use qp::{solve_qp, solve_qp_from, QpProblem, QpSettings, QpSolution, QpStatus};
pub use simplex::project_simplex;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
