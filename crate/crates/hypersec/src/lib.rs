//! Quasi-Newton solves of sparse nonlinear systems.
//!
//! The crate provides three interchangeable Jacobian strategies for a
//! Newton-type root finder:
//!
//! - [`Strategy::Broyden`] — rank-1 secant updates restricted to the
//!   stored sparsity pattern, no extra residual evaluations;
//! - [`Strategy::Hypersecant`] — per-row multi-secant systems assembled
//!   from the iteration history, solved directly with an SVD least-norm
//!   fallback when the history is degenerate;
//! - [`Strategy::ColoredFd`] — finite differences with structurally
//!   orthogonal column groups, one residual evaluation per color.
//!
//! Everything numeric is generic over the scalar type via [`Scalar`]
//! (f32 or f64); the aliases at the crate root fix f64, which is what the
//! `hypersec` benchmark binary uses.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

pub mod cli;
pub mod jacobian;
pub mod linalg;
pub mod problems;
pub mod solver;
pub mod sparsity;

/// Floating-point scalar usable by the numeric kernels: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + fmt::Debug + fmt::Display + fmt::LowerExp + Send + Sync + 'static
{
    /// Converts an f64 literal into this scalar type.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("literal must be representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense row-major matrix over f64.
pub type Matrix = linalg::DenseMatrix<f64>;
/// Solver options over f64.
pub type Options = solver::SolveOptions<f64>;
/// Solve report over f64.
pub type Report = solver::SolveReport<f64>;

pub use jacobian::{
    broyden_update, broyden_update_masked, fd_colored_jacobian, hypersecant_row_system,
    hypersecant_update, IterationHistory, JacobianMode, JacobianState,
};
pub use linalg::{
    rank_one_update, solve_dense, solve_dense_with_floor, svd, svd_least_norm_solve, DenseMatrix,
    SingularSignal, SvdResult,
};
pub use problems::{Problem, ProblemError};
pub use sparsity::{greedy_color_columns, transport_pattern, tridiagonal_pattern, ColumnColoring, SparsityPattern};
pub use solver::{
    newton_solve, ConvergenceTrace, InitialJacobian, LineSearch, SolveEvent, SolveOptions,
    SolveReport, SolveStatus, Strategy, TraceRecord,
};
