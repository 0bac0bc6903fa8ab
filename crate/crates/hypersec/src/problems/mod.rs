//! Test systems for the solver benchmarks: a 3-variable linear system, a
//! 3-variable quadratic system, and a single-profile implicit transport
//! equation with critical-gradient diffusivity.

use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::sparsity::{tridiagonal_pattern, SparsityPattern};
use crate::Scalar;

mod transport;

pub use transport::{
    axis_bc_residual, critical_gradient_chi, face_flux, polynomial_profile,
    transport_initial_jacobian, transport_residual, FluxModel, Geometry, TransportConfig,
    TransportProblem,
};

/// Residual evaluation failure. Reported through the solve status, never
/// panicked across the solver boundary.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProblemError {
    #[error("profile value must stay positive")]
    NonPositiveProfile,
    #[error("non-finite value in residual evaluation")]
    NonFinite,
}

/// A system of nonlinear equations F(x) = 0.
///
/// The residual must be a pure function of `x`; the solver relies on that
/// for its evaluation accounting and determinism guarantees.
pub trait Problem<T: Scalar> {
    fn dimension(&self) -> usize;

    fn residual(&self, x: &[T]) -> Result<Vec<T>, ProblemError>;

    fn pattern(&self) -> SparsityPattern;

    /// Analytic Jacobian where one exists; used by tests and the
    /// exact-at-start initialization.
    fn exact_jacobian(&self, _x: &[T]) -> Option<DenseMatrix<T>> {
        None
    }

    fn name(&self) -> &'static str;
}

/// The 3-variable linear system with root (1, 1, 1) and a symmetric banded
/// Jacobian.
#[derive(Debug, Clone, Copy, Default)]
pub struct Linear3;

/// Residual of [`Linear3`]:
/// (x₁ + x₂/2 − 3/2, x₁/2 + x₂ + x₃/2 − 2, x₂/2 + x₃ − 3/2).
pub fn linear3_residual<T: Scalar>(x: &[T]) -> Vec<T> {
    let half = T::of(0.5);
    vec![
        x[0] + half * x[1] - T::of(1.5),
        half * x[0] + x[1] + half * x[2] - T::of(2.0),
        half * x[1] + x[2] - T::of(1.5),
    ]
}

impl<T: Scalar> Problem<T> for Linear3 {
    fn dimension(&self) -> usize {
        3
    }

    fn residual(&self, x: &[T]) -> Result<Vec<T>, ProblemError> {
        Ok(linear3_residual(x))
    }

    fn pattern(&self) -> SparsityPattern {
        tridiagonal_pattern(3)
    }

    fn exact_jacobian(&self, _x: &[T]) -> Option<DenseMatrix<T>> {
        let h = T::of(0.5);
        let o = T::one();
        let z = T::zero();
        Some(DenseMatrix::from_rows(&[&[o, h, z], &[h, o, h], &[z, h, o]]))
    }

    fn name(&self) -> &'static str {
        "linear3"
    }
}

/// The 3-variable quadratic system with root (1, 1, 1); its Jacobian at the
/// root equals the linear problem's matrix.
#[derive(Debug, Clone, Copy, Default)]
pub struct Nonlinear3;

/// Residual of [`Nonlinear3`]:
/// (x₁²/2 + x₂²/4 − 3/4, x₁²/4 + x₂²/2 + x₃²/4 − 1, x₂²/4 + x₃²/2 − 3/4).
pub fn nonlinear3_residual<T: Scalar>(x: &[T]) -> Vec<T> {
    let q = T::of(0.25);
    let h = T::of(0.5);
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    vec![
        h * x1 * x1 + q * x2 * x2 - T::of(0.75),
        q * x1 * x1 + h * x2 * x2 + q * x3 * x3 - T::one(),
        q * x2 * x2 + h * x3 * x3 - T::of(0.75),
    ]
}

impl<T: Scalar> Problem<T> for Nonlinear3 {
    fn dimension(&self) -> usize {
        3
    }

    fn residual(&self, x: &[T]) -> Result<Vec<T>, ProblemError> {
        Ok(nonlinear3_residual(x))
    }

    fn pattern(&self) -> SparsityPattern {
        tridiagonal_pattern(3)
    }

    fn exact_jacobian(&self, x: &[T]) -> Option<DenseMatrix<T>> {
        let h = T::of(0.5);
        let z = T::zero();
        Some(DenseMatrix::from_rows(&[
            &[x[0], h * x[1], z],
            &[h * x[0], x[1], h * x[2]],
            &[z, h * x[1], x[2]],
        ]))
    }

    fn name(&self) -> &'static str {
        "nonlinear3"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear3_root_and_values() {
        assert_eq!(linear3_residual(&[1.0, 1.0, 1.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(linear3_residual(&[0.0, 0.0, 0.0]), vec![-1.5, -2.0, -1.5]);
        assert_eq!(linear3_residual(&[0.5, 0.5, 0.5]), vec![-0.75, -1.0, -0.75]);
    }

    #[test]
    fn nonlinear3_root_and_values() {
        assert_eq!(nonlinear3_residual(&[1.0, 1.0, 1.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(nonlinear3_residual(&[0.0, 0.0, 0.0]), vec![-0.75, -1.0, -0.75]);
    }

    #[test]
    fn nonlinear3_jacobian_at_root() {
        let j = Problem::<f64>::exact_jacobian(&Nonlinear3, &[1.0, 1.0, 1.0]).unwrap();
        let expected = DenseMatrix::from_rows(&[
            &[1.0, 0.5, 0.0],
            &[0.5, 1.0, 0.5],
            &[0.0, 0.5, 1.0],
        ]);
        assert!(j.max_abs_diff(&expected) == 0.0);
    }

    #[test]
    fn patterns_are_tridiagonal() {
        let p = Problem::<f64>::pattern(&Linear3);
        assert_eq!(p.row_support(0), &[0, 1]);
        assert_eq!(p.row_support(1), &[0, 1, 2]);
        assert_eq!(p.row_support(2), &[1, 2]);
    }
}
