//! Nonlinear solvers for `F(u, θ) = 0` and fixed points `u = g(u)`, with the
//! adjoint of a converged Newton solve.

mod fd;
mod fixed_point;
mod newton;

use crate::sparse::SparseCoo;

pub use fd::fd_jacobian;
pub use fixed_point::{anderson_solve, picard_solve, FixedPointReport};
pub use newton::{
    newton_backward, newton_solve, NewtonContext, NewtonGradient, NewtonOptions, NonlinearReport,
};

/// A parameterised residual `F(u, θ)` with its derivatives.
///
/// All three evaluators must be deterministic, and the Jacobian's sparsity
/// pattern must not depend on `(u, θ)`.
pub trait ResidualSystem {
    fn residual(&self, u: &[f64], theta: &[f64]) -> Vec<f64>;

    /// `∂F/∂u`.
    fn jacobian(&self, u: &[f64], theta: &[f64]) -> SparseCoo;

    /// `λᵀ · ∂F/∂θ`, one entry per parameter.
    fn vjp_theta(&self, u: &[f64], theta: &[f64], lambda: &[f64]) -> Vec<f64>;
}
