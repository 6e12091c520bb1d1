use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinear::ResidualSystem;
use crate::solvers::{self, count_linear_solves, SolveOptions, SolveReport};
use crate::sparse::SparseCoo;
use crate::vecops::norm2;

/// Relative accuracy below which a Jacobian solve is not asked to go.
pub const INNER_RTOL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Stop once ‖F(u, θ)‖₂ ≤ tol.
    pub tol: f64,
    pub max_iter: usize,
    /// Settings for the Jacobian solves. `atol` is overridden per iteration
    /// by `min(0.1·‖F‖, tol)`, floored at `INNER_RTOL_FLOOR·‖F‖`.
    pub linear: SolveOptions,
    /// Smallest backtracking step before the line search gives up.
    pub alpha_min: f64,
    /// Sufficient-decrease constant of the residual Armijo test.
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            linear: SolveOptions::default(),
            alpha_min: 2f64.powi(-20),
            armijo: 1e-4,
        }
    }
}

/// What a converged Newton solve keeps for the backward pass: the solution,
/// the Jacobian of the final iteration and the parameters. No history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonContext {
    u: Vec<f64>,
    jacobian: SparseCoo,
    theta: Vec<f64>,
}

impl NewtonContext {
    pub fn solution(&self) -> &[f64] {
        &self.u
    }

    pub fn jacobian(&self) -> &SparseCoo {
        &self.jacobian
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Stored scalar count: `n` solution entries, `nnz` Jacobian values,
    /// `nnz` index pairs and `p` parameters.
    pub fn stored_scalars(&self) -> usize {
        self.u.len() + 3 * self.jacobian.nnz() + self.theta.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearReport {
    pub newton_iterations: usize,
    pub linear_solves_forward: u64,
    pub linear_solves_backward: u64,
    pub final_residual_norm: f64,
    pub line_search_steps_total: usize,
    pub converged: bool,
    /// ‖F‖ at the initial guess and after every iteration.
    pub residual_history: Vec<f64>,
}

/// Newton-Raphson with backtracking on the residual norm.
///
/// Each iteration evaluates `J = ∂F/∂u`, solves `J Δu = −F` and accepts
/// `u + αΔu` for the first `α ∈ {1, ½, ¼, …}` with
/// `‖F(u + αΔu)‖ ≤ (1 − c·α)‖F(u)‖`. The Jacobian of the last iteration is
/// stored in the context, so for a loose `tol` it lags `u*` by one step.
pub fn newton_solve<S: ResidualSystem + ?Sized>(
    sys: &S,
    u0: &[f64],
    theta: &[f64],
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, NewtonContext, NonlinearReport)> {
    let mut u = u0.to_vec();
    let mut f = sys.residual(&u, theta);
    if f.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: f.len(),
        });
    }
    let mut f_norm = norm2(&f);
    let mut history = vec![f_norm];
    let mut jacobian = None;
    let mut iterations = 0;
    let mut line_search_steps = 0;
    let mut linear_solves = 0;

    while f_norm > opts.tol && iterations < opts.max_iter {
        let iteration = iterations + 1;
        let j = sys.jacobian(&u, theta);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut linear = opts.linear.clone();
        linear.atol = (0.1 * f_norm).min(opts.tol).max(INNER_RTOL_FLOOR * f_norm);
        linear.rtol = 0.0;
        let (solved, n) = count_linear_solves(|| solvers::solve(&j, &rhs, &linear));
        linear_solves += n;
        let (du, report) = solved.map_err(|e| Error::JacobianSolve {
            iteration,
            source: Box::new(e),
        })?;
        if !report.converged {
            return Err(Error::JacobianSolve {
                iteration,
                source: Box::new(Error::NotConverged(Box::new(report))),
            });
        }

        let mut alpha = 1.0;
        let (u_next, f_next, f_next_norm) = loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(ui, di)| ui + alpha * di).collect();
            let f_trial = sys.residual(&trial, theta);
            let trial_norm = norm2(&f_trial);
            if trial_norm <= (1.0 - opts.armijo * alpha) * f_norm {
                break (trial, f_trial, trial_norm);
            }
            alpha *= 0.5;
            line_search_steps += 1;
            if alpha < opts.alpha_min {
                return Err(Error::LineSearchFailed {
                    iteration,
                    alpha_min: opts.alpha_min,
                });
            }
        };
        u = u_next;
        f = f_next;
        f_norm = f_next_norm;
        history.push(f_norm);
        jacobian = Some(j);
        iterations = iteration;
    }

    let converged = f_norm <= opts.tol;
    let jacobian = jacobian.unwrap_or_else(|| sys.jacobian(&u, theta));
    let ctx = NewtonContext {
        u: u.clone(),
        jacobian,
        theta: theta.to_vec(),
    };
    let report = NonlinearReport {
        newton_iterations: iterations,
        linear_solves_forward: linear_solves,
        linear_solves_backward: 0,
        final_residual_norm: f_norm,
        line_search_steps_total: line_search_steps,
        converged,
        residual_history: history,
    };
    Ok((u, ctx, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonGradient {
    pub grad_theta: Vec<f64>,
    /// Always 1: the single adjoint solve `Jᵀ λ = grad_u`.
    pub linear_solves: u64,
    pub adjoint_report: SolveReport,
}

/// Implicit-function gradient at a converged solution: solve
/// `Jᵀ λ = grad_u`, then `grad_θ = −λᵀ ∂F/∂θ`.
pub fn newton_backward<S: ResidualSystem + ?Sized>(
    ctx: &NewtonContext,
    sys: &S,
    grad_u: &[f64],
    opts: &SolveOptions,
) -> Result<NewtonGradient> {
    let j = &ctx.jacobian;
    if grad_u.len() != j.nrows() {
        return Err(Error::DimensionMismatch {
            expected: j.nrows(),
            got: grad_u.len(),
        });
    }
    let (solved, linear_solves) = count_linear_solves(|| {
        if j.is_symmetric() {
            solvers::solve(j, grad_u, opts)
        } else {
            solvers::solve(&j.transpose(), grad_u, opts)
        }
    });
    let (lambda, report) = solved?;
    if !report.converged {
        return Err(Error::NotConverged(Box::new(report)));
    }
    let grad_theta = sys
        .vjp_theta(&ctx.u, &ctx.theta, &lambda)
        .into_iter()
        .map(|v| -v)
        .collect();
    Ok(NewtonGradient {
        grad_theta,
        linear_solves,
        adjoint_report: report,
    })
}
