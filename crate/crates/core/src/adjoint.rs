//! Reverse-mode differentiation of sparse linear solves.
//!
//! For `x = A⁻¹ b` and a scalar loss `L(x)`, one transposed solve
//! `Aᵀ λ = ∂L/∂x` yields every gradient:
//!
//! ```text
//! ∂L/∂b    = λ
//! ∂L/∂A_ij = −λ_i · x_j     for each stored (i, j)
//! ```
//!
//! The forward pass keeps only `(A, x)`; nothing from the solver iterations
//! survives, so the saved state is `O(n + nnz)` whatever the iteration count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{self, SolveOptions, SolveReport};
use crate::sparse::SparseCoo;

/// State saved by [`solve_forward`] for the backward pass: the matrix and
/// the solution, nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointContext {
    matrix: SparseCoo,
    x: Vec<f64>,
}

/// Number of stored scalars, split by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextFootprint {
    pub index_pairs: usize,
    pub values: usize,
    pub solution: usize,
}

impl ContextFootprint {
    pub fn bytes(&self) -> usize {
        self.index_pairs * 2 * std::mem::size_of::<usize>()
            + (self.values + self.solution) * std::mem::size_of::<f64>()
    }
}

impl AdjointContext {
    pub fn matrix(&self) -> &SparseCoo {
        &self.matrix
    }

    pub fn solution(&self) -> &[f64] {
        &self.x
    }

    pub fn footprint(&self) -> ContextFootprint {
        ContextFootprint {
            index_pairs: self.matrix.nnz(),
            values: self.matrix.nnz(),
            solution: self.x.len(),
        }
    }
}

/// Gradients of the loss with respect to `b` and to each stored entry of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub grad_b: Vec<f64>,
    /// Aligned with the stored entries of `A`.
    pub grad_vals: Vec<f64>,
    /// Report of the single adjoint solve.
    pub adjoint_report: SolveReport,
}

/// Solves `A x = b` and returns the solution with the state needed for
/// [`solve_backward`]. A non-converged solve is an error.
pub fn solve_forward(
    a: &SparseCoo,
    b: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, AdjointContext, SolveReport)> {
    let (x, report) = solvers::solve(a, b, opts)?;
    if !report.converged {
        return Err(Error::NotConverged(Box::new(report)));
    }
    let ctx = AdjointContext {
        matrix: a.clone(),
        x: x.clone(),
    };
    Ok((x, ctx, report))
}

/// One adjoint solve `Aᵀ λ = grad_x`, then `grad_b = λ` and
/// `grad_vals[k] = −λ[i_k]·x[j_k]`.
///
/// Symmetric matrices reuse the forward operator instead of transposing.
pub fn solve_backward(
    ctx: &AdjointContext,
    grad_x: &[f64],
    opts: &SolveOptions,
) -> Result<GradientBundle> {
    let a = &ctx.matrix;
    if grad_x.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: grad_x.len(),
        });
    }
    let (lambda, report) = if a.is_symmetric() {
        solvers::solve(a, grad_x, opts)?
    } else {
        solvers::solve(&a.transpose(), grad_x, opts)?
    };
    if !report.converged {
        return Err(Error::NotConverged(Box::new(report)));
    }
    let grad_vals = outer_on_pattern(a, &lambda, &ctx.x);
    Ok(GradientBundle {
        grad_b: lambda,
        grad_vals,
        adjoint_report: report,
    })
}

/// `−λ_i · x_j` for every stored `(i, j)`.
pub fn outer_on_pattern(a: &SparseCoo, lambda: &[f64], x: &[f64]) -> Vec<f64> {
    a.rows()
        .iter()
        .zip(a.cols())
        .map(|(&i, &j)| -lambda[i] * x[j])
        .collect()
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Parameter index where the maximum occurred.
    pub worst_index: Option<usize>,
    /// `(index, finite difference, analytic, relative error)` per checked parameter.
    pub entries: Vec<(usize, f64, f64, f64)>,
}

pub fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-12)
}

/// Central-difference check of every parameter; returns the largest
/// relative error `|fd − g| / max(|fd|, |g|, 1e-12)`.
pub fn gradcheck<F, E>(loss_fn: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> std::result::Result<f64, E>,
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    let indices: Vec<usize> = (0..params.len()).collect();
    Ok(gradcheck_indices(loss_fn, params, analytic, eps, &indices)?.max_rel_error)
}

/// As [`gradcheck`], restricted to `indices`.
pub fn gradcheck_indices<F, E>(
    mut loss_fn: F,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
    indices: &[usize],
) -> Result<GradcheckReport>
where
    F: FnMut(&[f64]) -> std::result::Result<f64, E>,
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if analytic.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    let mut p = params.to_vec();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        entries: Vec::with_capacity(indices.len()),
    };
    for &index in indices {
        if index >= p.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter index {index} out of range for {} parameters",
                p.len()
            )));
        }
        let fail = |e: E| Error::LossFailed {
            index,
            source: e.into(),
        };
        let orig = p[index];
        p[index] = orig + eps;
        let plus = loss_fn(&p).map_err(fail)?;
        p[index] = orig - eps;
        let minus = loss_fn(&p).map_err(fail)?;
        p[index] = orig;

        let fd = (plus - minus) / (2.0 * eps);
        let rel = relative_error(fd, analytic[index]);
        if report.worst_index.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(index);
        }
        report.entries.push((index, fd, analytic[index], rel));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::count_linear_solves;

    fn ok(v: f64) -> std::result::Result<f64, Error> {
        Ok(v)
    }

    #[test]
    fn quadratic_exact() {
        let err = gradcheck(|p| ok(p[0] * p[0]), &[3.0], &[6.0], 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn cubic_truncation() {
        let err = gradcheck(|p| ok(p[0].powi(3)), &[2.0], &[12.0], 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn wrong_gradient_flagged() {
        let err = gradcheck(|p| ok(p[0] * p[0]), &[3.0], &[6.1], 1e-5).unwrap();
        assert!((err - 0.1 / 6.1).abs() < 1e-6, "{err}");
    }

    #[test]
    fn loss_failure_carries_index() {
        let r = gradcheck(
            |p: &[f64]| {
                if p[1] > 1.0 {
                    Err(Error::InvalidArgument("boom".into()))
                } else {
                    Ok(p[0])
                }
            },
            &[0.0, 1.0],
            &[1.0, 0.0],
            1e-5,
        );
        assert!(matches!(r, Err(Error::LossFailed { index: 1, .. })));
    }

    #[test]
    fn bad_eps() {
        assert!(gradcheck(|p| ok(p[0]), &[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn identity_matrix() {
        let a = SparseCoo::identity(3);
        let b = [1.0, -2.0, 0.5];
        let opts = SolveOptions::default();
        let (x, ctx, _) = solve_forward(&a, &b, &opts).unwrap();
        assert_eq!(x, b.to_vec());
        assert_eq!(ctx.solution(), &b);
        assert_eq!(ctx.matrix(), &a);
        let g = [0.3, 0.7, -1.1];
        let grads = solve_backward(&ctx, &g, &opts).unwrap();
        assert_eq!(grads.grad_b, g.to_vec());
        for (k, (i, j, _)) in a.iter().enumerate() {
            assert_eq!(grads.grad_vals[k], -g[i] * x[j]);
        }
    }

    #[test]
    fn scaled_identity_gradients() {
        let a = SparseCoo::from_diagonal(&[2.0; 3]);
        let opts = SolveOptions::default();
        let (x, ctx, _) = solve_forward(&a, &[2.0, 4.0, 6.0], &opts).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
        let grads = solve_backward(&ctx, &[1.0; 3], &opts).unwrap();
        assert_eq!(grads.grad_b, vec![0.5; 3]);
        assert_eq!(grads.grad_vals, vec![-0.5, -1.0, -1.5]);
    }

    #[test]
    fn exactly_one_backward_solve() {
        let a = SparseCoo::from_diagonal(&[2.0, 3.0]);
        let opts = SolveOptions::default();
        let (_, ctx, _) = solve_forward(&a, &[1.0, 1.0], &opts).unwrap();
        let (res, solves) = count_linear_solves(|| solve_backward(&ctx, &[1.0, 0.0], &opts));
        res.unwrap();
        assert_eq!(solves, 1);
    }

    #[test]
    fn backward_dimension_checked() {
        let a = SparseCoo::identity(2);
        let (_, ctx, _) = solve_forward(&a, &[1.0, 1.0], &SolveOptions::default()).unwrap();
        assert!(solve_backward(&ctx, &[1.0], &SolveOptions::default()).is_err());
    }

    #[test]
    fn non_converged_forward_is_error() {
        let p = crate::problems::poisson2d(50).unwrap();
        let opts = SolveOptions::default()
            .with_backend(crate::solvers::BackendChoice::Cg)
            .with_max_iter(2);
        assert!(matches!(
            solve_forward(&p.matrix, &p.rhs, &opts),
            Err(Error::NotConverged(_))
        ));
    }
}
