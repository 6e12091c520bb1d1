//! Linear solvers: preconditioned CG, BiCGStab, dense LU, and automatic
//! backend selection.
//!
//! All iterative solvers start from `x₀ = 0` and stop once the residual
//! 2-norm drops to `max(atol, rtol·‖b‖₂)`. Breakdowns are not errors: they
//! come back as a non-converged [`SolveReport`] with a diagnostic, so a
//! benchmark sweep can keep going.

mod bicgstab;
mod cg;
pub mod instrument;
mod jacobi;
mod lu;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SparseCoo};
use crate::vecops::norm2;

pub use bicgstab::bicgstab_solve;
pub use cg::cg_solve;
pub use instrument::{count_linear_solves, linear_solves};
pub use jacobi::{jacobi_build, JacobiPreconditioner};
pub use lu::{dense_lu_solve, DenseLu};

/// Crossover below which [`auto_solve`] factorises densely.
pub const DEFAULT_DENSE_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preconditioner {
    None,
    Jacobi,
}

/// Backend requested by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendChoice {
    Auto,
    Cg,
    Bicgstab,
    DenseLu,
}

/// Backend that actually ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Cg,
    Bicgstab,
    DenseLu,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Cg => "cg",
            Backend::Bicgstab => "bicgstab",
            Backend::DenseLu => "dense_lu",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Absolute tolerance on ‖b − Ax‖₂.
    pub atol: f64,
    /// Tolerance relative to ‖b‖₂.
    pub rtol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
    pub backend: BackendChoice,
    /// Problems with `n` below this are factorised densely by `Auto`.
    pub dense_threshold: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 0.0,
            max_iter: 10_000,
            preconditioner: Preconditioner::Jacobi,
            backend: BackendChoice::Auto,
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
        }
    }
}

impl SolveOptions {
    pub fn with_backend(mut self, backend: BackendChoice) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_preconditioner(mut self, preconditioner: Preconditioner) -> Self {
        self.preconditioner = preconditioner;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.atol >= 0.0 && self.rtol >= 0.0) {
            return Err(Error::InvalidArgument(
                "atol and rtol must be non-negative".into(),
            ));
        }
        if self.atol == 0.0 && self.rtol == 0.0 {
            return Err(Error::InvalidArgument(
                "atol and rtol cannot both be zero".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Stopping threshold for a right-hand side of norm `b_norm`.
    pub fn threshold(&self, b_norm: f64) -> f64 {
        self.atol.max(self.rtol * b_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub spmv_count: usize,
    pub backend: Backend,
    pub diagnostic: Option<String>,
}

impl SolveReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} after {} iterations, residual {:.3e}",
            self.backend, self.iterations, self.residual_norm
        );
        if let Some(d) = &self.diagnostic {
            s.push_str(" (");
            s.push_str(d);
            s.push(')');
        }
        s
    }
}

pub(crate) fn check_system(a: &CsrMatrix, b: &[f64]) -> Result<()> {
    let (nrows, ncols) = a.shape();
    if nrows != ncols {
        return Err(Error::NotSquare { nrows, ncols });
    }
    if b.len() != nrows {
        return Err(Error::DimensionMismatch {
            expected: nrows,
            got: b.len(),
        });
    }
    Ok(())
}

/// ‖b − Ax‖₂, recomputed from scratch.
pub fn residual_norm(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Result<f64> {
    let ax = a.spmv(x)?;
    Ok(norm2(&crate::vecops::sub(b, &ax)))
}

/// Backend `Auto` would pick for `a`.
pub fn select_backend(a: &SparseCoo, opts: &SolveOptions) -> Backend {
    if a.nrows() < opts.dense_threshold {
        Backend::DenseLu
    } else if a.is_symmetric() {
        Backend::Cg
    } else {
        Backend::Bicgstab
    }
}

/// Size- and symmetry-based backend selection.
///
/// `n < dense_threshold` runs dense LU; larger symmetric matrices run CG
/// and everything else BiCGStab, both with the configured preconditioner.
pub fn auto_solve(
    a: &SparseCoo,
    b: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    solve(a, b, &opts.clone().with_backend(BackendChoice::Auto))
}

/// Solves `A x = b` with the backend named in `opts`. Counts as one linear
/// solve in [`instrument`].
pub fn solve(a: &SparseCoo, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    let backend = match opts.backend {
        BackendChoice::Auto => select_backend(a, opts),
        BackendChoice::Cg => Backend::Cg,
        BackendChoice::Bicgstab => Backend::Bicgstab,
        BackendChoice::DenseLu => Backend::DenseLu,
    };
    let csr = a.to_csr();
    check_system(&csr, b)?;
    instrument::record_linear_solve();
    match backend {
        Backend::Cg => Ok(cg::cg_impl(&csr, b, opts)),
        Backend::Bicgstab => Ok(bicgstab::bicgstab_impl(&csr, b, opts)),
        Backend::DenseLu => lu::dense_solve_sparse(a, &csr, b, opts),
    }
}

/// Bytes of the arrays a CG solve keeps alive: the CSR matrix, `x`, `b`,
/// `r`, `p`, `Ap`, plus `z` and the inverse diagonal when preconditioned.
pub fn cg_live_bytes(a: &CsrMatrix, preconditioner: Preconditioner) -> usize {
    let vectors = match preconditioner {
        Preconditioner::None => 5,
        Preconditioner::Jacobi => 7,
    };
    a.storage_bytes() + vectors * a.nrows() * std::mem::size_of::<f64>()
}

/// Live array bytes of a solve with `backend`. BiCGStab keeps `x`, `b`,
/// `r`, `r̂`, `p`, `v`, `p̂`, `ŝ`, `t` (plus the inverse diagonal when
/// preconditioned); dense LU keeps the `n × n` factor, the pivots, `x`, `b`
/// and the CSR used for refinement.
pub fn live_bytes(a: &CsrMatrix, backend: Backend, preconditioner: Preconditioner) -> usize {
    let n = a.nrows();
    let f = std::mem::size_of::<f64>();
    match backend {
        Backend::Cg => cg_live_bytes(a, preconditioner),
        Backend::Bicgstab => {
            let vectors = match preconditioner {
                Preconditioner::None => 9,
                Preconditioner::Jacobi => 10,
            };
            a.storage_bytes() + vectors * n * f
        }
        Backend::DenseLu => {
            a.storage_bytes() + n * n * f + n * std::mem::size_of::<usize>() + 2 * n * f
        }
    }
}
