//! Smallest eigenpairs of sparse symmetric matrices, and the gradient of
//! eigenvalues with respect to the stored matrix entries.
//!
//! For a simple eigenvalue with unit eigenvector `v`,
//! `∂λ/∂A_ij = v_i · v_j`. Each stored entry is its own parameter, so a
//! symmetric off-diagonal pair `(i, j)`, `(j, i)` gets `v_i v_j` twice, once
//! per entry. Perturbing both halves at once measures the sum of the two.

mod dense;
mod lobpcg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseCoo;

pub use dense::{symmetric_eigen, SymmetricEigen};

/// Minimum separation between consecutive eigenvalues for the gradient.
pub const EIGENVALUE_GAP: f64 = 1e-8;

/// Symmetry tolerance applied to the input matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigMethod {
    /// Dense below `dense_threshold`, LOBPCG otherwise.
    Auto,
    Lobpcg,
    Dense,
}

#[derive(Debug, Clone)]
pub struct EigOptions {
    /// Bound on ‖A v − λ v‖₂ for each pair.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the random starting block.
    pub seed: u64,
    pub dense_threshold: usize,
    pub method: EigMethod,
    /// Optional starting block (at most `k` vectors used; the rest random).
    pub initial: Option<Vec<Vec<f64>>>,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 2000,
            seed: 0x5eed,
            dense_threshold: 64,
            method: EigMethod::Auto,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    /// Ascending.
    pub lambdas: Vec<f64>,
    /// `vectors[m]` pairs with `lambdas[m]`; unit norm, largest-magnitude
    /// component positive.
    pub vectors: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: usize,
    pub method: EigMethod,
}

impl EigenResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// The `k` smallest eigenpairs of symmetric `a`.
///
/// LOBPCG needs `k ≤ n/4`; the dense path accepts any `k ≤ n`. If some
/// pair misses `tol` within `max_iter`, the partial result comes back
/// inside [`Error::EigenNotConverged`].
pub fn eig_smallest(a: &SparseCoo, k: usize, opts: &EigOptions) -> Result<EigenResult> {
    a.check_symmetric(SYMMETRY_TOL)?;
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let method = match opts.method {
        EigMethod::Auto if n < opts.dense_threshold => EigMethod::Dense,
        EigMethod::Auto => EigMethod::Lobpcg,
        m => m,
    };

    let csr = a.to_csr();
    let (lambdas, mut vectors, iterations) = match method {
        EigMethod::Dense => {
            let eig = symmetric_eigen(&a.to_dense()?);
            (eig.values[..k].to_vec(), eig.vectors[..k].to_vec(), 0)
        }
        _ => {
            if 4 * k > n {
                return Err(Error::InvalidArgument(format!(
                    "LOBPCG needs k <= n/4, got k = {k}, n = {n}"
                )));
            }
            let out = lobpcg::lobpcg(
                &csr,
                k,
                opts.tol,
                opts.max_iter,
                opts.seed,
                opts.initial.as_deref(),
            );
            (out.values, out.vectors, out.iterations)
        }
    };

    for v in &mut vectors {
        let norm = crate::vecops::norm2(v);
        v.iter_mut().for_each(|x| *x /= norm);
        apply_sign_convention(v);
    }
    let residual_norms: Vec<f64> = lambdas
        .iter()
        .zip(&vectors)
        .map(|(&lambda, v)| {
            let mut r = csr.spmv(v).expect("length n");
            crate::vecops::axpy(-lambda, v, &mut r);
            crate::vecops::norm2(&r)
        })
        .collect();
    let converged = residual_norms.iter().map(|&r| r <= opts.tol).collect();
    let result = EigenResult {
        lambdas,
        vectors,
        residual_norms,
        converged,
        iterations,
        method,
    };
    if result.all_converged() {
        Ok(result)
    } else {
        Err(Error::EigenNotConverged(Box::new(result)))
    }
}

/// Flips `v` so its largest-magnitude component (first one on ties) is positive.
fn apply_sign_convention(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Gradient of `Σ_m grad_lambdas[m] · λ_m` with respect to every stored
/// entry of `pattern`: `Σ_m grad_lambdas[m] · v_m[i] · v_m[j]`.
///
/// Costs `O(k · nnz)` and performs no linear solves. Refuses repeated
/// eigenvalues, where the gradient is not defined.
pub fn eig_backward(
    result: &EigenResult,
    pattern: &SparseCoo,
    grad_lambdas: &[f64],
) -> Result<Vec<f64>> {
    let k = result.lambdas.len();
    if grad_lambdas.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: grad_lambdas.len(),
        });
    }
    if let Some(m) = result.converged.iter().position(|&c| !c) {
        return Err(Error::InvalidArgument(format!(
            "eigenpair {m} did not converge; its gradient is meaningless"
        )));
    }
    if let Some(v) = result.vectors.first() {
        if v.len() != pattern.nrows() || !pattern.is_square() {
            return Err(Error::DimensionMismatch {
                expected: v.len(),
                got: pattern.nrows(),
            });
        }
    }
    for m in 0..k.saturating_sub(1) {
        let gap = result.lambdas[m + 1] - result.lambdas[m];
        if gap <= EIGENVALUE_GAP {
            return Err(Error::DegenerateEigenvalue {
                index: m,
                next: m + 1,
                gap,
            });
        }
    }

    let mut grad = vec![0.0; pattern.nnz()];
    for (g, v) in grad_lambdas.iter().zip(&result.vectors) {
        if *g == 0.0 {
            continue;
        }
        for (slot, (&i, &j)) in grad
            .iter_mut()
            .zip(pattern.rows().iter().zip(pattern.cols()))
        {
            *slot += g * v[i] * v[j];
        }
    }
    Ok(grad)
}
