use crate::error::{Error, Result};
use crate::sparse::SparseCoo;

/// Central-difference Jacobian of `f(·, theta)` at `u`, stored with a full
/// dense pattern. Column `j` is `(f(u + ε e_j) − f(u − ε e_j)) / 2ε`.
pub fn fd_jacobian<F>(
    f: F,
    u: &[f64],
    theta: &[f64],
    eps: f64,
    dense_threshold: usize,
) -> Result<SparseCoo>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let n = u.len();
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if n > dense_threshold {
        return Err(Error::DenseCapExceeded {
            entries: n,
            cap: dense_threshold,
        });
    }
    let mut columns = Vec::with_capacity(n);
    let mut probe = u.to_vec();
    for j in 0..n {
        probe[j] = u[j] + eps;
        let plus = f(&probe, theta);
        probe[j] = u[j] - eps;
        let minus = f(&probe, theta);
        probe[j] = u[j];
        if plus.len() != n || minus.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: plus.len(),
            });
        }
        columns.push(
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * eps))
                .collect::<Vec<f64>>(),
        );
    }
    let mut rows = Vec::with_capacity(n * n);
    let mut cols = Vec::with_capacity(n * n);
    let mut vals = Vec::with_capacity(n * n);
    for i in 0..n {
        for (j, column) in columns.iter().enumerate() {
            rows.push(i);
            cols.push(j);
            vals.push(column[i]);
        }
    }
    SparseCoo::new(rows, cols, vals, (n, n))
}
