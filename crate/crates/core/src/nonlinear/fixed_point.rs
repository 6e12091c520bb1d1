use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::DenseLu;
use crate::sparse::DenseMatrix;
use crate::vecops::{dot, norm2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// Number of updates applied to the initial guess.
    pub iterations: usize,
    /// ‖g(u) − u‖₂ at the returned iterate.
    pub residual_norm: f64,
    pub converged: bool,
    /// Anderson iterations that fell back to a plain Picard step.
    pub fallback_steps: usize,
}

/// Tikhonov weight for the Anderson normal equations, relative to their
/// largest diagonal entry.
const TIKHONOV: f64 = 1e-12;

fn eval<G: FnMut(&[f64]) -> Vec<f64>>(g: &mut G, u: &[f64]) -> Result<Vec<f64>> {
    let gu = g(u);
    if gu.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: gu.len(),
        });
    }
    Ok(gu)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Plain fixed-point iteration `u ← g(u)` until ‖g(u) − u‖₂ ≤ tol.
pub fn picard_solve<G>(
    mut g: G,
    u0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, FixedPointReport)>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let mut u = u0.to_vec();
    let mut gu = eval(&mut g, &u)?;
    let mut res = norm2(&diff(&gu, &u));
    let mut iterations = 0;
    while !(res <= tol) && iterations < max_iter && res.is_finite() {
        u = gu;
        gu = eval(&mut g, &u)?;
        res = norm2(&diff(&gu, &u));
        iterations += 1;
    }
    Ok((
        u,
        FixedPointReport {
            iterations,
            residual_norm: res,
            converged: res <= tol,
            fallback_steps: 0,
        },
    ))
}

/// Type-II Anderson acceleration with window `m`.
///
/// With `f_k = g(u_k) − u_k`, the next iterate is
/// `g(u_k) − Σ_j γ_j Δg_j` where `γ` minimises `‖f_k − Σ_j γ_j Δf_j‖₂`
/// over the last `min(m, k)` differences.
pub fn anderson_solve<G>(
    mut g: G,
    u0: &[f64],
    m: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, FixedPointReport)>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    if m == 0 {
        return Err(Error::InvalidArgument(
            "Anderson window must be at least 1".into(),
        ));
    }
    let mut u = u0.to_vec();
    let mut gu = eval(&mut g, &u)?;
    let mut f = diff(&gu, &u);
    let mut res = norm2(&f);
    let mut d_f: Vec<Vec<f64>> = Vec::new();
    let mut d_g: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut fallback_steps = 0;

    while !(res <= tol) && iterations < max_iter && res.is_finite() {
        let mut u_next = gu.clone();
        if !d_f.is_empty() {
            match mixing_coefficients(&d_f, &f) {
                Some(gamma) => {
                    for (gj, dg) in gamma.iter().zip(&d_g) {
                        crate::vecops::axpy(-gj, dg, &mut u_next);
                    }
                }
                None => fallback_steps += 1,
            }
        }
        let g_next = eval(&mut g, &u_next)?;
        let f_next = diff(&g_next, &u_next);
        d_f.push(diff(&f_next, &f));
        d_g.push(diff(&g_next, &gu));
        if d_f.len() > m {
            d_f.remove(0);
            d_g.remove(0);
        }
        u = u_next;
        gu = g_next;
        f = f_next;
        res = norm2(&f);
        iterations += 1;
    }
    Ok((
        u,
        FixedPointReport {
            iterations,
            residual_norm: res,
            converged: res <= tol,
            fallback_steps,
        },
    ))
}

/// Least-squares coefficients from the regularised normal equations, or
/// `None` when that system is numerically singular.
fn mixing_coefficients(d_f: &[Vec<f64>], f: &[f64]) -> Option<Vec<f64>> {
    let k = d_f.len();
    let mut gram = DenseMatrix::from_fn(k, k, |i, j| dot(&d_f[i], &d_f[j]));
    let scale = (0..k).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for i in 0..k {
        gram[(i, i)] += TIKHONOV * scale;
    }
    let rhs: Vec<f64> = d_f.iter().map(|d| dot(d, f)).collect();
    let gamma = DenseLu::factor(&gram).ok()?.solve(&rhs).ok()?;
    gamma.iter().all(|x| x.is_finite()).then_some(gamma)
}
