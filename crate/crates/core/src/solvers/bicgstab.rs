use crate::error::Result;
use crate::solvers::{
    check_system, instrument, Backend, JacobiPreconditioner, Preconditioner, SolveOptions,
    SolveReport,
};
use crate::sparse::CsrMatrix;
use crate::vecops::{dot, norm2};

/// Restarts allowed when the recurrence residual disagrees with `b − Ax`.
const MAX_RESTARTS: usize = 5;

/// Right-preconditioned BiCGStab for general nonsingular `A`.
///
/// Convergence is confirmed against the true residual `b − Ax`; on a
/// mismatch the iteration restarts from the current `x`.
pub fn bicgstab_solve(
    a: &CsrMatrix,
    b: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    check_system(a, b)?;
    instrument::record_linear_solve();
    Ok(bicgstab_impl(a, b, opts))
}

pub(crate) fn bicgstab_impl(
    a: &CsrMatrix,
    b: &[f64],
    opts: &SolveOptions,
) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    let precond = match opts.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => Some(JacobiPreconditioner::new(a)),
    };
    let apply = |v: &[f64], out: &mut [f64]| match &precond {
        Some(m) => m.apply(v, out),
        None => out.copy_from_slice(v),
    };
    let b_norm = norm2(b);
    let tol = opts.threshold(b_norm);
    let breakdown_floor = 1e-30 * b_norm * b_norm;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);

    // r = b − A·0 counts as the initial residual product.
    let mut spmv_count = 1;
    let mut res = norm2(&r);
    let mut iterations = 0;
    let mut diagnostic = None;
    let mut restarts = 0;

    'outer: loop {
        while res > tol && iterations < opts.max_iter {
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < breakdown_floor || !rho_new.is_finite() {
                diagnostic = Some(format!("rho breakdown: |ρ| = {:e}", rho_new.abs()));
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            apply(&p, &mut p_hat);
            a.spmv_into(&p_hat, &mut v).expect("dimensions checked");
            spmv_count += 1;
            let rv = dot(&r_hat, &v);
            if rv == 0.0 || !rv.is_finite() {
                diagnostic = Some(format!("breakdown: r̂ᵀv = {rv:e}"));
                break;
            }
            alpha = rho_new / rv;
            // r becomes s in place.
            for i in 0..n {
                r[i] -= alpha * v[i];
            }
            iterations += 1;
            let s_norm = norm2(&r);
            if s_norm <= tol {
                for i in 0..n {
                    x[i] += alpha * p_hat[i];
                }
                res = s_norm;
                break;
            }
            apply(&r, &mut s_hat);
            a.spmv_into(&s_hat, &mut t).expect("dimensions checked");
            spmv_count += 1;
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * p_hat[i] + omega * s_hat[i];
                r[i] -= omega * t[i];
            }
            res = norm2(&r);
            rho = rho_new;
            if omega == 0.0 && res > tol {
                diagnostic = Some("breakdown: ω = 0".into());
                break;
            }
        }
        if diagnostic.is_some() || res > tol {
            break;
        }
        // The updated residual drifts from b − Ax; confirm and restart from x
        // with the true residual if they disagree.
        a.spmv_into(&x, &mut t).expect("dimensions checked");
        spmv_count += 1;
        for i in 0..n {
            r[i] = b[i] - t[i];
        }
        res = norm2(&r);
        if res <= tol || restarts == MAX_RESTARTS || iterations >= opts.max_iter {
            break 'outer;
        }
        restarts += 1;
        r_hat.copy_from_slice(&r);
        p.fill(0.0);
        v.fill(0.0);
        (rho, alpha, omega) = (1.0, 1.0, 1.0);
    }

    let converged = res <= tol;
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("reached max_iter = {}", opts.max_iter));
    }
    (
        x,
        SolveReport {
            iterations,
            residual_norm: res,
            converged,
            spmv_count,
            backend: Backend::Bicgstab,
            diagnostic,
        },
    )
}
