use crate::error::Result;
use crate::solvers::{
    check_system, instrument, Backend, JacobiPreconditioner, Preconditioner, SolveOptions,
    SolveReport,
};
use crate::sparse::CsrMatrix;
use crate::vecops::{dot, norm2};

/// Conjugate gradient for symmetric positive definite `A`.
///
/// SPD-ness is not checked. A non-positive curvature `pᵀAp` ends the
/// iteration with a diagnostic. With `Preconditioner::None` the operation
/// order is exactly that of the distributed CG, so the two agree bitwise on
/// one rank.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    check_system(a, b)?;
    instrument::record_linear_solve();
    Ok(cg_impl(a, b, opts))
}

pub(crate) fn cg_impl(a: &CsrMatrix, b: &[f64], opts: &SolveOptions) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    let precond = match opts.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => Some(JacobiPreconditioner::new(a)),
    };
    let tol = opts.threshold(norm2(b));

    let mut x = vec![0.0; n];
    let mut ap = vec![0.0; n];
    a.spmv_into(&x, &mut ap).expect("dimensions checked");
    let mut spmv_count = 1;
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut z = r.clone();
    if let Some(m) = &precond {
        m.apply(&r, &mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = if precond.is_some() {
        norm2(&r)
    } else {
        rz.sqrt()
    };

    let mut iterations = 0;
    let mut diagnostic = None;
    while res > tol && iterations < opts.max_iter {
        a.spmv_into(&p, &mut ap).expect("dimensions checked");
        spmv_count += 1;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            diagnostic = Some(format!(
                "breakdown: non-positive curvature pᵀAp = {pap:e} at iteration {iterations}"
            ));
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        for i in 0..n {
            r[i] -= alpha * ap[i];
        }
        let rz_new = match &precond {
            Some(m) => {
                m.apply(&r, &mut z);
                let rz_new = dot(&r, &z);
                res = norm2(&r);
                rz_new
            }
            None => {
                let rr = dot(&r, &r);
                res = rr.sqrt();
                z.copy_from_slice(&r);
                rr
            }
        };
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
        iterations += 1;
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
            backend: Backend::Cg,
            diagnostic,
        },
    )
}
