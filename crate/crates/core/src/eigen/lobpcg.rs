//! Locally optimal block preconditioned conjugate gradient for the smallest
//! eigenpairs of a sparse symmetric matrix.
//!
//! Each iteration builds the trial space `[X, W, P]` (current Ritz vectors,
//! preconditioned residuals, previous search directions), orthonormalises it
//! and runs Rayleigh-Ritz. Converged columns stop contributing `W` and `P`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigen::dense::symmetric_eigen;
use crate::solvers::JacobiPreconditioner;
use crate::sparse::{CsrMatrix, DenseMatrix};
use crate::vecops::{axpy, dot, norm2};

pub(crate) struct LobpcgOutput {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Vectors whose norm falls below this after orthogonalisation are dropped.
const DROP_TOL: f64 = 1e-12;

pub(crate) fn lobpcg(
    a: &CsrMatrix,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
    initial: Option<&[Vec<f64>]>,
) -> LobpcgOutput {
    let n = a.nrows();
    let k_wanted = k;
    // Extra guard vectors speed up the wanted pairs when the spectrum clusters.
    let k = (k + k.max(2)).min(n / 3).max(k);
    let precond = JacobiPreconditioner::new(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut x: Vec<Vec<f64>> = match initial {
        Some(init) => init.iter().take(k).cloned().collect(),
        None => Vec::new(),
    };
    loop {
        while x.len() < k {
            x.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        let kept = orthonormalize(&mut x, 0);
        if kept == k {
            break;
        }
    }

    let mut ritz = rayleigh_ritz(a, &x, k);
    let mut values = ritz.values;
    x = ritz.vectors;
    let mut ax = ritz.images;
    let mut p: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut residual_norms = vec![f64::INFINITY; k];
    let mut iterations = 0;

    loop {
        let residuals: Vec<Vec<f64>> = (0..k)
            .map(|m| {
                let mut r = ax[m].clone();
                axpy(-values[m], &x[m], &mut r);
                r
            })
            .collect();
        for m in 0..k {
            residual_norms[m] = norm2(&residuals[m]);
        }
        let active: Vec<usize> = (0..k).filter(|&m| residual_norms[m] > tol).collect();
        if active.iter().all(|&m| m >= k_wanted) || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut basis = x.clone();
        for &m in &active {
            let mut w = vec![0.0; n];
            precond.apply(&residuals[m], &mut w);
            basis.push(w);
        }
        for &m in &active {
            if let Some(pm) = &p[m] {
                basis.push(pm.clone());
            }
        }
        orthonormalize(&mut basis, k);

        ritz = rayleigh_ritz(a, &basis, k);
        values = ritz.values;
        // Search directions: the part of each new Ritz vector outside span(X).
        let mut new_p: Vec<Option<Vec<f64>>> = vec![None; k];
        for (m, slot) in new_p.iter_mut().enumerate() {
            let mut dir = vec![0.0; n];
            for (s, coeff) in basis.iter().zip(&ritz.coefficients[m]).skip(k) {
                axpy(*coeff, s, &mut dir);
            }
            let norm = norm2(&dir);
            if norm > DROP_TOL {
                dir.iter_mut().for_each(|d| *d /= norm);
                *slot = Some(dir);
            }
        }
        p = new_p;
        x = ritz.vectors;
        ax = ritz.images;
    }

    values.truncate(k_wanted);
    x.truncate(k_wanted);
    LobpcgOutput {
        values,
        vectors: x,
        iterations,
    }
}

struct Ritz {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    /// `A` applied to each Ritz vector.
    images: Vec<Vec<f64>>,
    /// Coordinates of each Ritz vector in the basis.
    coefficients: Vec<Vec<f64>>,
}

/// Rayleigh-Ritz on an orthonormal basis, keeping the `k` smallest pairs.
fn rayleigh_ritz(a: &CsrMatrix, basis: &[Vec<f64>], k: usize) -> Ritz {
    let m = basis.len();
    let images: Vec<Vec<f64>> = basis
        .iter()
        .map(|s| a.spmv(s).expect("basis vectors have length n"))
        .collect();
    let mut gram = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let g = 0.5 * (dot(&basis[i], &images[j]) + dot(&images[i], &basis[j]));
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let eig = symmetric_eigen(&gram);
    let n = basis[0].len();
    let mut vectors = Vec::with_capacity(k);
    let mut ritz_images = Vec::with_capacity(k);
    for c in eig.vectors.iter().take(k) {
        let mut v = vec![0.0; n];
        let mut av = vec![0.0; n];
        for ((s, as_), &coeff) in basis.iter().zip(&images).zip(c) {
            axpy(coeff, s, &mut v);
            axpy(coeff, as_, &mut av);
        }
        vectors.push(v);
        ritz_images.push(av);
    }
    // Recompute A·v directly to keep residuals honest as the basis drifts.
    for (v, av) in vectors.iter().zip(ritz_images.iter_mut()) {
        *av = a.spmv(v).expect("length n");
    }
    Ritz {
        values: eig.values[..k].to_vec(),
        vectors,
        images: ritz_images,
        coefficients: eig.vectors[..k].to_vec(),
    }
}

/// Modified Gram-Schmidt with a second pass, in place. The first `fixed`
/// vectors are assumed orthonormal already. Vectors that vanish are removed.
/// Returns the number of vectors kept.
pub(crate) fn orthonormalize(vectors: &mut Vec<Vec<f64>>, fixed: usize) -> usize {
    let mut kept: Vec<Vec<f64>> = vectors.drain(..fixed).collect();
    for mut v in vectors.drain(..) {
        let norm0 = norm2(&v);
        if !(norm0 > 0.0) || !norm0.is_finite() {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm0);
        for _pass in 0..2 {
            for q in &kept {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let norm = norm2(&v);
        if norm < DROP_TOL {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        kept.push(v);
    }
    *vectors = kept;
    vectors.len()
}
