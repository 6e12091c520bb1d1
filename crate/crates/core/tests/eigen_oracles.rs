use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsla_core::adjoint::relative_error;
use sparsla_core::eigen::{EigMethod, EIGENVALUE_GAP};
use sparsla_core::{eig_backward, eig_smallest, poisson2d, EigOptions, SparseCoo};

fn random_symmetric(n: usize, per_row: usize, seed: u64) -> SparseCoo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for i in 0..n {
        rows.push(i);
        cols.push(i);
        vals.push(rng.gen_range(0.0..10.0));
        for _ in 0..per_row {
            let j = rng.gen_range(0..n);
            if j != i {
                let v = rng.gen_range(-1.0..1.0);
                rows.extend([i, j]);
                cols.extend([j, i]);
                vals.extend([v, v]);
            }
        }
    }
    SparseCoo::new(rows, cols, vals, (n, n)).unwrap()
}

fn to_nalgebra(a: &SparseCoo) -> DMatrix<f64> {
    let d = a.to_dense().unwrap();
    DMatrix::from_row_slice(d.nrows(), d.ncols(), d.data())
}

fn sorted_symmetric_eigenvalues(a: &SparseCoo) -> Vec<f64> {
    let mut v: Vec<f64> = to_nalgebra(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues of a general real matrix sorted by real part. A single-entry
/// perturbation of a symmetric matrix with simple spectrum keeps them real.
fn sorted_general_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .map(|c| {
            assert!(c.im.abs() < 1e-9, "complex eigenvalue {c}");
            c.re
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn eigenvalues_match_dense_oracle() {
    for (n, k, seed) in [(10, 2, 1), (40, 6, 2), (64, 8, 3), (128, 6, 4), (256, 6, 5)] {
        let a = random_symmetric(n, 3, seed);
        let oracle = sorted_symmetric_eigenvalues(&a);
        for method in [EigMethod::Auto, EigMethod::Dense, EigMethod::Lobpcg] {
            if method == EigMethod::Lobpcg && 4 * k > n {
                continue;
            }
            let opts = EigOptions {
                method,
                tol: 1e-9,
                ..Default::default()
            };
            let r = eig_smallest(&a, k, &opts).unwrap();
            for m in 0..k {
                assert!(
                    (r.lambdas[m] - oracle[m]).abs() <= 1e-8,
                    "n={n} {method:?} m={m}: {} vs {}",
                    r.lambdas[m],
                    oracle[m]
                );
            }
            assert!(r.lambdas.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn poisson16_six_smallest() {
    let p = poisson2d(16).unwrap();
    let oracle = sorted_symmetric_eigenvalues(&p.matrix);
    let r = eig_smallest(&p.matrix, 6, &EigOptions::default()).unwrap();
    assert_eq!(r.method, EigMethod::Lobpcg);
    // Closed form: 4 − 2cos(iπ/17) − 2cos(jπ/17).
    let h = std::f64::consts::PI / 17.0;
    let mut analytic: Vec<f64> = (1..=16)
        .flat_map(|i| (1..=16).map(move |j| 4.0 - 2.0 * (i as f64 * h).cos() - 2.0 * (j as f64 * h).cos()))
        .collect();
    analytic.sort_by(f64::total_cmp);
    for m in 0..6 {
        assert!((r.lambdas[m] - oracle[m]).abs() <= 1e-8);
        assert!((r.lambdas[m] - analytic[m]).abs() <= 1e-8);
    }
}

#[test]
fn trace_equals_eigenvalue_sum() {
    for (n, seed) in [(5, 1), (12, 2), (30, 3)] {
        let a = random_symmetric(n, 2, seed);
        let r = eig_smallest(&a, n, &EigOptions::default()).unwrap();
        let trace: f64 = a.diagonal().iter().sum();
        let sum: f64 = r.lambdas.iter().sum();
        assert!((trace - sum).abs() <= 1e-9, "n={n}");
    }
}

#[test]
fn two_by_two_single_entry_fd() {
    let a = SparseCoo::new(vec![0, 0, 1, 1], vec![0, 1, 0, 1], vec![2.0, 1.0, 1.0, 2.0], (2, 2)).unwrap();
    let r = eig_smallest(&a, 1, &EigOptions::default()).unwrap();
    let g = eig_backward(&r, &a, &[1.0]).unwrap();
    let expected = [0.5, -0.5, -0.5, 0.5];
    let eps = 1e-5;
    // Smallest root of the characteristic polynomial of an arbitrary 2×2.
    let smallest = |v: &[f64]| {
        let (tr, det) = (v[0] + v[3], v[0] * v[3] - v[1] * v[2]);
        0.5 * (tr - (tr * tr - 4.0 * det).sqrt())
    };
    for k in 0..4 {
        assert!((g[k] - expected[k]).abs() <= 1e-6);
        let mut plus = a.vals().to_vec();
        let mut minus = plus.clone();
        plus[k] += eps;
        minus[k] -= eps;
        let fd = (smallest(&plus) - smallest(&minus)) / (2.0 * eps);
        assert!((fd - expected[k]).abs() <= 1e-6, "entry {k}: fd {fd}");
    }
}

fn single_entry_fd_error(n: usize, seed: u64, k: usize) -> Option<f64> {
    let a = random_symmetric(n, 2, seed);
    let r = eig_smallest(&a, k, &EigOptions::default()).unwrap();
    let spectrum = sorted_symmetric_eigenvalues(&a);
    if spectrum.windows(2).take(k + 1).any(|w| w[1] - w[0] < 1e-2) {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grad = eig_backward(&r, &a, &weights).unwrap();
    let base = to_nalgebra(&a);
    let loss = |m: &DMatrix<f64>| {
        let ev = sorted_general_eigenvalues(m);
        weights.iter().zip(&ev).map(|(w, l)| w * l).sum::<f64>()
    };
    // Fourth-order central stencil: a wider step keeps eigensolver roundoff
    // well below the small entries of the gradient.
    let eps = 2.5e-4;
    let mut worst = 0.0f64;
    for idx in 0..a.nnz() {
        let (i, j) = (a.rows()[idx], a.cols()[idx]);
        let at = |h: f64| {
            let mut m = base.clone();
            m[(i, j)] += h;
            loss(&m)
        };
        let fd = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
        // Entries whose gradient vanishes carry only roundoff; compare absolutely.
        if fd.abs().max(grad[idx].abs()) < 1e-5 {
            assert!((fd - grad[idx]).abs() < 1e-10, "({i},{j}) fd {fd:e} grad {:e}", grad[idx]);
            continue;
        }
        worst = worst.max(relative_error(fd, grad[idx]));
    }
    Some(worst)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Perturbing one stored entry, symmetric partner untouched, against
    /// a general eigenvalue solver.
    #[test]
    fn gradient_matches_single_entry_fd(n in 6usize..40, seed in 0u64..1000) {
        let k = 3.min(n / 2);
        if let Some(err) = single_entry_fd_error(n, seed, k) {
            prop_assert!(err < 1e-5, "n={} seed={} err={:e}", n, seed, err);
        }
    }
}

#[test]
fn single_entry_fd_at_64() {
    let err = single_entry_fd_error(64, 7, 4).expect("spectrum well separated");
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn gap_threshold_is_enforced() {
    let a = SparseCoo::from_diagonal(&[1.0, 1.0 + 0.5 * EIGENVALUE_GAP, 3.0]);
    let r = eig_smallest(&a, 2, &EigOptions::default()).unwrap();
    assert!(eig_backward(&r, &a, &[1.0, 0.0]).is_err());
    let b = SparseCoo::from_diagonal(&[1.0, 1.0 + 1e-6, 3.0]);
    let r = eig_smallest(&b, 2, &EigOptions::default()).unwrap();
    assert!(eig_backward(&r, &b, &[1.0, 0.0]).is_ok());
}

#[test]
fn seeded_runs_are_reproducible() {
    let p = poisson2d(20).unwrap();
    let a = eig_smallest(&p.matrix, 4, &EigOptions::default()).unwrap();
    let b = eig_smallest(&p.matrix, 4, &EigOptions::default()).unwrap();
    assert_eq!(a, b);
}
