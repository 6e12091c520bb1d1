//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsla_cli::gradcheck::{self, GradcheckConfig};
use sparsla_core::distributed::{
    build_local, dist_cg, gather_solution, partition_contiguous, partition_rcb, run_ranks,
    scatter_owned, PartitionPlan, Transport,
};
use sparsla_core::eigen::EigMethod;
use sparsla_core::solvers::{count_linear_solves, live_bytes};
use sparsla_core::vecops::max_abs_diff;
use sparsla_core::{
    bicgstab_solve, cg_solve, eig_backward, eig_smallest, newton_backward, newton_solve, poisson2d,
    poisson2d_rect, solve_backward, solve_forward, Backend, DiffusionSystem, EigOptions,
    NewtonOptions, Preconditioner, SolveOptions, SparseCoo,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn to_nalgebra(a: &SparseCoo) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.iter() {
        m[(i, j)] += v;
    }
    m
}

fn rel_diff(x: &[f64], y: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den
}

fn gradcheck_defaults() -> Check {
    let start = Instant::now();
    let rows = ok(gradcheck::run_all(&GradcheckConfig::default()))?;
    let elapsed = start.elapsed();
    let mut detail = Vec::new();
    for r in &rows {
        detail.push(format!("{} {:.2e}", r.experiment, r.max_rel_error));
        ensure!(r.passed(), "{} max relative error {:e}", r.experiment, r.max_rel_error);
    }
    let linear = &rows[0];
    ensure!(linear.n == 1000, "linear n = {}", linear.n);
    let newton = rows[2].newton_iterations;
    ensure!(newton == Some(5), "nonlinear case took {newton:?} Newton iterations");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:.1?}");
    Ok(format!("{}; {:.1?}", detail.join(", "), elapsed))
}

fn backward_solve_counts() -> Check {
    // Linear: forward CG runs of varying length, one backward solve each.
    let mut linear_iters = Vec::new();
    for (side, atol) in [(4, 1e-2), (6, 1e-4), (10, 1e-8), (24, 1e-10)] {
        let a = poisson2d(side).unwrap().matrix;
        let b = random_vec(a.nrows(), 1);
        let opts = SolveOptions::default().with_backend(sparsla_core::BackendChoice::Cg).with_atol(atol);
        let (_, ctx, rep) = ok(solve_forward(&a, &b, &opts))?;
        let w = random_vec(a.nrows(), 2);
        let (g, solves) = count_linear_solves(|| solve_backward(&ctx, &w, &opts));
        ok(g)?;
        ensure!(solves == 1, "solve_backward ran {solves} solves");
        linear_iters.push(rep.iterations);
    }

    let sys = ok(DiffusionSystem::poisson(16, 1.0))?;
    let n = sys.n();
    let theta = vec![1.0; n];
    let grad_u = random_vec(n, 3);
    let mut covered = std::collections::BTreeSet::new();
    for start in [0.0, 1.0, 3.0, 10.0] {
        for tol in [1e-1, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12] {
            let opts = NewtonOptions {
                tol,
                ..Default::default()
            };
            let (_, ctx, rep) = ok(newton_solve(&sys, &vec![start; n], &theta, &opts))?;
            ensure!(rep.converged, "Newton did not converge from {start} at tol {tol:e}");
            let (g, solves) =
                count_linear_solves(|| newton_backward(&ctx, &sys, &grad_u, &SolveOptions::default()));
            ok(g)?;
            ensure!(solves == 1, "newton_backward ran {solves} solves after {} iterations", rep.newton_iterations);
            covered.insert(rep.newton_iterations);
        }
    }
    for k in 2..=10 {
        ensure!(covered.contains(&k), "no forward run with {k} Newton iterations");
    }

    let a = poisson2d_rect(12, 9).unwrap().matrix;
    let res = ok(eig_smallest(&a, 4, &EigOptions::default()))?;
    let (g, solves) = count_linear_solves(|| eig_backward(&res, &a, &[1.0, -0.5, 0.25, 2.0]));
    ok(g)?;
    ensure!(solves == 0, "eig_backward ran {solves} solves");
    Ok(format!("linear forward iters {linear_iters:?}, Newton k 2..=10 covered, eig 0"))
}

/// Every array in the serialized form, with its length.
fn arrays(v: &serde_json::Value, path: String, out: &mut Vec<(String, usize)>) {
    match v {
        serde_json::Value::Array(items) if items.iter().all(|x| x.is_number()) => {
            out.push((path, items.len()))
        }
        serde_json::Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                arrays(x, format!("{path}[{i}]"), out);
            }
        }
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                arrays(x, format!("{path}.{k}"), out);
            }
        }
        _ => {}
    }
}

fn serialized_arrays<T: serde::Serialize>(t: &T) -> Result<Vec<(String, usize)>, String> {
    let v = ok(serde_json::to_value(t))?;
    let mut out = Vec::new();
    arrays(&v, String::new(), &mut out);
    out.sort();
    // The matrix shape `[nrows, ncols]` is a fixed pair, not O(n) content.
    let shapes = out.iter().filter(|(p, len)| p.ends_with(".shape") && *len == 2).count();
    out.retain(|(p, _)| !p.ends_with(".shape"));
    if shapes != 1 {
        return Err(format!("expected one matrix shape pair, found {shapes}"));
    }
    Ok(out)
}

fn context_sizes() -> Check {
    let a = poisson2d(12).unwrap().matrix;
    let (n, nnz) = (a.nrows(), a.nnz());
    let b = random_vec(n, 4);
    let mut linear_shapes = Vec::new();
    for atol in [1e-2, 1e-6, 1e-12] {
        let opts = SolveOptions::default().with_atol(atol).with_backend(sparsla_core::BackendChoice::Cg);
        let (_, ctx, _) = ok(solve_forward(&a, &b, &opts))?;
        let shape = serialized_arrays(&ctx)?;
        let total: usize = shape.iter().map(|s| s.1).sum();
        ensure!(total == n + 3 * nnz, "adjoint context stores {total} scalars, expected {}", n + 3 * nnz);
        linear_shapes.push(shape);
    }
    ensure!(linear_shapes.windows(2).all(|w| w[0] == w[1]), "adjoint context shape depends on iterations");

    let sys = ok(DiffusionSystem::poisson(12, 1.0))?;
    let theta = vec![1.0; n];
    let mut newton_shapes = Vec::new();
    let mut iters = Vec::new();
    for tol in [1e-2, 1e-6, 1e-12] {
        let opts = NewtonOptions {
            tol,
            ..Default::default()
        };
        let (_, ctx, rep) = ok(newton_solve(&sys, &vec![0.0; n], &theta, &opts))?;
        let v = ok(serde_json::to_value(&ctx))?;
        let mut keys: Vec<&String> = v.as_object().ok_or("context is not an object")?.keys().collect();
        keys.sort();
        ensure!(keys == ["jacobian", "theta", "u"], "Newton context keys {keys:?}");
        let shape = serialized_arrays(&ctx)?;
        let total: usize = shape.iter().map(|s| s.1).sum();
        ensure!(total == 2 * n + 3 * nnz, "Newton context stores {total} scalars");
        newton_shapes.push(shape);
        iters.push(rep.newton_iterations);
    }
    ensure!(newton_shapes.windows(2).all(|w| w[0] == w[1]), "Newton context shape depends on iterations");
    Ok(format!("n = {n}, nnz = {nnz}; adjoint n+3nnz, Newton 2n+3nnz over Newton iters {iters:?}"))
}

fn distributed_matches_serial() -> Check {
    let start = Instant::now();
    let atol = 1e-12;
    let mut worst = 0.0f64;
    let mut runs = 0;
    for grid in [32, 64] {
        let p = poisson2d(grid).unwrap();
        let opts = SolveOptions::default()
            .with_preconditioner(Preconditioner::None)
            .with_atol(atol)
            .with_max_iter(10_000);
        let (serial, _) = ok(cg_solve(&p.matrix.to_csr(), &p.rhs, &opts))?;
        for parts in 1..=4 {
            let mut partitions = vec![("contiguous", ok(partition_contiguous(p.dof(), parts))?)];
            if parts.is_power_of_two() {
                partitions.push(("rcb", ok(partition_rcb(&p.coords, parts))?));
            }
            for (name, part_of) in partitions {
                let plan = ok(PartitionPlan::new(&p.matrix, part_of, parts))?;
                let out = run_ranks(parts, |t| {
                    let l = build_local(&p.matrix, &plan, t.rank())?;
                    let (x, _) = dist_cg(&l, t, &scatter_owned(&l, &p.rhs), atol, 10_000)?;
                    gather_solution(t, &x, &plan)
                });
                let x = ok(out.into_iter().next().unwrap())?.unwrap();
                let d = max_abs_diff(&x, &serial);
                if parts == 1 {
                    let bitwise = x.iter().zip(&serial).all(|(a, b)| a.to_bits() == b.to_bits());
                    ensure!(bitwise, "P = 1 {name} on {grid}x{grid} is not bitwise identical");
                }
                ensure!(d <= 1e-10, "{name} P = {parts} on {grid}x{grid}: diff {d:e}");
                worst = worst.max(d);
                runs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:.1?}");
    Ok(format!("{runs} runs, max diff {worst:.2e}, rcb at P = 3 not defined; {elapsed:.1?}"))
}

fn communication_counts() -> Check {
    let grid = 32;
    let p = poisson2d(grid).unwrap();
    let parts = 4;
    let plan = ok(PartitionPlan::new(&p.matrix, ok(partition_contiguous(p.dof(), parts))?, parts))?;
    let out = run_ranks(parts, |t| {
        let l = build_local(&p.matrix, &plan, t.rank())?;
        let (_, rep) = dist_cg(&l, t, &scatter_owned(&l, &p.rhs), 1e-10, 10_000)?;
        let per_neighbor: Vec<usize> = l.halo_map.neighbors.iter().map(|e| e.recv_idx.len()).collect();
        Ok::<_, sparsla_core::Error>((rep.iterations as u64, t.log(), l.n_halo(), per_neighbor))
    });
    for (rank, r) in out.into_iter().enumerate() {
        let (k, log, halo, per_neighbor) = ok(r)?;
        ensure!(log.halo_exchanges == k, "rank {rank}: {} halo exchanges in {k} iterations", log.halo_exchanges);
        ensure!(log.all_reduces == 2 * k + 1, "rank {rank}: {} all-reduces in {k} iterations", log.all_reduces);
        ensure!(per_neighbor.iter().all(|&h| h == grid), "rank {rank}: per-neighbour halo {per_neighbor:?}");
        let expected = if rank == 0 || rank == parts - 1 { grid } else { 2 * grid };
        ensure!(halo == expected, "rank {rank}: halo {halo}, expected {expected}");
    }
    Ok(format!(
        "1 halo exchange + 2 all-reduces per iteration (+1 initial); per-neighbour halo {grid}, interior total {}",
        2 * grid
    ))
}

fn iterative_and_eigen_vs_dense() -> Check {
    let opts = SolveOptions::default().with_atol(0.0).with_rtol(1e-13).with_max_iter(20_000);
    let mut worst_solve = 0.0f64;

    let p = poisson2d(32).unwrap();
    let lu = to_nalgebra(&p.matrix).lu();
    let exact = lu.solve(&DVector::from_column_slice(&p.rhs)).ok_or("oracle LU singular")?;
    let (x, _) = ok(cg_solve(&p.matrix.to_csr(), &p.rhs, &opts))?;
    worst_solve = worst_solve.max(rel_diff(&x, exact.as_slice()));

    // Nonsymmetric, diagonally dominant, n = 1024.
    let n = 1024;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        rows.push(i);
        cols.push(i);
        vals.push(8.0);
        for _ in 0..5 {
            rows.push(i);
            cols.push(rng.gen_range(0..n));
            vals.push(rng.gen_range(-1.0..1.0));
        }
    }
    let a = ok(SparseCoo::new(rows, cols, vals, (n, n)))?;
    let b = random_vec(n, 6);
    let exact = to_nalgebra(&a).lu().solve(&DVector::from_column_slice(&b)).ok_or("oracle LU singular")?;
    let (x, _) = ok(bicgstab_solve(&a.to_csr(), &b, &opts))?;
    worst_solve = worst_solve.max(rel_diff(&x, exact.as_slice()));
    ensure!(worst_solve <= 1e-7, "iterative solution off by {worst_solve:e}");

    let mut worst_eig = 0.0f64;
    let mut sym = p.matrix.clone();
    sym = ok(sym.with_values(sym.vals().iter().map(|v| v * 0.5).collect()))?;
    let cases = [poisson2d(16).unwrap().matrix, poisson2d_rect(20, 12).unwrap().matrix, sym];
    for a in cases.iter().filter(|a| a.nrows() <= 256) {
        let mut oracle: Vec<f64> = to_nalgebra(a).symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        for method in [EigMethod::Lobpcg, EigMethod::Dense] {
            let o = EigOptions {
                tol: 1e-10,
                method,
                ..Default::default()
            };
            let r = ok(eig_smallest(a, 6, &o))?;
            for (l, e) in r.lambdas.iter().zip(&oracle) {
                worst_eig = worst_eig.max((l - e).abs());
            }
        }
    }
    ensure!(worst_eig <= 1e-8, "eigenvalues off by {worst_eig:e}");
    Ok(format!("solve rel {worst_solve:.2e}, eig abs {worst_eig:.2e}"))
}

fn cg_scaling() -> Check {
    let sizes = [16, 32, 64, 128];
    let opts = SolveOptions::default().with_atol(1e-10);
    let mut iters = Vec::new();
    let mut per_dof = Vec::new();
    for &side in &sizes {
        let p = poisson2d(side).unwrap();
        let csr = p.matrix.to_csr();
        let (_, rep) = ok(cg_solve(&csr, &p.rhs, &opts))?;
        ensure!(rep.converged, "CG did not converge at N = {side}");
        iters.push(rep.iterations);
        per_dof.push(live_bytes(&csr, Backend::Cg, opts.preconditioner) as f64 / p.dof() as f64);
    }
    let ratios: Vec<f64> = iters.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    ensure!(ratios.iter().all(|r| (1.5..=3.0).contains(r)), "iteration ratios {ratios:?}");
    let mean = per_dof.iter().sum::<f64>() / per_dof.len() as f64;
    let spread = per_dof.iter().map(|b| (b - mean).abs() / mean).fold(0.0, f64::max);
    ensure!(spread <= 0.10, "bytes/DOF {per_dof:?} spread {spread:.3}");
    Ok(format!(
        "iters {iters:?}, ratios [{}], bytes/DOF {:.1}..{:.1}",
        ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", "),
        per_dof.iter().cloned().fold(f64::INFINITY, f64::min),
        per_dof.iter().cloned().fold(0.0, f64::max)
    ))
}

/// Smallest root of a general 2×2 matrix with real spectrum.
fn smallest_root(m: &[f64]) -> f64 {
    let (a, b, c, d) = (m[0], m[1], m[2], m[3]);
    0.5 * (a + d - ((a - d).powi(2) + 4.0 * b * c).sqrt())
}

fn two_by_two_gradient() -> Check {
    let a = ok(SparseCoo::new(vec![0, 0, 1, 1], vec![0, 1, 0, 1], vec![2.0, 1.0, 1.0, 2.0], (2, 2)))?;
    let res = ok(eig_smallest(&a, 1, &EigOptions::default()))?;
    ensure!((res.lambdas[0] - 1.0).abs() < 1e-12, "lambda {}", res.lambdas[0]);
    let g = ok(eig_backward(&res, &a, &[1.0]))?;
    let expected = [0.5, -0.5, -0.5, 0.5];
    let eps = 1e-5;
    for idx in 0..4 {
        ensure!((g[idx] - expected[idx]).abs() <= 1e-6, "gradient {g:?}");
        let mut plus = a.vals().to_vec();
        let mut minus = plus.clone();
        plus[idx] += eps;
        minus[idx] -= eps;
        let fd = (smallest_root(&plus) - smallest_root(&minus)) / (2.0 * eps);
        ensure!((fd - g[idx]).abs() <= 1e-6, "entry {idx}: fd {fd} vs {}", g[idx]);
    }
    Ok(format!("gradient {g:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("gradcheck defaults below 1e-5 (linear, eigen, nonlinear)", gradcheck_defaults),
        ("one backward linear solve, none for eigenvalues", backward_solve_counts),
        ("contexts store O(n + nnz) independent of iterations", context_sizes),
        ("distributed CG matches serial CG", distributed_matches_serial),
        ("communication per distributed CG iteration", communication_counts),
        ("iterative and eigen results match dense oracles", iterative_and_eigen_vs_dense),
        ("CG iteration growth and constant bytes per DOF", cg_scaling),
        ("2x2 smallest-eigenvalue gradient", two_by_two_gradient),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {}  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}  {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
