//! Adjoint gradients against central finite differences for the three
//! differentiable solves: a linear system, the smallest eigenvalues and a
//! nonlinear diffusion problem.

use std::time::Instant;

use anyhow::Context;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sparsla_core::adjoint::gradcheck_indices;
use sparsla_core::solvers::{count_linear_solves, DenseLu};
use sparsla_core::vecops::dot;
use sparsla_core::{
    eig_backward, eig_smallest, newton_backward, newton_solve, poisson2d_rect, solve_backward,
    solve_forward, DiffusionSystem, EigOptions, NewtonOptions, SolveOptions,
};

/// Largest acceptable relative error per experiment.
pub const THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub linear_grid: (usize, usize),
    pub eigen_grid: (usize, usize),
    pub k: usize,
    pub nonlinear_grid: usize,
    /// Scale of `b = scale · ones` in the diffusion problem; 0.1 on a 16×16
    /// grid takes five Newton iterations from `u = 0`.
    pub nonlinear_scale: f64,
    pub eps: f64,
    /// Parameters checked per parameter vector.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            linear_grid: (40, 25),
            eigen_grid: (64, 16),
            k: 6,
            nonlinear_grid: 16,
            nonlinear_scale: 0.1,
            eps: 1e-5,
            samples: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckRow {
    pub experiment: String,
    pub n: usize,
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub forward_solves: u64,
    pub backward_solves: u64,
    /// Newton iterations of the forward solve; empty for other rows.
    pub newton_iterations: Option<usize>,
    pub seconds: f64,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < THRESHOLD
    }
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn pick(len: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx = sample(rng, len, count.min(len)).into_vec();
    idx.sort_unstable();
    idx
}

/// `L = wᵀ A⁻¹ b` with `w` random. The FD side solves with one dense LU of
/// the unperturbed matrix, refined against each perturbed matrix.
pub fn linear(cfg: &GradcheckConfig) -> anyhow::Result<GradcheckRow> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = poisson2d_rect(cfg.linear_grid.0, cfg.linear_grid.1)?.matrix;
    let n = a.nrows();
    let b = random_vec(n, &mut rng);
    let w = random_vec(n, &mut rng);
    let opts = SolveOptions::default().with_atol(1e-12);

    let (fwd, forward_solves) = count_linear_solves(|| solve_forward(&a, &b, &opts));
    let (_, ctx, _) = fwd?;
    let (grads, backward_solves) = count_linear_solves(|| solve_backward(&ctx, &w, &opts));
    let grads = grads?;

    let lu = DenseLu::factor(&a.to_dense()?)?;
    let csr = a.to_csr();
    let rb = gradcheck_indices(
        |bp: &[f64]| lu.solve_refined(&csr, bp, 3).map(|x| dot(&w, &x)),
        &b,
        &grads.grad_b,
        cfg.eps,
        &pick(n, cfg.samples, &mut rng),
    )?;
    let rv = gradcheck_indices(
        |vals: &[f64]| {
            let perturbed = a.with_values(vals.to_vec())?.to_csr();
            lu.solve_refined(&perturbed, &b, 8).map(|x| dot(&w, &x))
        },
        a.vals(),
        &grads.grad_vals,
        cfg.eps,
        &pick(a.nnz(), cfg.samples, &mut rng),
    )?;
    Ok(GradcheckRow {
        experiment: "linear".into(),
        n,
        params_checked: rb.entries.len() + rv.entries.len(),
        max_rel_error: rb.max_rel_error.max(rv.max_rel_error),
        forward_solves,
        backward_solves,
        newton_iterations: None,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// `L = Σ w_m λ_m` over the `k` smallest eigenvalues. A stored entry
/// `(i, j)` off the diagonal is perturbed together with `(j, i)`, half the
/// step each, so every perturbed matrix stays symmetric; the directional
/// derivative is then the entry gradient itself.
pub fn eigen(cfg: &GradcheckConfig) -> anyhow::Result<GradcheckRow> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let a = poisson2d_rect(cfg.eigen_grid.0, cfg.eigen_grid.1)?.matrix;
    let n = a.nrows();
    let weights = random_vec(cfg.k, &mut rng);
    let opts = EigOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let (fwd, forward_solves) = count_linear_solves(|| eig_smallest(&a, cfg.k, &opts));
    let res = fwd.context("forward eigensolve")?;
    let (grad, backward_solves) = count_linear_solves(|| eig_backward(&res, &a, &weights));
    let grad = grad?;

    let warm = EigOptions {
        initial: Some(res.vectors.clone()),
        ..opts
    };
    let loss = |vals: &[f64]| -> sparsla_core::Result<f64> {
        let r = eig_smallest(&a.with_values(vals.to_vec())?, cfg.k, &warm)?;
        Ok(dot(&weights, &r.lambdas))
    };
    let mut worst = 0.0f64;
    let indices = pick(a.nnz(), cfg.samples, &mut rng);
    for &idx in &indices {
        let (i, j) = (a.rows()[idx], a.cols()[idx]);
        let partner = a.find(j, i).context("matrix is not structurally symmetric")?;
        let shifted = |h: f64| {
            let mut v = a.vals().to_vec();
            if partner == idx {
                v[idx] += h;
            } else {
                v[idx] += 0.5 * h;
                v[partner] += 0.5 * h;
            }
            v
        };
        let fd = (loss(&shifted(cfg.eps))? - loss(&shifted(-cfg.eps))?) / (2.0 * cfg.eps);
        worst = worst.max(sparsla_core::adjoint::relative_error(fd, grad[idx]));
    }
    Ok(GradcheckRow {
        experiment: "eigen".into(),
        n,
        params_checked: indices.len(),
        max_rel_error: worst,
        forward_solves,
        backward_solves,
        newton_iterations: None,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// `L = gᵀ u*(θ)` for `A u + θ ∘ u³ = b`. Each FD side re-solves with a
/// tight Newton tolerance from the unperturbed solution.
pub fn nonlinear(cfg: &GradcheckConfig) -> anyhow::Result<GradcheckRow> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let sys = DiffusionSystem::poisson(cfg.nonlinear_grid, cfg.nonlinear_scale)?;
    let n = sys.n();
    let theta = vec![1.0; n];
    let g = random_vec(n, &mut rng);

    let (u, ctx, report) = newton_solve(&sys, &vec![0.0; n], &theta, &NewtonOptions::default())?;
    if !report.converged {
        anyhow::bail!("forward Newton solve did not converge: residual {:e}", report.final_residual_norm);
    }
    let adjoint_opts = SolveOptions::default().with_atol(1e-13);
    let (grad, backward_solves) =
        count_linear_solves(|| newton_backward(&ctx, &sys, &g, &adjoint_opts));
    let grad = grad?;

    let tight = NewtonOptions {
        tol: 1e-13,
        ..Default::default()
    };
    let rep = gradcheck_indices(
        |t: &[f64]| newton_solve(&sys, &u, t, &tight).map(|(u, _, _)| dot(&g, &u)),
        &theta,
        &grad.grad_theta,
        cfg.eps,
        &pick(n, cfg.samples, &mut rng),
    )?;
    Ok(GradcheckRow {
        experiment: "nonlinear".into(),
        n,
        params_checked: rep.entries.len(),
        max_rel_error: rep.max_rel_error,
        forward_solves: report.linear_solves_forward,
        backward_solves,
        newton_iterations: Some(report.newton_iterations),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(cfg: &GradcheckConfig) -> anyhow::Result<Vec<GradcheckRow>> {
    Ok(vec![linear(cfg)?, eigen(cfg)?, nonlinear(cfg)?])
}

pub fn format_table(rows: &[GradcheckRow]) -> String {
    let mut s = format!(
        "{:<10} {:>6} {:>7} {:>14} {:>8} {:>9} {:>7} {:>8}  {}\n",
        "experiment", "n", "params", "max_rel_error", "forward", "backward", "newton", "seconds", "result"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:>6} {:>7} {:>14.3e} {:>8} {:>9} {:>7} {:>8.2}  {}\n",
            r.experiment,
            r.n,
            r.params_checked,
            r.max_rel_error,
            r.forward_solves,
            r.backward_solves,
            r.newton_iterations.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            r.seconds,
            if r.passed() { "ok" } else { "FAIL" }
        ));
    }
    s
}

pub fn write_rows(rows: &[GradcheckRow], path: &std::path::Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
