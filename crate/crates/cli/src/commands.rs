use std::time::Instant;

use anyhow::{bail, Context};
use sparsla_core::distributed::{
    build_local, dist_cg, gather_solution, partition_contiguous, partition_rcb, run_ranks,
    scatter_owned, CommLog, PartitionPlan, Transport,
};
use sparsla_core::eigen::EigMethod;
use sparsla_core::solvers::{live_bytes, residual_norm};
use sparsla_core::vecops::{max_abs_diff, norm2};
use sparsla_core::{
    cg_solve, eig_smallest, poisson2d, solvers, BackendChoice, EigOptions, EigenResult, Error,
    Preconditioner, SolveOptions, SolveReport,
};

use crate::problem::{self, Problem, ProblemSource, Rhs};
use crate::record::{median, BenchRecord, Status};

pub fn backend_label(b: BackendChoice) -> &'static str {
    match b {
        BackendChoice::Auto => "auto",
        BackendChoice::Cg => "cg",
        BackendChoice::Bicgstab => "bicgstab",
        BackendChoice::DenseLu => "dense_lu",
    }
}

pub fn preconditioner_label(p: Preconditioner) -> &'static str {
    match p {
        Preconditioner::None => "none",
        Preconditioner::Jacobi => "jacobi",
    }
}

/// Base solver options with the environment's dense crossover applied.
pub fn solve_options_from_env() -> anyhow::Result<SolveOptions> {
    let mut opts = SolveOptions::default();
    if let Some(t) = problem::dense_threshold_override()? {
        opts.dense_threshold = t;
    }
    Ok(opts)
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub source: ProblemSource,
    pub rhs: Rhs,
    pub seed: u64,
    pub opts: SolveOptions,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub record: BenchRecord,
    pub x: Vec<f64>,
    pub report: SolveReport,
    /// ∞-norm error against the manufactured solution, when there is one.
    pub exact_error: Option<f64>,
}

/// Times one solve and fills a record whose residual columns are
/// recomputed from `x`.
fn timed_solve(p: &Problem, opts: &SolveOptions, command: &str) -> anyhow::Result<(BenchRecord, Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let (x, report) = match solvers::solve(&p.matrix, &p.rhs, opts) {
        Ok(done) => done,
        Err(Error::NotConverged(report)) => {
            // Dense LU reports failure this way; keep its iterate-free report.
            let mut rec = BenchRecord::new(command, &p.name, p.n(), p.matrix.nnz(), report.backend.name());
            rec.preconditioner = preconditioner_label(opts.preconditioner).into();
            rec.status = Status::Failed;
            rec.note = report.summary();
            return Ok((rec, Vec::new(), *report));
        }
        Err(e) => return Err(e.into()),
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let csr = p.matrix.to_csr();
    let residual = residual_norm(&csr, &x, &p.rhs)?;
    let b_norm = norm2(&p.rhs);
    let mut rec = BenchRecord::new(command, &p.name, p.n(), p.matrix.nnz(), report.backend.name());
    rec.preconditioner = preconditioner_label(opts.preconditioner).into();
    rec.iterations = report.iterations;
    rec.residual_abs = residual;
    rec.residual_rel = if b_norm > 0.0 { residual / b_norm } else { residual };
    rec.converged = report.converged;
    rec.time_ms = elapsed;
    rec.median_time_ms = elapsed;
    rec.live_bytes = live_bytes(&csr, report.backend, opts.preconditioner);
    rec.bytes_per_dof = rec.live_bytes as f64 / p.n() as f64;
    if !report.converged {
        rec.status = Status::Failed;
        rec.note = report.summary();
    }
    Ok((rec, x, report))
}

pub fn solve(cfg: &SolveConfig) -> anyhow::Result<SolveOutcome> {
    let p = problem::load(&cfg.source, cfg.rhs, cfg.seed)?;
    let (record, x, report) = timed_solve(&p, &cfg.opts, "solve")?;
    let exact_error = match (&p.exact, x.is_empty()) {
        (Some(e), false) => Some(max_abs_diff(&x, e)),
        _ => None,
    };
    Ok(SolveOutcome {
        record,
        x,
        report,
        exact_error,
    })
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub backends: Vec<BackendChoice>,
    pub repeats: usize,
    pub rhs: Rhs,
    pub seed: u64,
    pub opts: SolveOptions,
}

/// One record per (size, backend, repeat). Dense LU above the dense
/// threshold yields a single skipped row; a failing cell yields a failed
/// row and the sweep moves on.
pub fn bench(cfg: &BenchConfig) -> anyhow::Result<Vec<BenchRecord>> {
    if cfg.repeats == 0 {
        bail!("repeats must be at least 1");
    }
    let mut out = Vec::new();
    for &size in &cfg.sizes {
        let p = match problem::load(&ProblemSource::Poisson(size), cfg.rhs, cfg.seed) {
            Ok(p) => p,
            Err(e) => {
                let mut rec = BenchRecord::new("bench", &format!("poisson{size}"), 0, 0, "");
                rec.status = Status::Failed;
                rec.note = format!("{e:#}");
                out.push(rec);
                continue;
            }
        };
        for &backend in &cfg.backends {
            let label = backend_label(backend);
            if backend == BackendChoice::DenseLu && p.n() > cfg.opts.dense_threshold {
                let mut rec = BenchRecord::new("bench", &p.name, p.n(), p.matrix.nnz(), label);
                rec.status = Status::Skipped;
                rec.note = format!("n = {} above dense threshold {}", p.n(), cfg.opts.dense_threshold);
                out.push(rec);
                continue;
            }
            let opts = cfg.opts.clone().with_backend(backend);
            let first = out.len();
            for repeat in 0..cfg.repeats {
                let mut rec = match timed_solve(&p, &opts, "bench") {
                    Ok((rec, _, _)) => rec,
                    Err(e) => {
                        let mut rec = BenchRecord::new("bench", &p.name, p.n(), p.matrix.nnz(), label);
                        rec.status = Status::Failed;
                        rec.note = format!("{e:#}");
                        rec
                    }
                };
                rec.repeat = repeat;
                out.push(rec);
            }
            let times: Vec<f64> = out[first..]
                .iter()
                .filter(|r| r.status == Status::Ok)
                .map(|r| r.time_ms)
                .collect();
            let med = if times.is_empty() { f64::NAN } else { median(&times) };
            for rec in &mut out[first..] {
                rec.median_time_ms = med;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EigConfig {
    pub source: ProblemSource,
    pub k: usize,
    pub opts: EigOptions,
}

#[derive(Debug, Clone)]
pub struct EigOutcome {
    pub record: BenchRecord,
    pub result: EigenResult,
}

pub fn eig(cfg: &EigConfig) -> anyhow::Result<EigOutcome> {
    let p = problem::load(&cfg.source, Rhs::Ones, 0)?;
    let start = Instant::now();
    let (result, ok) = match eig_smallest(&p.matrix, cfg.k, &cfg.opts) {
        Ok(r) => (r, true),
        Err(Error::EigenNotConverged(r)) => (*r, false),
        Err(e) => return Err(e.into()),
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let method = match result.method {
        EigMethod::Dense => "dense",
        _ => "lobpcg",
    };
    let mut rec = BenchRecord::new("eig", &p.name, p.n(), p.matrix.nnz(), method);
    rec.iterations = result.iterations;
    rec.residual_abs = result.residual_norms.iter().fold(0.0, |m: f64, &r| m.max(r));
    rec.residual_rel = rec.residual_abs / result.lambdas.iter().fold(0.0, |m: f64, l| m.max(l.abs())).max(f64::MIN_POSITIVE);
    rec.converged = ok;
    rec.time_ms = elapsed;
    rec.median_time_ms = elapsed;
    rec.note = format!("k={}", cfg.k);
    if !ok {
        rec.status = Status::Failed;
    }
    Ok(EigOutcome { record: rec, result })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partitioner {
    Contiguous,
    Rcb,
}

impl Partitioner {
    pub fn label(self) -> &'static str {
        match self {
            Partitioner::Contiguous => "contiguous",
            Partitioner::Rcb => "rcb",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistbenchConfig {
    /// Grid side of the Poisson problem.
    pub grid: usize,
    pub ranks: usize,
    pub partitioner: Partitioner,
    pub atol: f64,
    pub max_iter: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone)]
pub struct DistbenchOutcome {
    pub record: BenchRecord,
    pub halo_sizes: Vec<usize>,
    pub logs: Vec<CommLog>,
    /// ∞-norm distance of the gathered solution from serial CG.
    pub serial_diff: f64,
}

/// Gathered solutions further than this from serial CG fail the run.
pub const SERIAL_MATCH_TOL: f64 = 1e-10;

/// Distributed CG on a Poisson grid. The gathered solution is checked
/// against serial CG before anything is reported.
pub fn distbench(cfg: &DistbenchConfig) -> anyhow::Result<DistbenchOutcome> {
    if cfg.ranks == 0 || cfg.repeats == 0 {
        bail!("ranks and repeats must be at least 1");
    }
    let p = poisson2d(cfg.grid)?;
    let n = p.dof();
    let part_of = match cfg.partitioner {
        Partitioner::Contiguous => partition_contiguous(n, cfg.ranks)?,
        Partitioner::Rcb => partition_rcb(&p.coords, cfg.ranks)?,
    };
    let plan = PartitionPlan::new(&p.matrix, part_of, cfg.ranks)?;

    let serial_opts = SolveOptions::default()
        .with_preconditioner(Preconditioner::None)
        .with_atol(cfg.atol)
        .with_max_iter(cfg.max_iter);
    let (serial, _) = cg_solve(&p.matrix.to_csr(), &p.rhs, &serial_opts)?;

    let mut times = Vec::with_capacity(cfg.repeats);
    let mut last = None;
    for _ in 0..cfg.repeats {
        let out = run_ranks(cfg.ranks, |t| -> sparsla_core::Result<_> {
            let local = build_local(&p.matrix, &plan, t.rank())?;
            let b = scatter_owned(&local, &p.rhs);
            let start = Instant::now();
            let (x, report) = dist_cg(&local, t, &b, cfg.atol, cfg.max_iter)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            let log = t.log();
            let gathered = gather_solution(t, &x, &plan)?;
            Ok((gathered, report, log, local.n_halo(), elapsed))
        });
        let mut ranks = Vec::with_capacity(out.len());
        for r in out {
            ranks.push(r.context("distributed CG failed")?);
        }
        times.push(ranks.iter().map(|r| r.4).fold(0.0, f64::max));
        last = Some(ranks);
    }
    let ranks = last.expect("at least one repeat");
    let x = ranks[0].0.clone().expect("rank 0 gathers");
    let report = &ranks[0].1;
    let serial_diff = max_abs_diff(&x, &serial);
    if !(serial_diff <= SERIAL_MATCH_TOL) {
        bail!(
            "distributed solution differs from serial CG by {serial_diff:e} (limit {SERIAL_MATCH_TOL:e})"
        );
    }

    let csr = p.matrix.to_csr();
    let residual = residual_norm(&csr, &x, &p.rhs)?;
    let halo_sizes: Vec<usize> = ranks.iter().map(|r| r.3).collect();
    let logs: Vec<CommLog> = ranks.iter().map(|r| r.2).collect();
    let mut rec = BenchRecord::new("distbench", &format!("poisson{}", cfg.grid), n, p.matrix.nnz(), "dist_cg");
    rec.preconditioner = "none".into();
    rec.ranks = cfg.ranks;
    rec.partitioner = cfg.partitioner.label().into();
    rec.iterations = report.iterations;
    rec.residual_abs = residual;
    rec.residual_rel = residual / norm2(&p.rhs);
    rec.converged = report.converged;
    rec.time_ms = *times.last().expect("repeats >= 1");
    rec.median_time_ms = median(&times);
    rec.live_bytes = live_bytes(&csr, solvers::Backend::Cg, Preconditioner::None);
    rec.bytes_per_dof = rec.live_bytes as f64 / n as f64;
    rec.halo_sizes = halo_sizes.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(";");
    rec.messages = logs.iter().map(|l| l.messages_sent).sum();
    rec.note = format!("serial_diff={serial_diff:e}");
    if !report.converged {
        rec.status = Status::Failed;
    }
    Ok(DistbenchOutcome {
        record: rec,
        halo_sizes,
        logs,
        serial_diff,
    })
}
