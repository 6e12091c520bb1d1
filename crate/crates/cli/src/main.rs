use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsla_cli::commands::{self, backend_label};
use sparsla_cli::gradcheck::{self, GradcheckConfig};
use sparsla_cli::record::{write_csv, write_records, BenchRecord, Status};
use sparsla_cli::{
    BenchConfig, DistbenchConfig, EigConfig, MissingInput, Partitioner, ProblemSource, Rhs,
    SolveConfig,
};
use sparsla_core::{BackendChoice, EigOptions, Preconditioner};

#[derive(Parser)]
#[command(name = "sparsla", version, about = "Sparse solvers, adjoint gradients and distributed CG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve A x = b once and print a CSV row.
    Solve(SolveArgs),
    /// Sweep Poisson sizes over backends.
    Bench(BenchArgs),
    /// Compare adjoint gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Smallest eigenpairs of a symmetric matrix.
    Eig(EigArgs),
    /// Distributed CG with in-process ranks.
    Distbench(DistbenchArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Poisson problem on an N x N interior grid.
    #[arg(long, value_name = "N")]
    poisson: Option<usize>,
    /// Matrix Market coordinate file.
    #[arg(long, value_name = "PATH")]
    mtx: Option<PathBuf>,
}

impl Source {
    fn resolve(&self) -> ProblemSource {
        match (&self.poisson, &self.mtx) {
            (Some(n), _) => ProblemSource::Poisson(*n),
            (None, Some(p)) => ProblemSource::Mtx(p.clone()),
            (None, None) => unreachable!("clap enforces one source"),
        }
    }
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long, default_value_t = 1e-10)]
    atol: f64,
    #[arg(long, default_value_t = 0.0)]
    rtol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = PrecondArg::Jacobi)]
    preconditioner: PrecondArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Right-hand side `A x*` for a seeded random `x*` instead of ones.
    #[arg(long)]
    manufactured: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long, value_enum, default_value_t = BackendArg::Auto)]
    backend: BackendArg,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the solution, one value per line.
    #[arg(long)]
    x_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid sides, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
    sizes: Vec<usize>,
    /// Backends, comma separated.
    #[arg(long = "backend", value_enum, value_delimiter = ',', default_values_t = [BackendArg::Cg, BackendArg::DenseLu])]
    backends: Vec<BackendArg>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameters checked per parameter vector.
    #[arg(long, default_value_t = 40)]
    samples: usize,
    /// Linear experiment grid as NXxNY.
    #[arg(long, default_value = "40x25", value_parser = parse_grid)]
    linear_grid: (usize, usize),
    /// Eigen experiment grid as NXxNY.
    #[arg(long, default_value = "64x16", value_parser = parse_grid)]
    eigen_grid: (usize, usize),
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Grid side of the nonlinear experiment.
    #[arg(long, default_value_t = 16)]
    nonlinear_grid: usize,
    /// Right-hand-side scale of the nonlinear experiment.
    #[arg(long, default_value_t = 0.1)]
    nonlinear_scale: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EigArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistbenchArgs {
    /// Grid side N of the Poisson problem.
    #[arg(long, default_value_t = 64)]
    poisson: usize,
    #[arg(long, default_value_t = 4)]
    ranks: usize,
    #[arg(long, value_enum, default_value_t = PartitionerArg::Contiguous)]
    partitioner: PartitionerArg,
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Auto,
    Cg,
    Bicgstab,
    #[value(name = "dense_lu", alias = "dense-lu")]
    DenseLu,
}

impl std::fmt::Display for BackendArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(backend_label(self.choice()))
    }
}

impl BackendArg {
    fn choice(self) -> BackendChoice {
        match self {
            BackendArg::Auto => BackendChoice::Auto,
            BackendArg::Cg => BackendChoice::Cg,
            BackendArg::Bicgstab => BackendChoice::Bicgstab,
            BackendArg::DenseLu => BackendChoice::DenseLu,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrecondArg {
    None,
    Jacobi,
}

impl std::fmt::Display for PrecondArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrecondArg::None => "none",
            PrecondArg::Jacobi => "jacobi",
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PartitionerArg {
    Contiguous,
    Rcb,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NXxNY, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

impl SolverFlags {
    fn options(&self) -> anyhow::Result<sparsla_core::SolveOptions> {
        let mut opts = commands::solve_options_from_env()?;
        opts.atol = self.atol;
        opts.rtol = self.rtol;
        opts.max_iter = self.max_iter;
        opts.preconditioner = match self.preconditioner {
            PrecondArg::None => Preconditioner::None,
            PrecondArg::Jacobi => Preconditioner::Jacobi,
        };
        Ok(opts)
    }

    fn rhs(&self) -> Rhs {
        if self.manufactured {
            Rhs::Manufactured
        } else {
            Rhs::Ones
        }
    }
}

fn emit(records: &[BenchRecord], out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => write_csv(records, path),
        None => write_records(records, std::io::stdout().lock()),
    }
}

/// Exit status: 0 success, 1 failure (non-convergence, failed check).
fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = SolveConfig {
                source: args.source.resolve(),
                rhs: args.solver.rhs(),
                seed: args.solver.seed,
                opts: args.solver.options()?.with_backend(args.backend.choice()),
            };
            let outcome = sparsla_cli::solve(&cfg)?;
            emit(std::slice::from_ref(&outcome.record), args.out.as_ref())?;
            if let Some(path) = &args.x_out {
                let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
                for v in &outcome.x {
                    writeln!(f, "{v:e}")?;
                }
            }
            if let Some(err) = outcome.exact_error {
                eprintln!("max |x - x*| = {err:e}");
            }
            Ok(u8::from(outcome.record.status != Status::Ok))
        }
        Command::Bench(args) => {
            let cfg = BenchConfig {
                sizes: args.sizes,
                backends: args.backends.iter().map(|b| b.choice()).collect(),
                repeats: args.repeats,
                rhs: args.solver.rhs(),
                seed: args.solver.seed,
                opts: args.solver.options()?,
            };
            let records = sparsla_cli::bench(&cfg)?;
            emit(&records, args.out.as_ref())?;
            Ok(0)
        }
        Command::Gradcheck(args) => {
            if !(args.eps > 0.0) {
                bail!("--eps must be positive");
            }
            let cfg = GradcheckConfig {
                linear_grid: args.linear_grid,
                eigen_grid: args.eigen_grid,
                k: args.k,
                nonlinear_grid: args.nonlinear_grid,
                nonlinear_scale: args.nonlinear_scale,
                eps: args.eps,
                samples: args.samples,
                seed: args.seed,
            };
            let rows = gradcheck::run_all(&cfg)?;
            print!("{}", gradcheck::format_table(&rows));
            if let Some(path) = &args.out {
                gradcheck::write_rows(&rows, path)?;
            }
            Ok(u8::from(!rows.iter().all(|r| r.passed())))
        }
        Command::Eig(args) => {
            let mut opts = EigOptions {
                tol: args.tol,
                max_iter: args.max_iter,
                seed: args.seed,
                ..Default::default()
            };
            if let Some(t) = sparsla_cli::problem::dense_threshold_override()? {
                opts.dense_threshold = t;
            }
            let outcome = sparsla_cli::eig(&EigConfig {
                source: args.source.resolve(),
                k: args.k,
                opts,
            })?;
            for (m, l) in outcome.result.lambdas.iter().enumerate() {
                eprintln!("lambda[{m}] = {l:.15e}");
            }
            emit(std::slice::from_ref(&outcome.record), args.out.as_ref())?;
            Ok(u8::from(outcome.record.status != Status::Ok))
        }
        Command::Distbench(args) => {
            let parallelism = std::thread::available_parallelism().map_or(1, |p| p.get());
            if args.ranks > parallelism {
                eprintln!(
                    "warning: {} ranks on {parallelism} hardware threads; ranks will time-share",
                    args.ranks
                );
            }
            let outcome = sparsla_cli::distbench(&DistbenchConfig {
                grid: args.poisson,
                ranks: args.ranks,
                partitioner: match args.partitioner {
                    PartitionerArg::Contiguous => Partitioner::Contiguous,
                    PartitionerArg::Rcb => Partitioner::Rcb,
                },
                atol: args.atol,
                max_iter: args.max_iter,
                repeats: args.repeats,
            })?;
            for (rank, (halo, log)) in outcome.halo_sizes.iter().zip(&outcome.logs).enumerate() {
                eprintln!(
                    "rank {rank}: halo {halo}, messages {}, halo exchanges {}, all-reduces {}",
                    log.messages_sent, log.halo_exchanges, log.all_reduces
                );
            }
            emit(std::slice::from_ref(&outcome.record), args.out.as_ref())?;
            Ok(u8::from(outcome.record.status != Status::Ok))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<MissingInput>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
