//! Library side of the `sparsla` command line: problem loading, the
//! subcommands and CSV output. The binary only parses flags.

pub mod commands;
pub mod gradcheck;
pub mod problem;
pub mod record;

pub use commands::{
    bench, distbench, eig, solve, BenchConfig, DistbenchConfig, DistbenchOutcome, EigConfig,
    EigOutcome, Partitioner, SolveConfig, SolveOutcome,
};
pub use gradcheck::{GradcheckConfig, GradcheckRow};
pub use problem::{MissingInput, ProblemSource, Rhs};
pub use record::{read_csv, write_csv, BenchRecord, Status};
