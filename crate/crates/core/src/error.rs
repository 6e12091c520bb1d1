use std::path::PathBuf;

use thiserror::Error;

use crate::eigen::EigenResult;
use crate::solvers::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("index ({row}, {col}) out of bounds for shape {nrows}x{ncols}")]
    OutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("length mismatch: rows={rows}, cols={cols}, vals={vals}")]
    LengthMismatch {
        rows: usize,
        cols: usize,
        vals: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is {nrows}x{ncols}, a square matrix is required")]
    NotSquare { nrows: usize, ncols: usize },

    #[error("dense conversion of {entries} entries exceeds the cap of {cap}")]
    DenseCapExceeded { entries: usize, cap: usize },

    #[error("matrix market: line {line}: {msg}")]
    MatrixMarket { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix is singular to working precision (zero pivot at column {column})")]
    Singular { column: usize },

    #[error("linear solve did not converge: {}", .0.summary())]
    NotConverged(Box<SolveReport>),

    #[error("eigensolver did not converge for all requested pairs after {} iterations", .0.iterations)]
    EigenNotConverged(Box<EigenResult>),

    #[error("matrix is not symmetric: |A[{row},{col}] - A[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("eigenvalues {index} and {next} are not separated (gap {gap:e}); the eigenvalue gradient is undefined")]
    DegenerateEigenvalue { index: usize, next: usize, gap: f64 },

    #[error("Jacobian solve failed at Newton iteration {iteration}: {source}")]
    JacobianSolve {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line search failed at Newton iteration {iteration}: step fell below {alpha_min:e}")]
    LineSearchFailed { iteration: usize, alpha_min: f64 },

    #[error("loss evaluation failed at parameter {index}: {source}")]
    LossFailed {
        index: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("epoch mismatch from rank {src}: expected {expected}, received {received}")]
    EpochMismatch {
        src: usize,
        expected: u64,
        received: u64,
    },

    #[error("rank {rank} timed out after {secs:.1}s waiting on {what}")]
    Timeout {
        rank: usize,
        what: String,
        secs: f64,
    },
}
