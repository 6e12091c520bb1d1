use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsla_core::{poisson2d, read_matrix_market, SparseCoo};

/// Input named on the command line does not exist. `main` maps this to
/// exit code 2.
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl std::fmt::Display for MissingInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "input file not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Poisson(usize),
    Mtx(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rhs {
    #[default]
    Ones,
    /// `b = A x*` for a seeded random `x*`, so the error is known exactly.
    Manufactured,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub matrix: SparseCoo,
    pub rhs: Vec<f64>,
    /// Grid coordinates when generated; `None` for files.
    pub coords: Option<Vec<[f64; 2]>>,
    pub exact: Option<Vec<f64>>,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn load(source: &ProblemSource, rhs: Rhs, seed: u64) -> anyhow::Result<Problem> {
    let (name, matrix, coords) = match source {
        ProblemSource::Poisson(n) => {
            let p = poisson2d(*n)?;
            (format!("poisson{n}"), p.matrix, Some(p.coords))
        }
        ProblemSource::Mtx(path) => {
            let matrix = load_mtx(path)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "mtx".into());
            (name, matrix, None)
        }
    };
    if !matrix.is_square() {
        anyhow::bail!("{name}: matrix is {}x{}, need square", matrix.nrows(), matrix.ncols());
    }
    let n = matrix.nrows();
    let (rhs, exact) = match rhs {
        Rhs::Ones => (vec![1.0; n], None),
        Rhs::Manufactured => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (matrix.to_csr().spmv(&x)?, Some(x))
        }
    };
    Ok(Problem {
        name,
        matrix,
        rhs,
        coords,
        exact,
    })
}

fn load_mtx(path: &Path) -> anyhow::Result<SparseCoo> {
    if !path.exists() {
        return Err(MissingInput(path.to_path_buf()).into());
    }
    read_matrix_market(path).with_context(|| format!("reading {}", path.display()))
}

/// Dense crossover from `SPARSLA_DENSE_THRESHOLD`, if set.
pub fn dense_threshold_override() -> anyhow::Result<Option<usize>> {
    match std::env::var("SPARSLA_DENSE_THRESHOLD") {
        Ok(v) => Ok(Some(
            v.trim()
                .parse()
                .with_context(|| format!("SPARSLA_DENSE_THRESHOLD={v:?} is not a count"))?,
        )),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e.into()),
    }
}
