//! Model problems.

use crate::error::{Error, Result};
use crate::nonlinear::ResidualSystem;
use crate::sparse::{CsrMatrix, SparseCoo};

/// 2D Poisson on an `nx × ny` interior grid, 5-point stencil.
///
/// Dirichlet boundary values are eliminated, so only interior unknowns
/// remain: diagonal 4, −1 to each in-grid neighbour. Node `(ix, iy)` has
/// index `iy * nx + ix` and coordinates `(ix, iy)`.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub nx: usize,
    pub ny: usize,
    pub matrix: SparseCoo,
    pub rhs: Vec<f64>,
    pub coords: Vec<[f64; 2]>,
}

impl PoissonProblem {
    pub fn dof(&self) -> usize {
        self.nx * self.ny
    }
}

/// Square `n × n` grid with `rhs = ones`.
pub fn poisson2d(n: usize) -> Result<PoissonProblem> {
    poisson2d_rect(n, n)
}

pub fn poisson2d_rect(nx: usize, ny: usize) -> Result<PoissonProblem> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!(
            "Poisson grid must be at least 2x2, got {nx}x{ny}"
        )));
    }
    let n = nx * ny;
    let mut rows = Vec::with_capacity(5 * n);
    let mut cols = Vec::with_capacity(5 * n);
    let mut vals = Vec::with_capacity(5 * n);
    let mut coords = Vec::with_capacity(n);
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            // Pushed in ascending column order, so the COO is already canonical.
            let mut push = |j: usize, v: f64| {
                rows.push(i);
                cols.push(j);
                vals.push(v);
            };
            if iy > 0 {
                push(i - nx, -1.0);
            }
            if ix > 0 {
                push(i - 1, -1.0);
            }
            push(i, 4.0);
            if ix + 1 < nx {
                push(i + 1, -1.0);
            }
            if iy + 1 < ny {
                push(i + nx, -1.0);
            }
            coords.push([ix as f64, iy as f64]);
        }
    }
    Ok(PoissonProblem {
        nx,
        ny,
        matrix: SparseCoo::new(rows, cols, vals, (n, n))?,
        rhs: vec![1.0; n],
        coords,
    })
}

/// Nonlinear diffusion `F(u, θ) = A u + θ ∘ u³ − b` with one parameter per
/// node. The Jacobian `A + diag(3 θ u²)` keeps the pattern of `A`.
#[derive(Debug, Clone)]
pub struct DiffusionSystem {
    matrix: SparseCoo,
    csr: CsrMatrix,
    rhs: Vec<f64>,
    /// Position of each diagonal entry in the stored values.
    diag_pos: Vec<usize>,
}

impl DiffusionSystem {
    /// `a` must be square with every diagonal entry stored.
    pub fn new(a: SparseCoo, rhs: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::NotSquare {
                nrows: n,
                ncols: a.ncols(),
            });
        }
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut diag_pos = vec![usize::MAX; n];
        for (k, (i, j, _)) in a.iter().enumerate() {
            if i == j {
                diag_pos[i] = k;
            }
        }
        if let Some(i) = diag_pos.iter().position(|&p| p == usize::MAX) {
            return Err(Error::InvalidArgument(format!("diagonal entry {i} not stored")));
        }
        Ok(Self {
            csr: a.to_csr(),
            matrix: a,
            rhs,
            diag_pos,
        })
    }

    /// Poisson on an `n × n` grid with `b = scale · ones`.
    pub fn poisson(n: usize, scale: f64) -> Result<Self> {
        let p = poisson2d(n)?;
        let rhs = p.rhs.iter().map(|v| scale * v).collect();
        Self::new(p.matrix, rhs)
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    pub fn matrix(&self) -> &SparseCoo {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }
}

impl ResidualSystem for DiffusionSystem {
    fn residual(&self, u: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut f = self.csr.spmv(u).expect("u has length n");
        for i in 0..f.len() {
            f[i] += theta[i] * u[i] * u[i] * u[i] - self.rhs[i];
        }
        f
    }

    fn jacobian(&self, u: &[f64], theta: &[f64]) -> SparseCoo {
        let mut vals = self.matrix.vals().to_vec();
        for (i, &k) in self.diag_pos.iter().enumerate() {
            vals[k] += 3.0 * theta[i] * u[i] * u[i];
        }
        self.matrix.with_values(vals).expect("same pattern")
    }

    fn vjp_theta(&self, u: &[f64], _theta: &[f64], lambda: &[f64]) -> Vec<f64> {
        lambda.iter().zip(u).map(|(l, x)| l * x * x * x).collect()
    }
}
