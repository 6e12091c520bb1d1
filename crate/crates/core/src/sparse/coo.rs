use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, DenseMatrix, DEFAULT_DENSE_CAP};

/// Coordinate-format sparse matrix, always held in canonical form.
///
/// Canonical means entries sorted lexicographically by `(row, col)` with no
/// repeated coordinates. Duplicates passed to [`SparseCoo::new`] are summed.
/// Explicit zeros stay in the pattern: every stored entry is a differentiable
/// parameter, so the pattern must not change when values do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoo {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    shape: (usize, usize),
}

impl SparseCoo {
    pub fn new(
        rows: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
        shape: (usize, usize),
    ) -> Result<Self> {
        if rows.len() != cols.len() || rows.len() != vals.len() {
            return Err(Error::LengthMismatch {
                rows: rows.len(),
                cols: cols.len(),
                vals: vals.len(),
            });
        }
        let (nrows, ncols) = shape;
        for (&row, &col) in rows.iter().zip(&cols) {
            if row >= nrows || col >= ncols {
                return Err(Error::OutOfBounds {
                    row,
                    col,
                    nrows,
                    ncols,
                });
            }
        }

        let sorted = rows
            .windows(2)
            .zip(cols.windows(2))
            .all(|(r, c)| (r[0], c[0]) < (r[1], c[1]));
        if sorted {
            return Ok(Self {
                rows,
                cols,
                vals,
                shape,
            });
        }

        // Stable sort keeps duplicates in input order, so their sum is deterministic.
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&k| (rows[k], cols[k]));

        let mut out_rows = Vec::with_capacity(rows.len());
        let mut out_cols = Vec::with_capacity(rows.len());
        let mut out_vals: Vec<f64> = Vec::with_capacity(rows.len());
        for k in order {
            let (r, c, v) = (rows[k], cols[k], vals[k]);
            match (out_rows.last(), out_cols.last()) {
                (Some(&lr), Some(&lc)) if lr == r && lc == c => {
                    *out_vals.last_mut().unwrap() += v;
                }
                _ => {
                    out_rows.push(r);
                    out_cols.push(c);
                    out_vals.push(v);
                }
            }
        }
        Ok(Self {
            rows: out_rows,
            cols: out_cols,
            vals: out_vals,
            shape,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
            shape: (n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            rows: (0..n).collect(),
            cols: (0..n).collect(),
            vals: diag.to_vec(),
            shape: (n, n),
        }
    }

    /// Collects every entry of a dense matrix, zeros included.
    pub fn from_dense_full(dense: &DenseMatrix) -> Self {
        let (nrows, ncols) = dense.shape();
        let mut rows = Vec::with_capacity(nrows * ncols);
        let mut cols = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                rows.push(i);
                cols.push(j);
            }
        }
        Self {
            rows,
            cols,
            vals: dense.data().to_vec(),
            shape: (nrows, ncols),
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn nrows(&self) -> usize {
        self.shape.0
    }

    pub fn ncols(&self) -> usize {
        self.shape.1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_square(&self) -> bool {
        self.shape.0 == self.shape.1
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    /// Same pattern, new values. `vals` is aligned with the stored entries.
    pub fn with_values(&self, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != self.nnz() {
            return Err(Error::DimensionMismatch {
                expected: self.nnz(),
                got: vals.len(),
            });
        }
        Ok(Self {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            vals,
            shape: self.shape,
        })
    }

    /// Position of stored entry `(row, col)` in the value array.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.rows.partition_point(|&r| r < row);
        let end = self.rows.partition_point(|&r| r <= row);
        self.cols[start..end]
            .binary_search(&col)
            .ok()
            .map(|k| start + k)
    }

    pub fn transpose(&self) -> Self {
        Self::new(
            self.cols.clone(),
            self.rows.clone(),
            self.vals.clone(),
            (self.shape.1, self.shape.0),
        )
        .expect("transpose of a valid matrix is valid")
    }

    /// True when the stored pattern equals the pattern of the transpose.
    pub fn is_structurally_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let t = self.transpose();
        t.rows == self.rows && t.cols == self.cols
    }

    /// Pattern and values symmetric within `tol` (absolute). Returns the
    /// worst offending pair on failure.
    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                nrows: self.shape.0,
                ncols: self.shape.1,
            });
        }
        let mut worst: Option<(usize, usize, f64)> = None;
        for (r, c, v) in self.iter() {
            let mirror = self.find(c, r).map_or(0.0, |k| self.vals[k]);
            let diff = (v - mirror).abs();
            let missing = self.find(c, r).is_none();
            if (diff > tol || missing) && worst.is_none_or(|w| diff > w.2) {
                worst = Some((r, c, diff));
            }
        }
        match worst {
            None => Ok(()),
            Some((row, col, diff)) => Err(Error::NotSymmetric { row, col, diff }),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.check_symmetric(0.0).is_ok()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.shape.0.min(self.shape.1);
        let mut d = vec![0.0; n];
        for (r, c, v) in self.iter() {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_coo(self)
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        self.to_dense_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<DenseMatrix> {
        let (nrows, ncols) = self.shape;
        let entries = nrows.saturating_mul(ncols);
        if entries > cap {
            return Err(Error::DenseCapExceeded { entries, cap });
        }
        let mut dense = DenseMatrix::zeros(nrows, ncols);
        for (r, c, v) in self.iter() {
            dense[(r, c)] += v;
        }
        Ok(dense)
    }

    pub(crate) fn from_canonical_parts(
        rows: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
        shape: (usize, usize),
    ) -> Self {
        debug_assert!(rows.len() == cols.len() && cols.len() == vals.len());
        Self {
            rows,
            cols,
            vals,
            shape,
        }
    }
}
