use crate::error::{Error, Result};
use crate::sparse::SparseCoo;

/// Compressed sparse row matrix; the form every SpMV kernel runs on.
///
/// Built from a canonical [`SparseCoo`], so stored entries keep the same
/// order: entry `k` of the CSR arrays is entry `k` of the source COO.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    shape: (usize, usize),
}

impl CsrMatrix {
    pub fn from_coo(coo: &SparseCoo) -> Self {
        let (nrows, _) = coo.shape();
        let mut row_ptr = vec![0usize; nrows + 1];
        for &r in coo.rows() {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            row_ptr,
            col_idx: coo.cols().to_vec(),
            vals: coo.vals().to_vec(),
            shape: coo.shape(),
        }
    }

    pub fn to_coo(&self) -> SparseCoo {
        let mut rows = Vec::with_capacity(self.nnz());
        for i in 0..self.shape.0 {
            rows.extend(std::iter::repeat_n(
                i,
                self.row_ptr[i + 1] - self.row_ptr[i],
            ));
        }
        SparseCoo::from_canonical_parts(rows, self.col_idx.clone(), self.vals.clone(), self.shape)
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
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

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }

    /// `y = A x`, each row accumulated left to right in column order.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.shape.0];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.shape.1, x.len())?;
        check_len(self.shape.0, y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `Aᵀ y` without materialising the transpose.
    pub fn spmv_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.shape.0, y.len())?;
        let mut out = vec![0.0; self.shape.1];
        for (i, &yi) in y.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k]] += self.vals[k] * yi;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let (nrows, ncols) = self.shape;
        let mut row_ptr = vec![0usize; ncols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for j in 0..ncols {
            row_ptr[j + 1] += row_ptr[j];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        // Rows visited in ascending order, so columns of the transpose come out sorted.
        for i in 0..nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                col_idx[dst] = i;
                vals[dst] = self.vals[k];
                next[c] += 1;
            }
        }
        CsrMatrix {
            row_ptr,
            col_idx,
            vals,
            shape: (ncols, nrows),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.shape.0.min(self.shape.1);
        let mut d = vec![0.0; n];
        for (i, di) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            if let Ok(k) = cols.binary_search(&i) {
                *di = vals[k];
            }
        }
        d
    }

    /// Bytes held by the three CSR arrays.
    pub fn storage_bytes(&self) -> usize {
        std::mem::size_of::<usize>() * (self.row_ptr.len() + self.col_idx.len())
            + std::mem::size_of::<f64>() * self.vals.len()
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
