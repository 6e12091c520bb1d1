//! Sparse matrix storage: canonical COO, CSR kernels, dense conversion and
//! Matrix Market I/O.

mod coo;
mod csr;
mod dense;
pub mod mmio;

pub use coo::SparseCoo;
pub use csr::CsrMatrix;
pub use dense::DenseMatrix;
pub use mmio::{read_matrix_market, write_matrix_market};

/// Largest number of entries `to_dense` will allocate (4096 x 4096).
pub const DEFAULT_DENSE_CAP: usize = 4096 * 4096;
