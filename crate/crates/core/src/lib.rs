//! Differentiable sparse linear algebra.
//!
//! * [`sparse`]: canonical COO storage, CSR kernels, Matrix Market I/O.
//! * [`solvers`]: CG, BiCGStab, dense LU and automatic backend selection.
//! * [`adjoint`]: reverse-mode gradients of linear solves and a
//!   finite-difference gradient checker.
//! * [`eigen`]: smallest eigenpairs (LOBPCG) and eigenvalue gradients.
//! * [`nonlinear`]: Newton with line search, Picard, Anderson, and the
//!   adjoint of a Newton solve.
//! * [`distributed`]: domain decomposition, halo exchange and distributed CG
//!   over a message transport, with an in-process backing.

pub mod adjoint;
pub mod distributed;
pub mod eigen;
pub mod error;
pub mod nonlinear;
pub mod problems;
pub mod solvers;
pub mod sparse;
pub mod vecops;

pub use adjoint::{gradcheck, solve_backward, solve_forward, AdjointContext, GradientBundle};
pub use eigen::{eig_backward, eig_smallest, EigOptions, EigenResult};
pub use error::{Error, Result};
pub use nonlinear::{
    anderson_solve, newton_backward, newton_solve, picard_solve, NewtonContext, NewtonOptions,
    NonlinearReport, ResidualSystem,
};
pub use problems::{poisson2d, poisson2d_rect, DiffusionSystem, PoissonProblem};
pub use solvers::{
    auto_solve, bicgstab_solve, cg_solve, dense_lu_solve, jacobi_build, Backend, BackendChoice,
    Preconditioner, SolveOptions, SolveReport,
};
pub use sparse::{read_matrix_market, write_matrix_market, CsrMatrix, DenseMatrix, SparseCoo};
