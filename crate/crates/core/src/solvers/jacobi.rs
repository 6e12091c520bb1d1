use crate::sparse::CsrMatrix;

/// Diagonal (Jacobi) preconditioner. Degenerate diagonal entries fall back
/// to 1.0 so the preconditioner is always defined.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &CsrMatrix) -> Self {
        let diag = a.diagonal();
        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let threshold = (f64::EPSILON * scale).max(f64::MIN_POSITIVE);
        let inv_diag = diag
            .iter()
            .map(|&d| if d.abs() > threshold { 1.0 / d } else { 1.0 })
            .collect();
        Self { inv_diag }
    }

    pub fn inverse_diagonal(&self) -> &[f64] {
        &self.inv_diag
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

pub fn jacobi_build(a: &CsrMatrix) -> JacobiPreconditioner {
    JacobiPreconditioner::new(a)
}
