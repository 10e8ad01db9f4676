use super::{dot, Matrix};
use crate::error::{validation, Result};

/// Default orthonormality tolerance for freshly computed bases.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// A `dim x rank` matrix with orthonormal columns spanning a subspace of `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    columns: Matrix,
}

impl OrthonormalBasis {
    pub fn new(columns: Matrix) -> Result<Self> {
        Self::with_tolerance(columns, ORTHONORMAL_TOL)
    }

    /// Accepts `columns` when `max |C^T C - I| <= tol`.
    pub fn with_tolerance(columns: Matrix, tol: f64) -> Result<Self> {
        if columns.cols() > columns.rows() {
            return Err(validation(format!(
                "basis rank {} exceeds ambient dimension {}",
                columns.cols(),
                columns.rows()
            )));
        }
        let err = orthonormality_error(&columns);
        if err > tol {
            return Err(validation(format!(
                "basis columns are not orthonormal (max |C^T C - I| = {err:.3e} > {tol:.1e})"
            )));
        }
        Ok(Self { columns })
    }

    pub(crate) fn from_columns_unchecked(columns: Matrix) -> Self {
        Self { columns }
    }

    /// The zero-dimensional subspace of `R^dim`.
    pub fn empty(dim: usize) -> Self {
        Self {
            columns: Matrix::zeros(dim, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.rows()
    }

    pub fn rank(&self) -> usize {
        self.columns.cols()
    }

    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns.column(j)
    }

    /// `P^T e`.
    pub fn coefficients(&self, e: &[f64]) -> Vec<f64> {
        let r = self.rank();
        let mut coef = vec![0.0; r];
        for (row, &x) in self.columns.iter_rows().zip(e) {
            if x == 0.0 {
                continue;
            }
            for (c, p) in coef.iter_mut().zip(row) {
                *c += p * x;
            }
        }
        coef
    }

    /// `P P^T e`.
    pub fn project(&self, e: &[f64]) -> Vec<f64> {
        let coef = self.coefficients(e);
        self.columns.iter_rows().map(|row| dot(row, &coef)).collect()
    }

    /// `e <- e - P P^T e`, dimensions assumed checked.
    pub(crate) fn remove_in_place(&self, e: &mut [f64]) {
        if self.rank() == 0 {
            return;
        }
        let coef = self.coefficients(e);
        for (x, row) in e.iter_mut().zip(self.columns.iter_rows()) {
            *x -= dot(row, &coef);
        }
    }

    /// `e <- P P^T e`, dimensions assumed checked.
    pub(crate) fn project_in_place(&self, e: &mut [f64]) {
        let p = self.project(e);
        e.copy_from_slice(&p);
    }
}

/// `max |C^T C - I|` over all entries.
pub fn orthonormality_error(columns: &Matrix) -> f64 {
    let r = columns.cols();
    let mut worst: f64 = 0.0;
    for a in 0..r {
        for b in a..r {
            let mut s = 0.0;
            for row in columns.iter_rows() {
                s += row[a] * row[b];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
    }
    worst
}

/// `e - P P^T e`: the part of `e` orthogonal to the subspace.
pub fn remove_projection(basis: &OrthonormalBasis, e: &[f64]) -> Result<Vec<f64>> {
    if e.len() != basis.dim() {
        return Err(validation(format!(
            "vector has length {}, basis lives in R^{}",
            e.len(),
            basis.dim()
        )));
    }
    let mut out = e.to_vec();
    basis.remove_in_place(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_projection() {
        let basis = OrthonormalBasis::new(Matrix::from_rows(&[[1.0], [0.0]]).unwrap()).unwrap();
        assert_eq!(remove_projection(&basis, &[3.0, 4.0]).unwrap(), vec![0.0, 4.0]);
        assert_eq!(basis.project(&[3.0, 4.0]), vec![3.0, 0.0]);
    }

    #[test]
    fn empty_basis_is_identity() {
        let basis = OrthonormalBasis::empty(3);
        assert_eq!(basis.rank(), 0);
        assert_eq!(remove_projection(&basis, &[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let basis = OrthonormalBasis::empty(3);
        assert!(remove_projection(&basis, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rejects_non_orthonormal() {
        let m = Matrix::from_rows(&[[1.01], [0.0]]).unwrap();
        assert!(OrthonormalBasis::new(m).is_err());
        let wide = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(OrthonormalBasis::new(wide).is_err());
    }
}
