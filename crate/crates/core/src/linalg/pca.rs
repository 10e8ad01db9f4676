use super::{topk_svd, Matrix, OrthonormalBasis};
use crate::error::{range, Result};

/// Principal components of a point cloud.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Top-k right singular vectors of the centered data (`d x k`).
    pub components: OrthonormalBasis,
    /// Centered data projected on `components` (`n x k`).
    pub coords: Matrix,
    /// Sample variance (1/(n-1) normalization) along each component, descending.
    pub explained_variance: Vec<f64>,
}

impl Pca {
    /// Coordinates of a new point in the fitted component frame.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components.coefficients(&centered)
    }
}

pub fn pca(x: &Matrix, k: usize) -> Result<Pca> {
    let n = x.rows();
    if n < 2 {
        return Err(range(format!("pca needs at least 2 rows, got {n}")));
    }
    let max_k = (n - 1).min(x.cols());
    if k == 0 || k > max_k {
        return Err(range(format!("pca k = {k} outside 1..={max_k}")));
    }
    let mean = x.column_means();
    let centered = x.center_rows(&mean);
    let svd = topk_svd(&centered, k)?;
    let v = svd.v();
    let coords = centered.matmul(&v);
    let explained_variance = svd.sigma.iter().map(|s| s * s / (n - 1) as f64).collect();
    Ok(Pca {
        mean,
        components: OrthonormalBasis::from_columns_unchecked(v),
        coords,
        explained_variance,
    })
}
