//! Truncated SVD by Householder QR followed by one-sided Jacobi rotations.
//!
//! Sign convention: the largest-magnitude entry of every left singular vector
//! is positive (first such entry on exact ties). Left vectors belonging to
//! zero singular values are filled by Gram-Schmidt over the standard basis,
//! so the all-zero matrix yields identity columns.

use super::{dot, ensure_finite, Matrix};
use crate::error::{range, validation, Result};

/// Default relative cutoff for [`pseudo_inverse`].
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m x k`, orthonormal columns.
    pub u: Matrix,
    /// Descending, non-negative.
    pub sigma: Vec<f64>,
    /// `k x n`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (v, s) in us.row_mut(i).iter_mut().zip(&self.sigma) {
                *v *= s;
            }
        }
        us.matmul(&self.vt)
    }

    /// Right singular vectors as columns (`n x k`).
    pub fn v(&self) -> Matrix {
        self.vt.transpose()
    }
}

/// The `k` largest singular triplets of `a`.
pub fn topk_svd(a: &Matrix, k: usize) -> Result<SvdResult> {
    let max_k = a.rows().min(a.cols());
    if k == 0 || k > max_k {
        return Err(range(format!(
            "k = {k} outside 1..={max_k} for a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let full = thin_svd(a)?;
    Ok(truncate(full, k))
}

/// Thin SVD with `k = min(rows, cols)`.
pub fn thin_svd(a: &Matrix) -> Result<SvdResult> {
    ensure_finite(a.data(), "svd input")?;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(range("svd of an empty matrix"));
    }
    let (mut u_cols, sigma, mut v_cols) = if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let (u, s, v) = svd_tall(&a.transpose());
        (v, s, u)
    };
    fix_signs(&mut u_cols, &mut v_cols);
    let m = a.rows();
    let n = a.cols();
    let u = Matrix::from_columns(m, &u_cols)?;
    let v = Matrix::from_columns(n, &v_cols)?;
    Ok(SvdResult {
        u,
        sigma,
        vt: v.transpose(),
    })
}

fn truncate(full: SvdResult, k: usize) -> SvdResult {
    SvdResult {
        u: full.u.leading_columns(k),
        sigma: full.sigma[..k].to_vec(),
        vt: full.vt.leading_rows(k),
    }
}

/// SVD of a matrix with `rows >= cols`, returned column-wise: `(u, sigma, v)`.
fn svd_tall(a: &Matrix) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let m = a.rows();
    let n = a.cols();
    let columns: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();

    // Reduce to an n x n triangle first so the Jacobi sweeps cost O(n^3) rather than O(m n^2).
    let (q, mut work) = if m > n {
        let (q, r) = householder_qr(columns, m);
        (Some(q), r)
    } else {
        (None, columns)
    };
    let p = work[0].len();

    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    one_sided_jacobi(&mut work, &mut v);

    let norms: Vec<f64> = work.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let sigma_max = norms[order[0]];
    let cutoff = sigma_max * (m.max(n) as f64) * f64::EPSILON;

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v_sorted: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();

    let mut u_small: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] > cutoff && norms[j] > 0.0 {
            u_small.push(work[j].iter().map(|x| x / norms[j]).collect());
        } else {
            u_small.push(vec![0.0; p]);
            missing.push(slot);
        }
    }
    if !missing.is_empty() {
        complete_columns(&mut u_small, &missing, p);
    }

    let u = match q {
        Some(q) => u_small
            .iter()
            .map(|c| {
                let mut out = vec![0.0; m];
                for (qj, &coef) in q.iter().zip(c) {
                    if coef != 0.0 {
                        for (o, x) in out.iter_mut().zip(qj) {
                            *o += coef * x;
                        }
                    }
                }
                out
            })
            .collect(),
        None => u_small,
    };
    (u, sigma, v_sorted)
}

/// Thin Householder QR of an `m x n` matrix given column-wise (`m > n`).
/// Returns the `n` orthonormal columns of Q and the columns of the `n x n` R.
fn householder_qr(mut cols: Vec<Vec<f64>>, m: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = cols.len();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for j in 0..n {
        let x = &cols[j][j..];
        let norm_x = dot(x, x).sqrt();
        if norm_x == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm_x } else { norm_x };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm_sq = dot(&v, &v);
        if vnorm_sq == 0.0 {
            reflectors.push(None);
            continue;
        }
        for col in cols.iter_mut().skip(j) {
            apply_reflector(&v, vnorm_sq, &mut col[j..]);
        }
        reflectors.push(Some(v));
    }

    let r: Vec<Vec<f64>> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut out = vec![0.0; n];
            out[..=j].copy_from_slice(&c[..=j]);
            out
        })
        .collect();

    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for (j, refl) in reflectors.iter().enumerate().rev() {
        if let Some(v) = refl {
            let vnorm_sq = dot(v, v);
            for col in q.iter_mut() {
                apply_reflector(v, vnorm_sq, &mut col[j..]);
            }
        }
    }
    (q, r)
}

#[inline]
fn apply_reflector(v: &[f64], vnorm_sq: f64, x: &mut [f64]) {
    let f = 2.0 * dot(v, x) / vnorm_sq;
    if f != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= f * vi;
        }
    }
}

/// Cyclic one-sided Jacobi: rotates column pairs of `w` until all are mutually
/// orthogonal to working precision, accumulating the rotations into `v`.
fn one_sided_jacobi(w: &mut [Vec<f64>], v: &mut [Vec<f64>]) {
    let n = w.len();
    let tol = (w[0].len() as f64).sqrt() * f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(w, p, q, c, s);
                rotate(v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

#[inline]
fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the `missing` slots of `cols` with unit vectors orthogonal to every
/// other column, drawn in order from the standard basis.
pub(crate) fn complete_columns(cols: &mut [Vec<f64>], missing: &[usize], dim: usize) {
    let mut filled: Vec<usize> = (0..cols.len()).filter(|i| !missing.contains(i)).collect();
    let mut candidate = 0;
    for &slot in missing {
        loop {
            assert!(candidate < dim, "basis completion ran out of candidates");
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for &f in &filled {
                    let proj = dot(&cols[f], &e);
                    for (x, y) in e.iter_mut().zip(&cols[f]) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if nrm > 0.5 {
                e.iter_mut().for_each(|x| *x /= nrm);
                cols[slot] = e;
                filled.push(slot);
                break;
            }
        }
    }
}

fn fix_signs(u: &mut [Vec<f64>], v: &mut [Vec<f64>]) {
    for (uc, vc) in u.iter_mut().zip(v.iter_mut()) {
        let mut best = 0usize;
        for (i, x) in uc.iter().enumerate() {
            if x.abs() > uc[best].abs() {
                best = i;
            }
        }
        if uc[best] < 0.0 {
            uc.iter_mut().for_each(|x| *x = -*x);
            vc.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Moore-Penrose pseudo-inverse. Singular values at or below `tol * sigma_max` are treated as zero.
pub fn pseudo_inverse(a: &Matrix, tol: f64) -> Result<Matrix> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(validation(format!("pseudo-inverse tolerance must be > 0, got {tol}")));
    }
    let svd = thin_svd(a)?;
    let m = a.rows();
    let n = a.cols();
    let mut out = Matrix::zeros(n, m);
    let cut = tol * svd.sigma[0];
    for (idx, &s) in svd.sigma.iter().enumerate() {
        if s <= cut || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..n {
            let vi = svd.vt.get(idx, i) * inv;
            if vi == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vi * svd.u.get(j, idx);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(cols_as_rows: &Matrix) -> f64 {
        let g = cols_as_rows.matmul(&cols_as_rows.transpose());
        g.max_abs_diff(&Matrix::identity(g.rows()))
    }

    #[test]
    fn diagonal_matrix() {
        let a = Matrix::diag(&[3.0, 2.0, 1.0]);
        let svd = topk_svd(&a, 2).unwrap();
        assert_eq!(svd.sigma.len(), 2);
        assert!((svd.sigma[0] - 3.0).abs() < 1e-14);
        assert!((svd.sigma[1] - 2.0).abs() < 1e-14);
        assert!((svd.u.get(0, 0).abs() - 1.0).abs() < 1e-14);
        assert!((svd.u.get(1, 1).abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let svd = topk_svd(&a, 1).unwrap();
        assert_eq!(svd.sigma, vec![1.0]);
    }

    #[test]
    fn k_out_of_range() {
        let a = Matrix::identity(3);
        assert!(matches!(topk_svd(&a, 0), Err(crate::LaceError::Range(_))));
        assert!(matches!(topk_svd(&a, 4), Err(crate::LaceError::Range(_))));
    }

    #[test]
    fn zero_matrix_gives_identity_columns() {
        let a = Matrix::zeros(4, 3);
        let svd = topk_svd(&a, 3).unwrap();
        assert_eq!(svd.sigma, vec![0.0; 3]);
        assert_eq!(svd.u, Matrix::identity(4).leading_columns(3));
        assert_eq!(svd.vt, Matrix::identity(3));
        let wide = Matrix::zeros(2, 5);
        let svd = topk_svd(&wide, 2).unwrap();
        assert_eq!(svd.u, Matrix::identity(2));
    }

    #[test]
    fn sign_convention_and_orthonormality() {
        let a = Matrix::from_rows(&[
            [-1.0, 2.0, 0.5],
            [3.0, -1.0, 2.0],
            [0.0, 4.0, -2.0],
            [1.0, 1.0, 1.0],
            [-2.0, 0.0, 3.0],
        ])
        .unwrap();
        for m in [a.clone(), a.transpose()] {
            let svd = thin_svd(&m).unwrap();
            assert!(orthonormality_error(&svd.u.transpose()) < 1e-12);
            assert!(orthonormality_error(&svd.vt) < 1e-12);
            assert!(svd.reconstruct().max_abs_diff(&m) < 1e-12);
            assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
            for j in 0..svd.u.cols() {
                let col = svd.u.column(j);
                let big = col.iter().cloned().fold(0.0f64, |acc, x| {
                    if x.abs() > acc.abs() {
                        x
                    } else {
                        acc
                    }
                });
                assert!(big > 0.0);
            }
        }
    }

    #[test]
    fn rank_deficient_left_vectors_stay_orthonormal() {
        // rank 1, 5x3
        let a = Matrix::from_rows(&[
            [1.0, 2.0, 3.0],
            [2.0, 4.0, 6.0],
            [0.0, 0.0, 0.0],
            [-1.0, -2.0, -3.0],
            [0.5, 1.0, 1.5],
        ])
        .unwrap();
        let svd = thin_svd(&a).unwrap();
        assert!(svd.sigma[1] < 1e-12);
        assert!(orthonormality_error(&svd.u.transpose()) < 1e-12);
        assert!(svd.reconstruct().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn pinv_trivial() {
        let i3 = Matrix::identity(3);
        assert!(pseudo_inverse(&i3, DEFAULT_PINV_TOL)
            .unwrap()
            .max_abs_diff(&i3)
            < 1e-15);
        let d = Matrix::diag(&[2.0, 0.0]);
        let p = pseudo_inverse(&d, DEFAULT_PINV_TOL).unwrap();
        assert!(p.max_abs_diff(&Matrix::diag(&[0.5, 0.0])) < 1e-15);
        assert!(pseudo_inverse(&d, 0.0).is_err());
        assert!(pseudo_inverse(&Matrix::zeros(2, 3), 1e-12).unwrap() == Matrix::zeros(3, 2));
    }

    #[test]
    fn deterministic() {
        let a = Matrix::from_rows(&[[0.3, -1.2, 2.2], [4.0, 0.1, -0.7], [1.5, 1.5, 0.0]]).unwrap();
        let s1 = thin_svd(&a).unwrap();
        let s2 = thin_svd(&a).unwrap();
        assert_eq!(s1, s2);
    }
}
