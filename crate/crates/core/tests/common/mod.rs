//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical kernels.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Dense row-major matrix as nested vectors, kept separate from the library type.
pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Dense {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn transpose(a: &Dense) -> Dense {
    if a.is_empty() {
        return vec![];
    }
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn fro_sq(a: &Dense) -> f64 {
    a.iter().flatten().map(|x| x * x).sum()
}

/// Eigen-decomposition of a symmetric matrix by the classical two-sided cyclic
/// Jacobi method. Returns eigenvalues in descending order and the matching
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &Dense) -> (Vec<f64>, Dense) {
    let n = a.len();
    let mut m = a.clone();
    let mut v: Dense = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = fro_sq(&m).max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let vals = order.iter().map(|&i| m[i][i]).collect();
    let vecs = (0..n)
        .map(|r| order.iter().map(|&c| v[r][c]).collect())
        .collect();
    (vals, vecs)
}

/// Singular values of `a` as square roots of the eigenvalues of `a^T a` (or `a a^T`).
pub fn singular_values_via_gram(a: &Dense) -> Vec<f64> {
    let at = transpose(a);
    let gram = if a.len() >= at.len() {
        matmul(&at, a)
    } else {
        matmul(a, &at)
    };
    symmetric_eigen(&gram)
        .0
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

/// Solves `m x = b` for every column of `b` by Gauss-Jordan elimination with partial pivoting.
pub fn solve(m: &Dense, b: &Dense) -> Dense {
    let n = m.len();
    let cols = b[0].len();
    let mut aug: Dense = m
        .iter()
        .zip(b)
        .map(|(r, rb)| r.iter().chain(rb.iter()).cloned().collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        for x in aug[col].iter_mut() {
            *x /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                let pivot_row = aug[col].clone();
                for (x, y) in aug[r].iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
            }
        }
    }
    aug.iter().map(|r| r[n..n + cols].to_vec()).collect()
}

/// Orthonormalizes the columns of `a` with classical Gram-Schmidt applied twice.
pub fn gram_schmidt(a: &Dense) -> Dense {
    let cols = transpose(a);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for _ in 0..2 {
            for q in &out {
                let p = dot(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= p * y;
                }
            }
        }
        let n = dot(&v, &v).sqrt();
        out.push(v.iter().map(|x| x / n).collect());
    }
    transpose(&out)
}

/// Largest principal angle between the column spans of two orthonormal matrices
/// of equal rank: `asin(||(I - Q1 Q1^T) Q2||_2)`.
pub fn largest_principal_angle(q1: &Dense, q2: &Dense) -> f64 {
    let proj = matmul(q1, &matmul(&transpose(q1), q2));
    let resid: Dense = q2
        .iter()
        .zip(&proj)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let gram = matmul(&transpose(&resid), &resid);
    let top = symmetric_eigen(&gram).0[0].max(0.0);
    top.sqrt().min(1.0).asin()
}

/// Mean of rows by plain scalar accumulation.
pub fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut acc = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            acc[j] += r[j];
        }
    }
    acc.iter().map(|x| x / rows.len() as f64).collect()
}
