use super::{
    ComponentModel, CsLrdMode, FitMetadata, Method, Structure, CS_LRD_MAX_ITERS, CS_LRD_TOL,
};
use crate::embedding::EstimationSet;
use crate::error::{range, Result};
use crate::linalg::{complete_columns, dot, norm, thin_svd, topk_svd, Matrix, OrthonormalBasis};

/// Fitting request as it arrives from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub method: Method,
    /// Ignored for centering; defaults to the method's default rank.
    pub rank: Option<usize>,
    pub cs_lrd_mode: CsLrdMode,
}

impl FitOptions {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            rank: None,
            cs_lrd_mode: CsLrdMode::Means,
        }
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = Some(rank);
        self
    }
}

pub fn fit(est: &EstimationSet, opts: &FitOptions) -> Result<ComponentModel> {
    let rank = opts.rank.or(opts.method.default_rank());
    match opts.method {
        Method::Centering => fit_centering(est),
        Method::Lrd => fit_lrd(est, rank.unwrap_or(0)),
        Method::CsLrd => fit_cs_lrd(est, rank.unwrap_or(0), opts.cs_lrd_mode),
    }
}

/// Like [`fit`], but a rank above the admissible maximum is clamped instead
/// of rejected; the clamp is recorded in the model's warnings.
pub fn fit_clamped(est: &EstimationSet, opts: &FitOptions) -> Result<ComponentModel> {
    let requested = opts.rank.or(opts.method.default_rank()).unwrap_or(0);
    let (rank, warning) = clamp_rank(est, opts.method, opts.cs_lrd_mode, requested)?;
    let mut model = fit(est, &FitOptions { rank: Some(rank), ..*opts })?;
    if let Some(w) = warning {
        model.push_warning(w);
    }
    Ok(model)
}

/// Largest admissible rank for `method` on `est`. Requests above it are
/// clamped and a warning describing the clamp is returned.
pub fn clamp_rank(
    est: &EstimationSet,
    method: Method,
    mode: CsLrdMode,
    requested: usize,
) -> Result<(usize, Option<String>)> {
    if method == Method::Centering {
        return Ok((0, None));
    }
    if requested == 0 {
        return Err(range(format!("{method} rank must be at least 1")));
    }
    let (max, why) = match (method, mode) {
        (Method::Lrd, _) => {
            let (lang, n) = est
                .iter()
                .map(|s| (s.language().to_string(), s.len()))
                .min_by_key(|(_, n)| *n)
                .expect("estimation sets have >= 2 languages");
            let max = n.min(est.dim());
            (max, format!("min(n, d) for language '{lang}'"))
        }
        (Method::CsLrd, CsLrdMode::Means) => {
            let l = est.num_languages();
            ((l - 1).min(est.dim()), format!("l - 1 with {l} languages in means mode"))
        }
        (Method::CsLrd, CsLrdMode::Pooled) => (est.dim(), "the embedding dimension".to_string()),
        (Method::Centering, _) => unreachable!(),
    };
    if requested > max {
        let msg = format!(
            "{method} rank {requested} exceeds {why} = {max}; clamped to {max}"
        );
        Ok((max, Some(msg)))
    } else {
        Ok((requested, None))
    }
}

/// Per-language means as the columns of a `d x l` matrix.
fn language_means(est: &EstimationSet) -> Matrix {
    let cols: Vec<Vec<f64>> = est.iter().map(|s| s.vectors().column_means()).collect();
    Matrix::from_columns(est.dim(), &cols).expect("means share dimension d")
}

fn base_metadata(est: &EstimationSet) -> FitMetadata {
    FitMetadata {
        iterations: 0,
        converged: true,
        objective_trace: Vec::new(),
        warnings: Vec::new(),
        estimation_sizes: est.sizes(),
    }
}

pub fn fit_centering(est: &EstimationSet) -> Result<ComponentModel> {
    let means = est.iter().map(|s| s.vectors().column_means()).collect();
    ComponentModel::from_parts(
        est.languages(),
        est.dim(),
        Structure::Centering { means },
        base_metadata(est),
    )
}

/// Top-`r` right singular vectors of each (uncentered) language matrix.
pub fn fit_lrd(est: &EstimationSet, r: usize) -> Result<ComponentModel> {
    let mut bases = Vec::with_capacity(est.num_languages());
    for set in est.iter() {
        let max = set.len().min(est.dim());
        if r == 0 || r > max {
            return Err(range(format!(
                "lrd rank {r} outside 1..={max} for language '{}' (n = {}, d = {})",
                set.language(),
                set.len(),
                est.dim()
            )));
        }
        let svd = topk_svd(set.vectors(), r)?;
        bases.push(OrthonormalBasis::new(svd.v())?);
    }
    ComponentModel::from_parts(est.languages(), est.dim(), Structure::Lrd { bases }, base_metadata(est))
}

/// Shared syntax subspace with a common mean orthogonal to it.
///
/// Means mode runs alternating minimization of
/// `||M - m_c 1^T - M_s Γ^T||_F^2` subject to `m_c ⊥ colspan(M_s)`, with `Γ`
/// eliminated in closed form as `(M - m_c 1^T)^T M_s`. Pooled mode replaces
/// `M` by all mean-centered embeddings and drops the common mean.
pub fn fit_cs_lrd(est: &EstimationSet, r: usize, mode: CsLrdMode) -> Result<ComponentModel> {
    let d = est.dim();
    let l = est.num_languages();
    let means = language_means(est);
    let mut metadata = base_metadata(est);

    let (basis, common_mean) = match mode {
        CsLrdMode::Means => {
            let max = (l - 1).min(d);
            if r == 0 || r > max {
                return Err(range(format!(
                    "cs_lrd rank {r} outside 1..={max} in means mode ({l} languages, d = {d})"
                )));
            }
            let fit = alternating_minimization(&means, r);
            metadata.iterations = fit.iterations;
            metadata.converged = fit.converged;
            metadata.objective_trace = fit.trace;
            if !fit.converged {
                metadata.warnings.push(format!(
                    "cs_lrd did not converge within {CS_LRD_MAX_ITERS} iterations; returning the best iterate"
                ));
            }
            (fit.basis, fit.common_mean)
        }
        CsLrdMode::Pooled => {
            if r == 0 || r > d {
                return Err(range(format!("cs_lrd rank {r} outside 1..={d} in pooled mode")));
            }
            let centered: Vec<Matrix> = est
                .iter()
                .map(|s| s.vectors().center_rows(&s.vectors().column_means()))
                .collect();
            let refs: Vec<&Matrix> = centered.iter().collect();
            let stacked = Matrix::vstack(&refs)?;
            let basis = leading_right_basis(&stacked, r)?;
            let zero = vec![0.0; d];
            let resid: f64 = stacked
                .iter_rows()
                .map(|row| {
                    let mut x = row.to_vec();
                    basis.remove_in_place(&mut x);
                    dot(&x, &x)
                })
                .sum();
            metadata.objective_trace = vec![resid];
            (basis, zero)
        }
    };

    // Γ = (M - m_c 1^T)^T M_s, one row of coefficients per language
    let mut gammas = Matrix::zeros(l, basis.rank());
    for j in 0..l {
        let shifted: Vec<f64> = means
            .column(j)
            .iter()
            .zip(&common_mean)
            .map(|(a, b)| a - b)
            .collect();
        let coef = basis.coefficients(&shifted);
        gammas.row_mut(j).copy_from_slice(&coef);
    }

    ComponentModel::from_parts(
        est.languages(),
        d,
        Structure::CsLrd {
            mode,
            basis,
            common_mean,
            gammas,
        },
        metadata,
    )
}

/// `||(I - P P^T)(M - m 1^T)||_F^2`, the CS-LRD objective with `Γ` at its optimum.
pub fn cs_lrd_objective(means: &Matrix, common_mean: &[f64], basis: &OrthonormalBasis) -> f64 {
    (0..means.cols())
        .map(|j| {
            let mut x: Vec<f64> = means
                .column(j)
                .iter()
                .zip(common_mean)
                .map(|(a, b)| a - b)
                .collect();
            basis.remove_in_place(&mut x);
            dot(&x, &x)
        })
        .sum()
}

struct Alternation {
    basis: OrthonormalBasis,
    common_mean: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn alternating_minimization(means: &Matrix, r: usize) -> Alternation {
    let d = means.rows();
    let l = means.cols();
    let mbar: Vec<f64> = means.iter_rows().map(|row| row.iter().sum::<f64>() / l as f64).collect();
    let scale = means.frobenius_norm();

    let mut basis = leading_left_basis(&subtract_column(means, &mbar), r, &mbar, scale);
    let mut common_mean = orthogonal_part(&basis, &mbar);
    let mut current = cs_lrd_objective(means, &common_mean, &basis);
    let mut trace = vec![current];

    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=CS_LRD_MAX_ITERS {
        iterations = it;
        let next_basis = leading_left_basis(&subtract_column(means, &common_mean), r, &mbar, scale);
        // for fixed M_s the constrained minimizer over m_c is the projected column mean
        let next_mean = orthogonal_part(&next_basis, &mbar);
        let objective = cs_lrd_objective(means, &next_mean, &next_basis);
        // in exact arithmetic a step never increases the objective; a rounding-level
        // increase means the fixed point is reached, so keep the current iterate
        if objective > current {
            converged = true;
            break;
        }
        trace.push(objective);
        basis = next_basis;
        common_mean = next_mean;
        let change = current - objective;
        current = objective;
        if change < CS_LRD_TOL {
            converged = true;
            break;
        }
    }
    debug_assert_eq!(common_mean.len(), d);
    Alternation {
        basis,
        common_mean,
        trace,
        iterations,
        converged,
    }
}

fn subtract_column(m: &Matrix, v: &[f64]) -> Matrix {
    let mut out = m.clone();
    for (i, vi) in v.iter().enumerate() {
        for x in out.row_mut(i) {
            *x -= vi;
        }
    }
    out
}

fn orthogonal_part(basis: &OrthonormalBasis, v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    basis.remove_in_place(&mut out);
    out
}

/// Top-`r` left singular vectors of `x`. Directions with no signal (singular
/// values at or below `1e-12 * scale`) are replaced by deterministic unit
/// vectors orthogonal to the signal directions and, when room allows, to `avoid`.
fn leading_left_basis(x: &Matrix, r: usize, avoid: &[f64], scale: f64) -> OrthonormalBasis {
    let d = x.rows();
    let svd = thin_svd(x).expect("finite input");
    let cutoff = 1e-12 * scale;
    let significant: Vec<Vec<f64>> = (0..svd.k().min(r))
        .filter(|&j| svd.sigma[j] > cutoff && svd.sigma[j] > 0.0)
        .map(|j| svd.u.column(j))
        .collect();
    complete_to_rank(significant, r, d, Some(avoid))
}

/// Top-`r` right singular vectors of `x` (equivalently the leading left
/// singular vectors of `x^T`), completed as in [`leading_left_basis`].
fn leading_right_basis(x: &Matrix, r: usize) -> Result<OrthonormalBasis> {
    let d = x.cols();
    let svd = thin_svd(x)?;
    let cutoff = 1e-12 * x.frobenius_norm();
    let significant: Vec<Vec<f64>> = (0..svd.k().min(r))
        .filter(|&j| svd.sigma[j] > cutoff && svd.sigma[j] > 0.0)
        .map(|j| svd.vt.row(j).to_vec())
        .collect();
    Ok(complete_to_rank(significant, r, d, None))
}

fn complete_to_rank(
    mut cols: Vec<Vec<f64>>,
    r: usize,
    d: usize,
    avoid: Option<&[f64]>,
) -> OrthonormalBasis {
    let have = cols.len();
    if have < r {
        let mut avoid_slot = None;
        if let Some(a) = avoid {
            let n = norm(a);
            // keep m_c representable: the completion stays orthogonal to it when d allows
            if n > 0.0 && d > r {
                let mut unit: Vec<f64> = a.iter().map(|x| x / n).collect();
                for _ in 0..2 {
                    for c in &cols {
                        let p = dot(c, &unit);
                        unit.iter_mut().zip(c).for_each(|(u, ci)| *u -= p * ci);
                    }
                }
                let un = norm(&unit);
                if un > 1e-8 {
                    unit.iter_mut().for_each(|u| *u /= un);
                    avoid_slot = Some(cols.len());
                    cols.push(unit);
                }
            }
        }
        let start = cols.len();
        let target = start + (r - have);
        cols.resize(target, vec![0.0; d]);
        let missing: Vec<usize> = (start..target).collect();
        complete_columns(&mut cols, &missing, d);
        if let Some(slot) = avoid_slot {
            cols.remove(slot);
        }
    }
    let m = Matrix::from_columns(d, &cols).expect("columns share dimension d");
    OrthonormalBasis::from_columns_unchecked(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::apply;
    use crate::embedding::{EmbeddingKind, EmbeddingSet};

    fn set(lang: &str, rows: &[&[f64]]) -> EmbeddingSet {
        let ids = (0..rows.len()).map(|i| format!("{lang}-{i}")).collect();
        EmbeddingSet::new(lang, EmbeddingKind::Mean, "", ids, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn centering_two_point_mean() {
        let est = EstimationSet::new(vec![
            set("a", &[&[1.0, 0.0], &[3.0, 0.0]]),
            set("b", &[&[1.0, 1.0], &[-1.0, -1.0]]),
        ])
        .unwrap();
        let m = fit_centering(&est).unwrap();
        assert_eq!(m.mean("a").unwrap(), &[2.0, 0.0]);
        assert_eq!(m.mean("b").unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn lrd_rank_one_data() {
        let est = EstimationSet::new(vec![
            set("a", &[&[2.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], &[0.5, 0.0, 0.0]]),
            set("b", &[&[0.0, 1.0, 0.0], &[0.0, 3.0, 0.0]]),
        ])
        .unwrap();
        let m = fit_lrd(&est, 1).unwrap();
        let b = m.basis("a").unwrap();
        assert!((b.column(0)[0].abs() - 1.0).abs() < 1e-12);
        assert!(apply(&m, &[4.0, 1.0, 2.0], "a").unwrap().iter().zip([0.0, 1.0, 2.0]).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn lrd_full_rank_removes_everything() {
        let eye = [&[1.0, 0.0, 0.0][..], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]];
        let est = EstimationSet::new(vec![set("a", &eye), set("b", &eye)]).unwrap();
        let m = fit_lrd(&est, 3).unwrap();
        let out = apply(&m, &[0.3, -2.0, 7.0], "b").unwrap();
        assert!(out.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn lrd_rank_too_large_names_language() {
        let est = EstimationSet::new(vec![
            set("a", &[&[1.0, 0.0], &[0.0, 1.0]]),
            set("short", &[&[1.0, 1.0]]),
        ])
        .unwrap();
        let err = fit_lrd(&est, 2).unwrap_err();
        assert!(matches!(err, crate::LaceError::Range(_)));
        assert!(err.to_string().contains("short"));
    }

    #[test]
    fn cs_lrd_identical_means_is_degenerate() {
        let est = EstimationSet::new(vec![
            set("a", &[&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]]),
            set("b", &[&[2.0, 2.0, 2.0]]),
        ])
        .unwrap();
        let m = fit_cs_lrd(&est, 1, CsLrdMode::Means).unwrap();
        let Structure::CsLrd { basis, common_mean, gammas, .. } = m.structure() else {
            panic!()
        };
        assert_eq!(common_mean, &vec![2.0, 2.0, 2.0]);
        assert!(gammas.data().iter().all(|g| g.abs() < 1e-12));
        assert!(dot(&basis.column(0), common_mean).abs() < 1e-12);
        assert!(m.metadata().objective_trace.iter().all(|o| o.abs() < 1e-20));
    }

    #[test]
    fn cs_lrd_rank_bounds() {
        let est = EstimationSet::new(vec![
            set("a", &[&[1.0, 0.0, 0.0]]),
            set("b", &[&[0.0, 1.0, 0.0]]),
        ])
        .unwrap();
        assert!(fit_cs_lrd(&est, 2, CsLrdMode::Means).is_err());
        assert!(fit_cs_lrd(&est, 0, CsLrdMode::Means).is_err());
        assert!(fit_cs_lrd(&est, 3, CsLrdMode::Pooled).is_ok());
        assert!(fit_cs_lrd(&est, 4, CsLrdMode::Pooled).is_err());
    }

    #[test]
    fn clamp_in_means_mode() {
        let rows: [&[f64]; 1] = [&[1.0, 0.0, 0.0, 0.0, 0.0]];
        let est = EstimationSet::new(
            ["a", "b", "c", "d"].iter().map(|l| set(l, &rows)).collect::<Vec<_>>(),
        )
        .unwrap();
        let (r, warn) = clamp_rank(&est, Method::CsLrd, CsLrdMode::Means, 99).unwrap();
        assert_eq!(r, 3);
        assert!(warn.unwrap().contains("clamped to 3"));
        assert_eq!(clamp_rank(&est, Method::CsLrd, CsLrdMode::Means, 2).unwrap(), (2, None));
        assert!(clamp_rank(&est, Method::Lrd, CsLrdMode::Means, 0).is_err());
    }
}
