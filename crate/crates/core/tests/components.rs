mod common;

use common::*;
use lace_core::components::{
    apply, apply_set, cs_lrd_objective, fit, fit_centering, fit_clamped, fit_cs_lrd, fit_lrd,
    ComponentModel, CsLrdMode, FitOptions, Method, Structure,
};
use lace_core::embedding::{EmbeddingKind, EmbeddingSet, EstimationSet};
use lace_core::linalg::Matrix;
use lace_core::synth::{generate, SynthMode, SynthSpec};
use lace_core::LaceError;
use proptest::prelude::*;

fn to_dense(m: &Matrix) -> Dense {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

fn set(lang: &str, rows: Dense) -> EmbeddingSet {
    let ids = (0..rows.len()).map(|i| format!("{lang}{i}")).collect();
    EmbeddingSet::new(lang, EmbeddingKind::Mean, "t", ids, Matrix::from_rows(&rows).unwrap()).unwrap()
}

fn random_estimation(seed: u64, langs: usize, n: usize, d: usize) -> EstimationSet {
    let mut r = rng(seed);
    let sets = (0..langs)
        .map(|l| {
            let shift = gaussian_vec(&mut r, d);
            let rows = gaussian(&mut r, n, d)
                .into_iter()
                .map(|row| row.iter().zip(&shift).map(|(a, b)| a + 3.0 * b).collect())
                .collect();
            set(&format!("l{l}"), rows)
        })
        .collect::<Vec<_>>();
    EstimationSet::new(sets).unwrap()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn basis_dense(model: &ComponentModel, lang: &str) -> Dense {
    to_dense(model.basis(lang).unwrap().columns())
}

#[test]
fn centering_recovers_planted_offsets_exactly() {
    let spec = SynthSpec {
        mode: SynthMode::ConstantOffset,
        dim: 64,
        languages: 5,
        concepts: 10,
        estimation_size: Some(1000),
        noise_scale: 0.0,
        ..SynthSpec::default()
    };
    let out = generate(&spec).unwrap();
    let model = fit_centering(&out.estimation).unwrap();
    for (l, lang) in out.truth.languages.iter().enumerate() {
        let err = norm_diff(model.mean(lang).unwrap(), &out.truth.offsets[l]);
        assert!(err <= 1e-9, "{lang}: {err}");
    }
}

#[test]
fn centering_error_shrinks_like_sigma_over_root_n() {
    let sigma = 0.1;
    let n = 1000;
    let spec = SynthSpec {
        mode: SynthMode::ConstantOffset,
        dim: 64,
        languages: 5,
        concepts: 10,
        estimation_size: Some(n),
        noise_scale: sigma,
        ..SynthSpec::default()
    };
    let out = generate(&spec).unwrap();
    let model = fit_centering(&out.estimation).unwrap();
    for (l, lang) in out.truth.languages.iter().enumerate() {
        let err = norm_diff(model.mean(lang).unwrap(), &out.truth.offsets[l]);
        assert!(err <= 5.0 * sigma / (n as f64).sqrt(), "{lang}: {err}");
    }
}

#[test]
fn lrd_matches_gram_eigenvectors() {
    let est = random_estimation(5, 3, 40, 8);
    let r = 3;
    let model = fit_lrd(&est, r).unwrap();
    for s in est.iter() {
        let e = to_dense(s.vectors());
        let gram = matmul(&transpose(&e), &e);
        let (vals, vecs) = symmetric_eigen(&gram);
        let top: Dense = vecs.iter().map(|row| row[..r].to_vec()).collect();
        let got = basis_dense(&model, s.language());
        assert!(largest_principal_angle(&top, &got) < 1e-8);
        // Eckart-Young: residual energy = trailing eigenvalues
        let mut resid = 0.0;
        for row in &e {
            let x = apply(&model, row, s.language()).unwrap();
            resid += dot(&x, &x);
        }
        let tail: f64 = vals[r..].iter().sum();
        assert!((resid - tail).abs() <= 1e-8 * fro_sq(&e));
    }
}

#[test]
fn lrd_rank_too_large_names_language() {
    let est = random_estimation(1, 2, 3, 8);
    match fit_lrd(&est, 4) {
        Err(LaceError::Range(msg)) => assert!(msg.contains("l0") || msg.contains("l1"), "{msg}"),
        other => panic!("expected range error, got {other:?}"),
    }
}

#[test]
fn cs_lrd_plant_and_recover() {
    let spec = SynthSpec {
        mode: SynthMode::SharedSubspace,
        dim: 32,
        languages: 6,
        rank: 2,
        concepts: 10,
        estimation_size: Some(200),
        noise_scale: 0.0,
        ..SynthSpec::default()
    };
    let out = generate(&spec).unwrap();
    let model = fit_cs_lrd(&out.estimation, 2, CsLrdMode::Means).unwrap();
    let planted = to_dense(out.truth.shared_basis.as_ref().unwrap());
    let got = basis_dense(&model, "python");
    assert!(largest_principal_angle(&planted, &got) <= 1e-6);
    let trace = &model.metadata().objective_trace;
    assert!(*trace.last().unwrap() <= 1e-12, "{trace:?}");
    let Structure::CsLrd { common_mean, .. } = model.structure() else { panic!() };
    assert!(norm_diff(common_mean, &out.truth.common_mean) <= 1e-6);
}

#[test]
fn cs_lrd_constraint_and_monotone_objective() {
    for seed in 0..5 {
        let est = random_estimation(seed, 6, 20, 10);
        let model = fit_cs_lrd(&est, 3, CsLrdMode::Means).unwrap();
        let Structure::CsLrd { basis, common_mean, gammas, .. } = model.structure() else { panic!() };
        for j in 0..basis.rank() {
            assert!(dot(&basis.column(j), common_mean).abs() <= 1e-9);
        }
        assert_eq!((gammas.rows(), gammas.cols()), (6, 3));
        let trace = &model.metadata().objective_trace;
        assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");

        // independent objective: ||(I - PP^T)(M - m 1^T)||^2 from dense helpers
        let p = to_dense(basis.columns());
        let mut obj = 0.0;
        for s in est.iter() {
            let m = mean_rows(&to_dense(s.vectors()));
            let x: Vec<f64> = m.iter().zip(common_mean).map(|(a, b)| a - b).collect();
            let coef: Vec<f64> = (0..p[0].len()).map(|k| (0..x.len()).map(|i| p[i][k] * x[i]).sum()).collect();
            let resid: Vec<f64> = (0..x.len())
                .map(|i| x[i] - (0..coef.len()).map(|k| p[i][k] * coef[k]).sum::<f64>())
                .collect();
            obj += dot(&resid, &resid);
        }
        let means = Matrix::from_columns(10, &est.iter().map(|s| s.vectors().column_means()).collect::<Vec<_>>()).unwrap();
        let lib = cs_lrd_objective(&means, common_mean, basis);
        assert!((obj - lib).abs() <= 1e-9 * (1.0 + obj));
        assert!((trace.iter().cloned().fold(f64::INFINITY, f64::min) - lib).abs() <= 1e-9 * (1.0 + lib));
    }
}

#[test]
fn cs_lrd_identical_means_gives_zero_objective() {
    let mut r = rng(3);
    let rows = gaussian(&mut r, 10, 5);
    let est = EstimationSet::new(["a", "b", "c"].map(|l| set(l, rows.clone()))).unwrap();
    let model = fit_cs_lrd(&est, 2, CsLrdMode::Means).unwrap();
    let Structure::CsLrd { common_mean, gammas, .. } = model.structure() else { panic!() };
    let mean = mean_rows(&rows);
    assert!(norm_diff(common_mean, &mean) < 1e-12);
    assert!(gammas.data().iter().all(|g| g.abs() < 1e-12));
    assert!(*model.metadata().objective_trace.last().unwrap() < 1e-20);
}

#[test]
fn pooled_mode_uses_stacked_centered_data() {
    let est = random_estimation(9, 3, 15, 6);
    let model = fit_cs_lrd(&est, 2, CsLrdMode::Pooled).unwrap();
    let mut stacked = Vec::new();
    for s in est.iter() {
        let rows = to_dense(s.vectors());
        let m = mean_rows(&rows);
        stacked.extend(rows.into_iter().map(|r| r.iter().zip(&m).map(|(a, b)| a - b).collect::<Vec<_>>()));
    }
    let (_, vecs) = symmetric_eigen(&matmul(&transpose(&stacked), &stacked));
    let top: Dense = vecs.iter().map(|row| row[..2].to_vec()).collect();
    assert!(largest_principal_angle(&top, &basis_dense(&model, "l0")) < 1e-8);
    let Structure::CsLrd { common_mean, gammas, .. } = model.structure() else { panic!() };
    assert!(common_mean.iter().all(|&x| x == 0.0));
    let b = model.basis("l0").unwrap();
    for (j, s) in est.iter().enumerate() {
        let coef = b.coefficients(&s.vectors().column_means());
        assert!(norm_diff(&coef, gammas.row(j)) < 1e-12);
    }
}

#[test]
fn cs_lrd_applies_to_unseen_languages() {
    let est = random_estimation(2, 4, 10, 6);
    let model = fit_cs_lrd(&est, 2, CsLrdMode::Means).unwrap();
    assert!(apply(&model, &[1.0; 6], "klingon").is_ok());
    let centering = fit_centering(&est).unwrap();
    assert!(matches!(apply(&centering, &[1.0; 6], "klingon"), Err(LaceError::Lookup(_))));
}

#[test]
fn rank_clamp_is_recorded() {
    let est = random_estimation(4, 4, 10, 8);
    let model = fit_clamped(&est, &FitOptions::new(Method::CsLrd).with_rank(99)).unwrap();
    assert_eq!(model.rank(), Some(3));
    let w = &model.metadata().warnings;
    assert!(w.iter().any(|m| m.contains("clamped to 3")), "{w:?}");
    assert!(matches!(
        fit(&est, &FitOptions::new(Method::CsLrd).with_rank(99)),
        Err(LaceError::Range(_))
    ));
    assert!(matches!(
        fit_clamped(&est, &FitOptions::new(Method::Lrd).with_rank(0)),
        Err(LaceError::Range(_))
    ));
}

#[test]
fn batch_apply_matches_row_loop() {
    let est = random_estimation(6, 3, 12, 7);
    for opts in [
        FitOptions::new(Method::Centering),
        FitOptions::new(Method::Lrd).with_rank(2),
        FitOptions::new(Method::CsLrd).with_rank(2),
    ] {
        let model = fit(&est, &opts).unwrap();
        for s in est.iter() {
            let batch = apply_set(&model, s).unwrap();
            for i in 0..s.len() {
                assert_eq!(batch.vector(i), apply(&model, s.vector(i), s.language()).unwrap().as_slice());
            }
            assert_eq!(batch.removal(), Some(opts.method.as_str()));
            assert_eq!(batch.ids(), s.ids());
        }
    }
}

fn permuted(est: &EstimationSet, seed: u64) -> EstimationSet {
    use rand::seq::SliceRandom;
    let mut r = rng(seed);
    EstimationSet::new(est.iter().map(|s| {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.shuffle(&mut r);
        s.select(&idx)
    }))
    .unwrap()
}

fn duplicated(est: &EstimationSet) -> EstimationSet {
    EstimationSet::new(est.iter().map(|s| {
        let rows = to_dense(s.vectors());
        let doubled: Dense = rows.iter().chain(rows.iter()).cloned().collect();
        set(s.language(), doubled)
    }))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fits_are_invariant_to_row_order_and_duplication(seed in 0u64..10_000) {
        let est = random_estimation(seed, 4, 9, 6);
        for opts in [
            FitOptions::new(Method::Centering),
            FitOptions::new(Method::Lrd).with_rank(2),
            FitOptions::new(Method::CsLrd).with_rank(2),
        ] {
            let base = fit(&est, &opts).unwrap();
            for variant in [permuted(&est, seed + 1), duplicated(&est)] {
                let other = fit(&variant, &opts).unwrap();
                match opts.method {
                    Method::Centering => {
                        for lang in est.languages() {
                            prop_assert!(norm_diff(base.mean(&lang).unwrap(), other.mean(&lang).unwrap()) < 1e-10);
                        }
                    }
                    _ => {
                        for lang in est.languages() {
                            let a = basis_dense(&base, &lang);
                            let b = basis_dense(&other, &lang);
                            prop_assert!(largest_principal_angle(&a, &b) < 1e-6);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn removal_output_is_orthogonal_to_removed_subspace(seed in 0u64..10_000) {
        let est = random_estimation(seed, 3, 10, 6);
        let model = fit(&est, &FitOptions::new(Method::CsLrd).with_rank(2)).unwrap();
        let b = model.basis("l0").unwrap();
        let mut r = rng(seed);
        let e = gaussian_vec(&mut r, 6);
        let out = apply(&model, &e, "l1").unwrap();
        for j in 0..b.rank() {
            prop_assert!(dot(&b.column(j), &out).abs() < 1e-10);
        }
        let twice = apply(&model, &out, "l1").unwrap();
        prop_assert!(norm_diff(&out, &twice) < 1e-12);
    }
}
