mod common;

use common::*;
use lace_core::components::{apply, fit, FitOptions, Method};
use lace_core::retrieval::{DbConfig, EvalOptions};
use lace_core::synth::*;
use lace_core::LaceError;

fn corpus_row<'a>(out: &'a SynthOutput, lang: &str, concept: &str) -> &'a [f64] {
    let id = &out.corpus.concepts().iter().find(|c| c.id == concept).unwrap().snippets[lang];
    let set = out.corpus.set(lang).unwrap();
    set.vector(out.corpus.row_of(lang, id).unwrap())
}

#[test]
fn generation_is_deterministic() {
    let spec = SynthSpec { concepts: 20, include_english: true, ..SynthSpec::default() };
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a.corpus, b.corpus);
    assert_eq!(a.truth, b.truth);
    assert!(a.estimation.iter().zip(b.estimation.iter()).all(|(x, y)| x == y));
    let c = generate(&SynthSpec { seed: 1, ..spec }).unwrap();
    assert_ne!(a.corpus, c.corpus);
}

#[test]
fn no_language_signal_means_identical_translations() {
    let spec = SynthSpec { syntax_scale: 0.0, noise_scale: 0.0, concepts: 15, ..SynthSpec::default() };
    let out = generate(&spec).unwrap();
    for c in out.corpus.concepts() {
        let first = corpus_row(&out, "python", &c.id);
        for lang in out.corpus.languages() {
            assert_eq!(corpus_row(&out, &lang, &c.id), first);
        }
    }
}

#[test]
fn planted_structure_satisfies_mode_assumptions() {
    for mode in [SynthMode::ConstantOffset, SynthMode::PerLanguageSubspace, SynthMode::SharedSubspace] {
        let spec = SynthSpec { mode, noise_scale: 0.0, concepts: 25, ..SynthSpec::default() };
        let out = generate(&spec).unwrap();
        for (l, lang) in out.truth.languages.iter().enumerate() {
            for (cid, a) in &out.truth.semantics {
                let e = corpus_row(&out, lang, cid);
                let syntax: Vec<f64> = e.iter().zip(a).map(|(x, y)| x - y).collect();
                assert!(dot(&syntax, a).abs() <= 1e-12, "{mode}: e_s not orthogonal to e_a");
                if mode == SynthMode::ConstantOffset {
                    let diff: f64 = syntax.iter().zip(&out.truth.offsets[l]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    assert!(diff <= 1e-12);
                }
            }
        }
        if mode == SynthMode::SharedSubspace {
            let b = out.truth.shared_basis.as_ref().unwrap();
            for j in 0..b.cols() {
                assert!(dot(&b.column(j), &out.truth.common_mean).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn ground_truth_mrr_is_perfect_for_distinct_semantics() {
    let out = generate(&SynthSpec { concepts: 30, ..SynthSpec::default() }).unwrap();
    for db in [DbConfig::Monolingual, DbConfig::SourceIncludedMultilingual] {
        let rep = ground_truth_mrr(&out.corpus, &out.truth, &EvalOptions::new(db)).unwrap();
        assert_eq!(rep.baseline.average, 100.0);
    }
}

#[test]
fn ground_truth_mrr_with_duplicated_concepts() {
    let mut out = generate(&SynthSpec { concepts: 20, ..SynthSpec::default() }).unwrap();
    let ids: Vec<String> = out.truth.semantics.keys().cloned().collect();
    for pair in ids.chunks(2) {
        let a = out.truth.semantics[&pair[0]].clone();
        out.truth.semantics.insert(pair[1].clone(), a);
    }
    let rep = ground_truth_mrr(&out.corpus, &out.truth, &EvalOptions::new(DbConfig::Monolingual)).unwrap();
    assert!(rep.baseline.average >= 75.0 - 1e-9);
    assert!(rep.baseline.average < 100.0);
}

#[test]
fn ground_truth_mrr_matches_exhaustive_oracle() {
    let out = generate(&SynthSpec { concepts: 25, dim: 8, rank: 2, semantic_scale: 1.0, ..SynthSpec::default() }).unwrap();
    let rep = ground_truth_mrr(&out.corpus, &out.truth, &EvalOptions::new(DbConfig::Monolingual)).unwrap();
    // monolingual: every concept's target snippet is its semantic vector,
    // so the rank depends only on the concept, not on the language pair
    let sem: Vec<(&String, &Vec<f64>)> = out.truth.semantics.iter().collect();
    let cos = |a: &[f64], b: &[f64]| dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    let mut recip = 0.0;
    for (i, (_, q)) in sem.iter().enumerate() {
        let gold = cos(q, sem[i].1);
        let ahead = sem.iter().enumerate().filter(|(j, (_, v))| *j != i && cos(q, v) > gold).count();
        recip += 1.0 / (ahead + 1) as f64;
    }
    let oracle = 100.0 * recip / sem.len() as f64;
    for p in &rep.baseline.pairs {
        assert!((p.mrr - oracle).abs() <= 1e-9, "{} -> {}: {} vs {oracle}", p.source, p.target, p.mrr);
    }
}

fn mean_distance_to_semantics(out: &SynthOutput, opts: &FitOptions) -> f64 {
    let model = fit(&out.estimation, opts).unwrap();
    let mut total = 0.0;
    let mut n = 0;
    for lang in &out.truth.languages {
        for (cid, a) in &out.truth.semantics {
            let t = apply(&model, corpus_row(out, lang, cid), lang).unwrap();
            total += t.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn matched_estimator_beats_mismatched() {
    let r = 3;
    let all = [
        FitOptions::new(Method::Centering),
        FitOptions::new(Method::Lrd).with_rank(r),
        FitOptions::new(Method::CsLrd).with_rank(r),
    ];
    for (mode, matched) in [(SynthMode::ConstantOffset, 0), (SynthMode::PerLanguageSubspace, 1), (SynthMode::SharedSubspace, 2)] {
        let spec = SynthSpec { mode, rank: r, noise_scale: 0.01, concepts: 60, estimation_size: Some(500), ..SynthSpec::default() };
        let out = generate(&spec).unwrap();
        let dists: Vec<f64> = all.iter().map(|o| mean_distance_to_semantics(&out, o)).collect();
        println!("{mode}: {dists:?}");
        for (i, d) in dists.iter().enumerate() {
            if i != matched {
                assert!(dists[matched] < *d, "{mode}: {dists:?}");
            }
        }
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let bad = [
        SynthSpec { languages: 1, ..SynthSpec::default() },
        SynthSpec { rank: 0, ..SynthSpec::default() },
        SynthSpec { dim: 4, rank: 4, ..SynthSpec::default() },
        SynthSpec { syntax_scale: -1.0, ..SynthSpec::default() },
        SynthSpec { mode: SynthMode::PerLanguageSubspace, dim: 12, languages: 4, rank: 3, ..SynthSpec::default() },
    ];
    for spec in bad {
        assert!(matches!(generate(&spec), Err(LaceError::Validation(_))), "{spec:?}");
    }
}

#[test]
fn fresh_samples_are_independent_streams() {
    let spec = SynthSpec { concepts: 5, ..SynthSpec::default() };
    let out = generate(&spec).unwrap();
    let a = sample_sets(&spec, &out.truth, 10, 10, false).unwrap();
    let b = sample_sets(&spec, &out.truth, 10, 11, false).unwrap();
    assert_eq!(a.len(), 6);
    assert_ne!(a[0].vectors(), b[0].vectors());
    assert_eq!(a, sample_sets(&spec, &out.truth, 10, 10, false).unwrap());
}
