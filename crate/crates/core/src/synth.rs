//! Synthetic corpora with a planted `e = e_s + e_a` decomposition.
//!
//! A random orthonormal basis of `R^d` is split into a syntax block, which
//! holds all planted language structure, and a semantic block orthogonal to
//! it. Scales are expected vector norms: a semantic draw has norm about
//! `semantic_scale`, a noise draw about `noise_scale`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{Concept, EmbeddingKind, EmbeddingSet, EstimationSet, ParallelCorpus};
use crate::error::{validation, LaceError, Result};
use crate::linalg::Matrix;
use crate::retrieval::{evaluate, EvalOptions, RetrievalReport, ENGLISH};

const LANGUAGE_NAMES: [&str; 8] = ["python", "java", "c", "cpp", "csharp", "javascript", "php", "go"];

const STREAM_STRUCTURE: u64 = 0;
const STREAM_ESTIMATION: u64 = 1;
const STREAM_CORPUS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    /// One fixed offset per language.
    ConstantOffset,
    /// A rank-`r` subspace per language.
    PerLanguageSubspace,
    /// A common mean plus one rank-`r` subspace shared by all languages.
    #[default]
    SharedSubspace,
}

impl fmt::Display for SynthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthMode::ConstantOffset => "constant_offset",
            SynthMode::PerLanguageSubspace => "per_language_subspace",
            SynthMode::SharedSubspace => "shared_subspace",
        })
    }
}

impl FromStr for SynthMode {
    type Err = LaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "constant_offset" => Ok(SynthMode::ConstantOffset),
            "per_language_subspace" => Ok(SynthMode::PerLanguageSubspace),
            "shared_subspace" => Ok(SynthMode::SharedSubspace),
            other => Err(validation(format!("unknown synth mode '{other}'"))),
        }
    }
}

/// Contents of `synth.json`. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub dim: usize,
    pub languages: usize,
    pub concepts: usize,
    pub mode: SynthMode,
    pub rank: usize,
    pub semantic_scale: f64,
    pub syntax_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
    pub include_english: bool,
    /// Rows per language in the estimation set; defaults to `concepts`.
    pub estimation_size: Option<usize>,
    /// Subtract the per-language semantic mean in the estimation set.
    pub demean_semantics: bool,
    /// `|m_c|` relative to `syntax_scale` (shared mode).
    pub common_scale: f64,
    /// Spread of per-snippet subspace coefficients around the language center, relative to `syntax_scale`.
    pub jitter_scale: f64,
    /// `|english offset|`; defaults to `syntax_scale`.
    pub english_scale: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            dim: 64,
            languages: 6,
            concepts: 200,
            mode: SynthMode::SharedSubspace,
            rank: 3,
            semantic_scale: 1.0,
            syntax_scale: 3.0,
            noise_scale: 0.05,
            seed: 0,
            include_english: false,
            estimation_size: None,
            demean_semantics: true,
            common_scale: 0.01,
            jitter_scale: 0.2,
            english_scale: None,
        }
    }
}

impl SynthSpec {
    pub fn language_names(&self) -> Vec<String> {
        (0..self.languages)
            .map(|i| match LANGUAGE_NAMES.get(i) {
                Some(n) => n.to_string(),
                None => format!("lang{i}"),
            })
            .collect()
    }

    pub fn estimation_rows(&self) -> usize {
        self.estimation_size.unwrap_or(self.concepts)
    }

    fn syntax_dims(&self) -> usize {
        match self.mode {
            SynthMode::ConstantOffset => self.languages,
            SynthMode::PerLanguageSubspace => self.languages * self.rank,
            SynthMode::SharedSubspace => self.rank + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.concepts == 0 {
            return Err(validation("synth dim and concepts must be positive"));
        }
        if self.languages < 2 {
            return Err(validation("synth needs at least two languages"));
        }
        if self.estimation_rows() == 0 {
            return Err(validation("synth estimation_size must be positive"));
        }
        let scales = [
            self.semantic_scale,
            self.syntax_scale,
            self.noise_scale,
            self.common_scale,
            self.jitter_scale,
            self.english_scale.unwrap_or(0.0),
        ];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(validation("synth scales must be finite and non-negative"));
        }
        if self.mode != SynthMode::ConstantOffset && (self.rank == 0 || self.rank > self.dim - 1) {
            return Err(validation(format!(
                "synth rank {} outside 1..={}",
                self.rank,
                self.dim.saturating_sub(1)
            )));
        }
        if self.syntax_dims() >= self.dim {
            return Err(validation(format!(
                "{} mode needs {} syntax dimensions plus a semantic one, dim is {}",
                self.mode,
                self.syntax_dims(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Everything planted by [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub languages: Vec<String>,
    /// Orthonormal basis of the semantic block (`d x k`).
    pub semantic_basis: Matrix,
    /// Semantic vector `a_i` per concept id.
    pub semantics: BTreeMap<String, Vec<f64>>,
    /// constant_offset: `s_l` per language.
    pub offsets: Vec<Vec<f64>>,
    /// per_language_subspace: `V_l` per language (`d x r`).
    pub language_bases: Vec<Matrix>,
    /// shared_subspace: `M_s` (`d x r`).
    pub shared_basis: Option<Matrix>,
    /// shared_subspace: `m_c`, orthogonal to `M_s`.
    pub common_mean: Vec<f64>,
    /// Subspace coefficient center per language (`l x r`).
    pub centers: Vec<Vec<f64>>,
    /// English offset (inside the semantic block) when english is included.
    pub english_offset: Option<Vec<f64>>,
}

impl GroundTruth {
    /// Language-specific component for a snippet of language `l` with coefficient jitter `j`.
    fn syntax(&self, spec: &SynthSpec, l: usize, jitter: &[f64]) -> Vec<f64> {
        match spec.mode {
            SynthMode::ConstantOffset => self.offsets[l].clone(),
            SynthMode::PerLanguageSubspace => {
                combine(&self.language_bases[l], &self.centers[l], jitter)
            }
            SynthMode::SharedSubspace => {
                let basis = self.shared_basis.as_ref().expect("shared mode has a basis");
                let mut s = combine(basis, &self.centers[l], jitter);
                for (x, m) in s.iter_mut().zip(&self.common_mean) {
                    *x += m;
                }
                s
            }
        }
    }
}

fn combine(basis: &Matrix, center: &[f64], jitter: &[f64]) -> Vec<f64> {
    let coeffs: Vec<f64> = center.iter().zip(jitter).map(|(c, j)| c + j).collect();
    basis.mul_vec(&coeffs)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, n, 1.0);
        let nv = crate::linalg::norm(&v);
        if nv > 1e-8 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// Random orthonormal `d x d` matrix (Gram-Schmidt, applied twice, on gaussian columns).
fn random_orthonormal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v = gaussian(rng, d, 1.0);
        for _ in 0..2 {
            for c in &cols {
                let p = crate::linalg::dot(&v, c);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = crate::linalg::norm(&v);
        if n > 1e-8 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_columns(d, &cols).expect("finite columns")
}

fn block(q: &Matrix, start: usize, len: usize) -> Matrix {
    let cols: Vec<Vec<f64>> = (start..start + len).map(|j| q.column(j)).collect();
    Matrix::from_columns(q.rows(), &cols).expect("finite columns")
}

fn plant(spec: &SynthSpec) -> GroundTruth {
    let mut rng = rng(spec.seed, STREAM_STRUCTURE);
    let d = spec.dim;
    let q = random_orthonormal(&mut rng, d);
    let syn = spec.syntax_dims();
    let semantic_basis = block(&q, syn, d - syn);
    let l = spec.languages;
    let r = spec.rank.max(1);
    let center_scale = spec.syntax_scale / (r as f64).sqrt();
    let mut gt = GroundTruth {
        languages: spec.language_names(),
        semantic_basis,
        semantics: BTreeMap::new(),
        offsets: Vec::new(),
        language_bases: Vec::new(),
        shared_basis: None,
        common_mean: vec![0.0; d],
        centers: Vec::new(),
        english_offset: None,
    };
    match spec.mode {
        SynthMode::ConstantOffset => {
            let b = block(&q, 0, l);
            gt.offsets = (0..l)
                .map(|_| b.mul_vec(&unit(&mut rng, l)).into_iter().map(|x| x * spec.syntax_scale).collect())
                .collect();
        }
        SynthMode::PerLanguageSubspace => {
            gt.language_bases = (0..l).map(|i| block(&q, i * r, r)).collect();
            gt.centers = draw_centers(&mut rng, l, r, center_scale, spec.syntax_scale);
        }
        SynthMode::SharedSubspace => {
            gt.shared_basis = Some(block(&q, 0, r));
            gt.common_mean = q.column(r).into_iter().map(|x| x * spec.common_scale * spec.syntax_scale).collect();
            gt.centers = draw_centers(&mut rng, l, r, center_scale, spec.syntax_scale);
        }
    }
    if spec.include_english {
        let scale = spec.english_scale.unwrap_or(spec.syntax_scale);
        let dir = gt.semantic_basis.mul_vec(&unit(&mut rng, d - syn));
        gt.english_offset = Some(dir.into_iter().map(|x| x * scale).collect());
    }
    gt
}

/// Gaussian language centers, redrawn (up to a fixed budget, keeping the best draw)
/// until every pair is at least `min_gap` apart so languages stay identifiable.
fn draw_centers(rng: &mut ChaCha8Rng, l: usize, r: usize, scale: f64, min_gap: f64) -> Vec<Vec<f64>> {
    let gap = |c: &[Vec<f64>]| {
        let mut g = f64::INFINITY;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let d: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                g = g.min(d.sqrt());
            }
        }
        g
    };
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..1000 {
        let c: Vec<Vec<f64>> = (0..l).map(|_| gaussian(rng, r, scale)).collect();
        let g = gap(&c);
        if best.as_ref().is_none_or(|(bg, _)| g > *bg) {
            best = Some((g, c));
        }
        if g >= min_gap {
            break;
        }
    }
    best.expect("at least one draw").1
}

/// Semantic draw of norm about `semantic_scale`, confined to the semantic block.
fn draw_semantic(spec: &SynthSpec, gt: &GroundTruth, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = gt.semantic_basis.cols();
    let coeffs = gaussian(rng, k, spec.semantic_scale / (k as f64).sqrt());
    gt.semantic_basis.mul_vec(&coeffs)
}

/// `semantic + syntax(lang) + noise`; `lang == languages.len()` is english.
fn compose(spec: &SynthSpec, gt: &GroundTruth, lang: usize, semantic: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = spec.dim;
    let r = spec.rank.max(1);
    let syntax = if lang == gt.languages.len() {
        gt.english_offset.clone().expect("english planted")
    } else {
        let jitter = gaussian(rng, r, spec.jitter_scale * spec.syntax_scale / (r as f64).sqrt());
        gt.syntax(spec, lang, &jitter)
    };
    let noise = gaussian(rng, d, spec.noise_scale / (d as f64).sqrt());
    (0..d).map(|i| semantic[i] + syntax[i] + noise[i]).collect()
}

fn make_set(lang: &str, ids: Vec<String>, rows: Vec<Vec<f64>>, dim: usize) -> Result<EmbeddingSet> {
    let m = if rows.is_empty() { Matrix::zeros(0, dim) } else { Matrix::from_rows(&rows)? };
    EmbeddingSet::new(lang, EmbeddingKind::Mean, "synthetic", ids, m)
}

fn all_languages(gt: &GroundTruth) -> Vec<(usize, String)> {
    let mut v: Vec<(usize, String)> = gt.languages.iter().cloned().enumerate().collect();
    if gt.english_offset.is_some() {
        v.push((gt.languages.len(), ENGLISH.to_string()));
    }
    v
}

/// Fresh, labeled snippets (`count` per language, english included when planted)
/// drawn from the same generative model; `stream` selects an independent draw.
pub fn sample_sets(spec: &SynthSpec, gt: &GroundTruth, count: usize, stream: u64, demean: bool) -> Result<Vec<EmbeddingSet>> {
    let mut rng = rng(spec.seed, stream);
    let mut sets = Vec::new();
    for (l, name) in all_languages(gt) {
        let mut semantics: Vec<Vec<f64>> = (0..count).map(|_| draw_semantic(spec, gt, &mut rng)).collect();
        if demean && count > 0 {
            let mut mean = vec![0.0; spec.dim];
            for s in &semantics {
                mean.iter_mut().zip(s).for_each(|(m, x)| *m += x / count as f64);
            }
            for s in &mut semantics {
                s.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
            }
        }
        let rows: Vec<Vec<f64>> = semantics.iter().map(|s| compose(spec, gt, l, s, &mut rng)).collect();
        let ids = (0..count).map(|i| format!("{name}-s{stream}-{i:05}")).collect();
        sets.push(make_set(&name, ids, rows, spec.dim)?);
    }
    Ok(sets)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub estimation: EstimationSet,
    pub corpus: ParallelCorpus,
    pub truth: GroundTruth,
}

/// Draws the planted structure, a non-parallel estimation set and a fully
/// aligned parallel corpus. Bitwise deterministic in `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut truth = plant(spec);

    let est_sets = sample_sets(spec, &truth, spec.estimation_rows(), STREAM_ESTIMATION, spec.demean_semantics)?;
    let estimation = EstimationSet::new(est_sets)?;

    let mut rng = rng(spec.seed, STREAM_CORPUS);
    let concept_ids: Vec<String> = (0..spec.concepts).map(|i| format!("c{i:05}")).collect();
    let semantics: Vec<Vec<f64>> = (0..spec.concepts).map(|_| draw_semantic(spec, &truth, &mut rng)).collect();
    let langs = all_languages(&truth);
    let mut concepts: Vec<Concept> = concept_ids
        .iter()
        .map(|id| Concept {
            id: id.clone(),
            snippets: BTreeMap::new(),
        })
        .collect();
    let mut sets = Vec::new();
    for (l, name) in &langs {
        let rows: Vec<Vec<f64>> = semantics.iter().map(|s| compose(spec, &truth, *l, s, &mut rng)).collect();
        let ids: Vec<String> = (0..spec.concepts).map(|i| format!("{name}-{i:05}")).collect();
        for (c, id) in concepts.iter_mut().zip(&ids) {
            c.snippets.insert(name.clone(), id.clone());
        }
        sets.push(make_set(name, ids, rows, spec.dim)?);
    }
    let corpus = ParallelCorpus::new(sets, concepts)?;
    truth.semantics = concept_ids.into_iter().zip(semantics).collect();
    Ok(SynthOutput {
        estimation,
        corpus,
        truth,
    })
}

/// Retrieval using the planted semantic vectors alone: the upper bound for any removal method.
pub fn ground_truth_mrr(corpus: &ParallelCorpus, truth: &GroundTruth, opts: &EvalOptions) -> Result<RetrievalReport> {
    let mut by_snippet: BTreeMap<(&str, &str), &str> = BTreeMap::new();
    for c in corpus.concepts() {
        for (lang, id) in &c.snippets {
            by_snippet.insert((lang.as_str(), id.as_str()), c.id.as_str());
        }
    }
    let mut sets = Vec::new();
    for set in corpus.sets() {
        let mut rows = Vec::with_capacity(set.len());
        for id in set.ids() {
            let concept = by_snippet
                .get(&(set.language(), id.as_str()))
                .ok_or_else(|| validation(format!("snippet '{id}' belongs to no concept")))?;
            let a = truth
                .semantics
                .get(*concept)
                .ok_or_else(|| validation(format!("no planted semantics for concept '{concept}'")))?;
            rows.push(a.clone());
        }
        sets.push(set.with_vectors(Matrix::from_rows(&rows)?)?);
    }
    evaluate(&corpus.with_sets(sets)?, None, opts)
}
