//! Python bindings: embedding sets, component models, retrieval and probing.
//!
//! Vectors cross the boundary as lists of floats. Errors map to `ValueError`
//! (validation, range), `KeyError` (unknown language or id) and `OSError`
//! (I/O, malformed or corrupted files).

use std::path::PathBuf;

use lace_core::components::{self, CsLrdMode, FitOptions, Method, RemovalMode};
use lace_core::embedding::{EmbeddingKind, EstimationSet};
use lace_core::linalg::Matrix;
use lace_core::retrieval::{self, DbConfig, EvalOptions, Similarity};
use lace_core::{io, probe, synth, LaceError};
use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: LaceError) -> PyErr {
    match e {
        LaceError::Validation(_) | LaceError::Range(_) => PyValueError::new_err(e.to_string()),
        LaceError::Lookup(_) => PyKeyError::new_err(e.to_string()),
        _ => PyOSError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for lace_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

/// One language's embeddings: ids plus an `n x d` matrix.
#[pyclass(name = "EmbeddingSet", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyEmbeddingSet {
    inner: lace_core::EmbeddingSet,
}

#[pymethods]
impl PyEmbeddingSet {
    #[new]
    #[pyo3(signature = (language, ids, vectors, kind = "mean", model_name = ""))]
    fn new(language: &str, ids: Vec<String>, vectors: Vec<Vec<f64>>, kind: &str, model_name: &str) -> PyResult<Self> {
        let kind: EmbeddingKind = kind.parse().py()?;
        if vectors.is_empty() {
            return Err(PyValueError::new_err("an embedding set needs at least one vector"));
        }
        let m = Matrix::from_rows(&vectors).py()?;
        let inner = lace_core::EmbeddingSet::new(language, kind, model_name, ids, m).py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn language(&self) -> &str {
        self.inner.language()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn removal(&self) -> Option<&str> {
        self.inner.removal()
    }

    fn vectors(&self) -> Vec<Vec<f64>> {
        rows(self.inner.vectors())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingSet(language={:?}, n={}, dim={})", self.inner.language(), self.inner.len(), self.inner.dim())
    }
}

/// Reads an EMBX or JSONL file.
#[pyfunction]
fn read_embx(path: PathBuf) -> PyResult<PyEmbeddingSet> {
    Ok(PyEmbeddingSet { inner: io::read_embx(path).py()? })
}

#[pyfunction]
fn write_embx(set: &PyEmbeddingSet, path: PathBuf) -> PyResult<()> {
    io::write_embx(&set.inner, path).py()
}

fn estimation(sets: &[PyEmbeddingSet]) -> PyResult<EstimationSet> {
    EstimationSet::new(sets.iter().map(|s| s.inner.clone())).py()
}

/// A fitted language-component model (centering, lrd or cs_lrd).
#[pyclass(name = "ComponentModel", frozen)]
pub struct PyComponentModel {
    inner: lace_core::ComponentModel,
}

#[pymethods]
impl PyComponentModel {
    /// Fits on per-language sets. With `clamp`, an over-large rank is reduced
    /// to the largest admissible one and a warning is recorded.
    #[staticmethod]
    #[pyo3(signature = (sets, method, rank = None, cs_lrd_mode = "means", clamp = true))]
    fn fit(
        py: Python<'_>,
        sets: Vec<PyRef<'_, PyEmbeddingSet>>,
        method: &str,
        rank: Option<usize>,
        cs_lrd_mode: &str,
        clamp: bool,
    ) -> PyResult<Self> {
        let sets: Vec<PyEmbeddingSet> = sets.iter().map(|s| (*s).clone()).collect();
        let est = estimation(&sets)?;
        let mut opts = FitOptions::new(method.parse::<Method>().py()?);
        opts.rank = rank;
        opts.cs_lrd_mode = cs_lrd_mode.parse::<CsLrdMode>().py()?;
        let inner = py
            .detach(|| if clamp { components::fit_clamped(&est, &opts) } else { components::fit(&est, &opts) })
            .py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: io::read_model(path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_model(&self.inner, path).py()
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method().as_str()
    }

    #[getter]
    fn rank(&self) -> Option<usize> {
        self.inner.rank()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn languages(&self) -> Vec<String> {
        self.inner.languages().to_vec()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.metadata().warnings.clone()
    }

    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.inner.metadata().objective_trace.clone()
    }

    /// Removes the language component from one vector.
    fn apply(&self, vector: Vec<f64>, language: &str) -> PyResult<Vec<f64>> {
        components::apply(&self.inner, &vector, language).py()
    }

    /// Transforms a whole set; `invert` keeps the projection instead of the residual.
    #[pyo3(signature = (set, invert = false))]
    fn apply_set(&self, set: &PyEmbeddingSet, invert: bool) -> PyResult<PyEmbeddingSet> {
        let mode = if invert { RemovalMode::ProjectOnto } else { RemovalMode::Remove };
        Ok(PyEmbeddingSet { inner: components::apply_set_with(&self.inner, &set.inner, mode).py()? })
    }

    fn __repr__(&self) -> String {
        match self.inner.rank() {
            Some(r) => format!("ComponentModel(method={:?}, rank={r}, dim={})", self.method(), self.inner.dim()),
            None => format!("ComponentModel(method={:?}, dim={})", self.method(), self.inner.dim()),
        }
    }
}

/// Aligned snippets across languages.
#[pyclass(name = "ParallelCorpus", frozen)]
pub struct PyParallelCorpus {
    inner: lace_core::ParallelCorpus,
}

#[pymethods]
impl PyParallelCorpus {
    /// Loads a corpus manifest (`manifest.json`).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: io::read_parallel_corpus(path).py()? })
    }

    /// Writes `<lang>.embx` files plus `manifest.json`; returns the manifest path.
    fn save(&self, dir: PathBuf) -> PyResult<PathBuf> {
        io::write_parallel_corpus(&self.inner, dir).py()
    }

    #[getter]
    fn languages(&self) -> Vec<String> {
        self.inner.languages()
    }

    fn set(&self, language: &str) -> PyResult<PyEmbeddingSet> {
        self.inner
            .set(language)
            .map(|s| PyEmbeddingSet { inner: s.clone() })
            .ok_or_else(|| PyKeyError::new_err(language.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.concepts().len()
    }
}

/// Retrieval result; `to_json` gives the full per-pair table.
#[pyclass(name = "RetrievalReport", frozen)]
pub struct PyRetrievalReport {
    inner: retrieval::RetrievalReport,
}

#[pymethods]
impl PyRetrievalReport {
    #[getter]
    fn baseline(&self) -> f64 {
        self.inner.baseline.average
    }

    #[getter]
    fn transformed(&self) -> Option<f64> {
        self.inner.transformed.as_ref().map(|t| t.average)
    }

    #[getter]
    fn delta(&self) -> Option<f64> {
        self.inner.delta()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("RetrievalReport(baseline={:.2}, transformed={:?})", self.baseline(), self.transformed())
    }
}

fn eval_options(db: &str, similarity: &str, transform_query: bool, any: bool) -> PyResult<EvalOptions> {
    let mut opts = EvalOptions::new(db.parse::<DbConfig>().py()?);
    opts.similarity = similarity.parse::<Similarity>().py()?;
    opts.transform_query = transform_query;
    opts.count_any_translation_relevant = any;
    Ok(opts)
}

/// MRR retrieval evaluation; the database name selects code2code or text2code.
#[pyfunction]
#[pyo3(signature = (corpus, model = None, db = "source_included", similarity = "cosine", transform_query = true, count_any_translation_relevant = false))]
fn evaluate(
    py: Python<'_>,
    corpus: &PyParallelCorpus,
    model: Option<&PyComponentModel>,
    db: &str,
    similarity: &str,
    transform_query: bool,
    count_any_translation_relevant: bool,
) -> PyResult<PyRetrievalReport> {
    let opts = eval_options(db, similarity, transform_query, count_any_translation_relevant)?;
    let m = model.map(|m| &m.inner);
    let inner = py.detach(|| retrieval::evaluate(&corpus.inner, m, &opts)).py()?;
    Ok(PyRetrievalReport { inner })
}

/// Mean reciprocal rank (x100) of 1-based ranks.
#[pyfunction]
fn mrr(ranks: Vec<usize>) -> PyResult<f64> {
    retrieval::mrr(&ranks).py()
}

/// Output of `synth`: estimation sets, a parallel corpus and the planted ground truth.
#[pyclass(name = "SynthOutput", frozen)]
pub struct PySynthOutput {
    inner: synth::SynthOutput,
    spec: synth::SynthSpec,
}

#[pymethods]
impl PySynthOutput {
    #[getter]
    fn estimation(&self) -> Vec<PyEmbeddingSet> {
        self.inner.estimation.iter().map(|s| PyEmbeddingSet { inner: s.clone() }).collect()
    }

    #[getter]
    fn corpus(&self) -> PyParallelCorpus {
        PyParallelCorpus { inner: self.inner.corpus.clone() }
    }

    /// Spec with defaults filled in, as JSON.
    fn spec_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Fresh labelled samples (independent of the corpus) from RNG stream `stream`.
    fn sample(&self, count: usize, stream: u64) -> PyResult<Vec<PyEmbeddingSet>> {
        let sets = synth::sample_sets(&self.spec, &self.inner.truth, count, stream, false).py()?;
        Ok(sets.into_iter().map(|inner| PyEmbeddingSet { inner }).collect())
    }

    /// Retrieval using the planted semantic vectors alone.
    #[pyo3(signature = (db = "source_included", similarity = "cosine"))]
    fn ground_truth_mrr(&self, db: &str, similarity: &str) -> PyResult<f64> {
        let opts = eval_options(db, similarity, true, false)?;
        Ok(synth::ground_truth_mrr(&self.inner.corpus, &self.inner.truth, &opts).py()?.baseline.average)
    }
}

/// Generates a synthetic corpus. `spec` is a JSON object; missing keys take their defaults.
#[pyfunction]
#[pyo3(signature = (spec = None))]
fn generate(py: Python<'_>, spec: Option<&str>) -> PyResult<PySynthOutput> {
    let spec: synth::SynthSpec = match spec {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("bad synth spec: {e}")))?,
        None => synth::SynthSpec::default(),
    };
    let inner = py.detach(|| synth::generate(&spec)).py()?;
    Ok(PySynthOutput { inner, spec })
}

/// Probe accuracy on raw embeddings and after each model; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (train, test, models = Vec::new(), lr = 0.1, epochs = 200, l2 = 1e-4, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn run_probe(
    py: Python<'_>,
    train: Vec<PyRef<'_, PyEmbeddingSet>>,
    test: Vec<PyRef<'_, PyEmbeddingSet>>,
    models: Vec<PyRef<'_, PyComponentModel>>,
    lr: f64,
    epochs: usize,
    l2: f64,
    seed: u64,
) -> PyResult<String> {
    let train: Vec<_> = train.iter().map(|s| s.inner.clone()).collect();
    let test: Vec<_> = test.iter().map(|s| s.inner.clone()).collect();
    let refs: Vec<&lace_core::ComponentModel> = models.iter().map(|m| &m.inner).collect();
    let hyper = probe::ProbeHyper { lr, epochs, l2, seed };
    let report = py.detach(|| probe::run_probe(&train, &test, &refs, &hyper)).py()?;
    report.to_json().py()
}

/// Top-`k` principal-component coordinates: a list of `(id, language, coords)`.
#[pyfunction]
fn export_pca(sets: Vec<PyRef<'_, PyEmbeddingSet>>, k: usize) -> PyResult<Vec<(String, String, Vec<f64>)>> {
    let sets: Vec<_> = sets.iter().map(|s| s.inner.clone()).collect();
    let rows = probe::export_pca(&sets, k).py()?;
    Ok(rows.into_iter().map(|r| (r.id, r.lang, r.coords)).collect())
}

#[pymodule]
fn lace(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", lace_core::VERSION)?;
    m.add_class::<PyEmbeddingSet>()?;
    m.add_class::<PyComponentModel>()?;
    m.add_class::<PyParallelCorpus>()?;
    m.add_class::<PyRetrievalReport>()?;
    m.add_class::<PySynthOutput>()?;
    m.add_function(wrap_pyfunction!(read_embx, m)?)?;
    m.add_function(wrap_pyfunction!(write_embx, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mrr, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_probe, m)?)?;
    m.add_function(wrap_pyfunction!(export_pca, m)?)?;
    Ok(())
}
