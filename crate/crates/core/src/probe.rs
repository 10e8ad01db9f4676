//! Linear language-identification probe and PCA export.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{apply_set, ComponentModel};
use crate::embedding::EmbeddingSet;
use crate::error::{range, validation, LaceError, Result};
use crate::linalg::{dot, pca, Matrix};

/// Labeled vectors; `labels[i]` indexes `languages`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub languages: Vec<String>,
    pub x: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledData {
    pub fn new(languages: Vec<String>, x: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(validation(format!("{} labels for {} rows", labels.len(), x.rows())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= languages.len()) {
            return Err(validation(format!("label {l} out of range")));
        }
        let mut sorted = languages.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != languages.len() {
            return Err(validation("probe languages must be distinct"));
        }
        Ok(LabeledData { languages, x, labels })
    }

    /// Stacks sets in the given order; each set is one class.
    pub fn from_sets(sets: &[EmbeddingSet]) -> Result<Self> {
        let first = sets.first().ok_or_else(|| validation("no embedding sets"))?;
        let dim = first.dim();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut languages = Vec::new();
        for (i, s) in sets.iter().enumerate() {
            if s.dim() != dim {
                return Err(validation(format!(
                    "set '{}' has dimension {}, expected {dim}",
                    s.language(),
                    s.dim()
                )));
            }
            languages.push(s.language().to_string());
            data.extend_from_slice(s.vectors().data());
            labels.extend(std::iter::repeat_n(i, s.len()));
        }
        let x = Matrix::new(labels.len(), dim, data)?;
        LabeledData::new(languages, x, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeHyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        ProbeHyper {
            lr: 0.1,
            epochs: 200,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression; `weights` is `l x d` and acts on raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub languages: Vec<String>,
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub hyper: ProbeHyper,
    /// Training objective (cross-entropy plus L2) before the first step and after every step.
    pub loss_trace: Vec<f64>,
    pub final_cross_entropy: f64,
}

impl ProbeModel {
    /// Argmax class; ties go to the first language.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..self.languages.len() {
            let s = dot(self.weights.row(k), x) + self.bias[k];
            if s > best_score {
                best = k;
                best_score = s;
            }
        }
        best
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Cross-entropy and its gradient for normalized inputs `xs`.
fn loss_and_grad(xs: &[Vec<f64>], labels: &[usize], w: &[Vec<f64>], b: &[f64], l2: f64) -> (f64, f64, Vec<Vec<f64>>, Vec<f64>) {
    let l = w.len();
    let d = xs.first().map_or(0, |x| x.len());
    let n = xs.len() as f64;
    let mut gw = vec![vec![0.0; d]; l];
    let mut gb = vec![0.0; l];
    let mut ce = 0.0;
    let mut z = vec![0.0; l];
    for (x, &y) in xs.iter().zip(labels) {
        for k in 0..l {
            z[k] = dot(&w[k], x) + b[k];
        }
        softmax_in_place(&mut z);
        ce -= z[y].max(f64::MIN_POSITIVE).ln();
        for k in 0..l {
            let g = z[k] - if k == y { 1.0 } else { 0.0 };
            gb[k] += g / n;
            for (gv, xv) in gw[k].iter_mut().zip(x) {
                *gv += g * xv / n;
            }
        }
    }
    ce /= n;
    let mut reg = 0.0;
    for k in 0..l {
        for (gv, wv) in gw[k].iter_mut().zip(&w[k]) {
            *gv += l2 * wv;
            reg += 0.5 * l2 * wv * wv;
        }
    }
    (ce, ce + reg, gw, gb)
}

/// Full-batch gradient descent from zero weights. Inputs are centered and
/// divided by one global scale (their RMS distance to the mean) so the fixed
/// learning rate is stable whatever the embedding norm; the returned weights
/// are folded back to act on raw inputs.
pub fn train_probe(train: &LabeledData, hyper: &ProbeHyper) -> Result<ProbeModel> {
    let l = train.languages.len();
    if l < 2 {
        return Err(validation("probe needs at least two languages"));
    }
    for k in 0..l {
        if !train.labels.contains(&k) {
            return Err(validation(format!(
                "probe training data has no '{}' samples",
                train.languages[k]
            )));
        }
    }
    if !(hyper.lr > 0.0 && hyper.lr.is_finite()) || hyper.l2.is_nan() || hyper.l2 < 0.0 {
        return Err(validation("probe needs lr > 0 and l2 >= 0"));
    }
    let d = train.x.cols();
    let mean = train.x.column_means();
    let mut ss = 0.0;
    for row in train.x.iter_rows() {
        ss += row.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>();
    }
    let rms = (ss / train.len() as f64).sqrt();
    let scale = if rms > 0.0 { rms } else { 1.0 };
    let xs: Vec<Vec<f64>> = train
        .x
        .iter_rows()
        .map(|r| r.iter().zip(&mean).map(|(a, m)| (a - m) / scale).collect())
        .collect();

    let mut w = vec![vec![0.0; d]; l];
    let mut b = vec![0.0; l];
    let (mut ce, mut obj, mut gw, mut gb) = loss_and_grad(&xs, &train.labels, &w, &b, hyper.l2);
    let mut trace = vec![obj];
    for _ in 0..hyper.epochs {
        for k in 0..l {
            for (wv, g) in w[k].iter_mut().zip(&gw[k]) {
                *wv -= hyper.lr * g;
            }
            b[k] -= hyper.lr * gb[k];
        }
        (ce, obj, gw, gb) = loss_and_grad(&xs, &train.labels, &w, &b, hyper.l2);
        trace.push(obj);
    }
    if !obj.is_finite() {
        return Err(validation("probe training diverged"));
    }
    // fold normalization: w (x - mu) / s + b == (w / s) x + (b - w mu / s)
    let mut weights = Vec::with_capacity(l * d);
    let mut bias = Vec::with_capacity(l);
    for k in 0..l {
        let wk: Vec<f64> = w[k].iter().map(|v| v / scale).collect();
        bias.push(b[k] - dot(&wk, &mean));
        weights.extend(wk);
    }
    Ok(ProbeModel {
        languages: train.languages.clone(),
        weights: Matrix::new(l, d, weights)?,
        bias,
        hyper: *hyper,
        loss_trace: trace,
        final_cross_entropy: ce,
    })
}

/// Confusion counts, `[true][predicted]` in model language order.
pub fn confusion(model: &ProbeModel, test: &LabeledData) -> Result<Vec<Vec<usize>>> {
    if test.is_empty() {
        return Err(validation("empty probe test set"));
    }
    if test.x.cols() != model.weights.cols() {
        return Err(validation(format!(
            "probe expects dimension {}, test data has {}",
            model.weights.cols(),
            test.x.cols()
        )));
    }
    let map = test
        .languages
        .iter()
        .map(|lang| {
            model
                .languages
                .iter()
                .position(|m| m == lang)
                .ok_or_else(|| LaceError::Lookup(format!("probe was not trained on '{lang}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<usize> = (0..test.len())
        .into_par_iter()
        .map(|i| model.predict(test.x.row(i)))
        .collect();
    let l = model.languages.len();
    let mut m = vec![vec![0; l]; l];
    for (&y, p) in test.labels.iter().zip(preds) {
        m[map[y]][p] += 1;
    }
    Ok(m)
}

/// Accuracy as a percentage.
pub fn eval_probe(model: &ProbeModel, test: &LabeledData) -> Result<f64> {
    let m = confusion(model, test)?;
    let correct: usize = (0..m.len()).map(|i| m[i][i]).sum();
    Ok(100.0 * correct as f64 / test.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub languages: Vec<String>,
    pub chance: f64,
    pub hyper: ProbeHyper,
    pub train_size: usize,
    pub test_size: usize,
    pub entries: Vec<ProbeEntry>,
}

impl ProbeReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("probe accuracy (chance {:.2})\n", self.chance);
        let labels: Vec<String> = self
            .entries
            .iter()
            .map(|e| match e.rank {
                Some(r) => format!("{}(r={r})", e.method),
                None => e.method.clone(),
            })
            .collect();
        let w = labels.iter().map(|l| l.len()).max().unwrap_or(0).max(6);
        out.push_str(&format!("{:<w$}  {:>8}  {:>8}\n", "method", "train", "test"));
        for (l, e) in labels.iter().zip(&self.entries) {
            out.push_str(&format!("{l:<w$}  {:>8.2}  {:>8.2}\n", e.train_accuracy, e.test_accuracy));
        }
        out
    }
}

fn transform_split(sets: &[EmbeddingSet], model: Option<&ComponentModel>) -> Result<LabeledData> {
    match model {
        None => LabeledData::from_sets(sets),
        Some(m) => {
            let t = sets.iter().map(|s| apply_set(m, s)).collect::<Result<Vec<_>>>()?;
            LabeledData::from_sets(&t)
        }
    }
}

/// One probe on the raw embeddings, then one per model on removed embeddings.
/// Each model transforms each split exactly once.
pub fn run_probe(
    train: &[EmbeddingSet],
    test: &[EmbeddingSet],
    models: &[&ComponentModel],
    hyper: &ProbeHyper,
) -> Result<ProbeReport> {
    let mut entries = Vec::new();
    let mut runs: Vec<Option<&ComponentModel>> = vec![None];
    runs.extend(models.iter().map(|m| Some(*m)));
    let mut languages = Vec::new();
    let (mut train_size, mut test_size) = (0, 0);
    for model in runs {
        let tr = transform_split(train, model)?;
        let te = transform_split(test, model)?;
        if tr.languages != te.languages {
            return Err(validation("train and test splits must list the same languages in the same order"));
        }
        let probe = train_probe(&tr, hyper)?;
        entries.push(ProbeEntry {
            method: model.map_or("original".to_string(), |m| m.method().as_str().to_string()),
            rank: model.and_then(|m| m.rank()),
            train_accuracy: eval_probe(&probe, &tr)?,
            test_accuracy: eval_probe(&probe, &te)?,
            final_loss: probe.final_cross_entropy,
        });
        languages = tr.languages;
        train_size = tr.labels.len();
        test_size = te.labels.len();
    }
    Ok(ProbeReport {
        chance: 100.0 / languages.len() as f64,
        languages,
        hyper: *hyper,
        train_size,
        test_size,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaRow {
    pub id: String,
    pub lang: String,
    pub coords: Vec<f64>,
}

/// PCA of the pooled, label-blind sets; one row per snippet.
pub fn export_pca(sets: &[EmbeddingSet], k: usize) -> Result<Vec<PcaRow>> {
    let data = LabeledData::from_sets(sets)?;
    if data.len() < 2 {
        return Err(validation("pca needs at least two pooled rows"));
    }
    let max_k = (data.len() - 1).min(data.x.cols());
    if k == 0 || k > max_k {
        return Err(range(format!("pca k = {k} outside 1..={max_k}")));
    }
    let p = pca(&data.x, k)?;
    let mut rows = Vec::with_capacity(data.len());
    let mut i = 0;
    for s in sets {
        for id in s.ids() {
            rows.push(PcaRow {
                id: id.clone(),
                lang: s.language().to_string(),
                coords: p.coords.row(i).to_vec(),
            });
            i += 1;
        }
    }
    Ok(rows)
}

/// CSV with header `id,lang,pc1..pck`.
pub fn write_pca_csv(rows: &[PcaRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = rows.first().map_or(0, |r| r.coords.len());
    let mut header = vec!["id".to_string(), "lang".to_string()];
    header.extend((1..=k).map(|i| format!("pc{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.lang.clone()];
        rec.extend(r.coords.iter().map(|c| format!("{c}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pca_csv(path: impl AsRef<Path>) -> Result<Vec<PcaRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "lang" {
        return Err(LaceError::Format("pca csv header must be id,lang,pc1..".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let coords = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|e| LaceError::Format(format!("bad coordinate '{v}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(PcaRow {
            id: rec[0].to_string(),
            lang: rec[1].to_string(),
            coords,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters() -> LabeledData {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            let t = i as f64 / 100.0;
            rows.push(vec![10.0, t - 0.5]);
            labels.push(0);
            rows.push(vec![-10.0, 0.5 - t]);
            labels.push(1);
        }
        LabeledData::new(vec!["a".into(), "b".into()], Matrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn separable_clusters() {
        let data = two_clusters();
        let model = train_probe(&data, &ProbeHyper::default()).unwrap();
        assert!(eval_probe(&model, &data).unwrap() >= 99.0);
        assert!(model.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_epochs_predicts_first_class() {
        let data = two_clusters();
        let hyper = ProbeHyper { epochs: 0, ..ProbeHyper::default() };
        let model = train_probe(&data, &hyper).unwrap();
        assert_eq!(eval_probe(&model, &data).unwrap(), 50.0);
        assert_eq!(model.predict(&[-10.0, 0.0]), 0);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let data = LabeledData::new(vec!["a".into(), "b".into()], x, vec![0, 0]).unwrap();
        assert!(matches!(train_probe(&data, &ProbeHyper::default()), Err(LaceError::Validation(_))));
    }

    #[test]
    fn empty_test_set_rejected() {
        let model = train_probe(&two_clusters(), &ProbeHyper::default()).unwrap();
        let empty = LabeledData::new(vec!["a".into(), "b".into()], Matrix::zeros(0, 2), vec![]).unwrap();
        assert!(eval_probe(&model, &empty).is_err());
    }
}
