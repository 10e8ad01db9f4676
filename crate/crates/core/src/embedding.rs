//! In-memory embedding collections: per-language sets, estimation sets and
//! concept-aligned parallel corpora.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{validation, LaceError, Result};
use crate::linalg::Matrix;

/// How a single vector was pooled out of an encoder's token states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Mean,
    Cls,
    Pooler,
}

impl EmbeddingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::Mean => "mean",
            EmbeddingKind::Cls => "cls",
            EmbeddingKind::Pooler => "pooler",
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingKind {
    type Err = LaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(EmbeddingKind::Mean),
            "cls" => Ok(EmbeddingKind::Cls),
            "pooler" => Ok(EmbeddingKind::Pooler),
            other => Err(validation(format!("unknown embedding kind '{other}'"))),
        }
    }
}

/// `n` embeddings of dimension `d` for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    language: String,
    kind: EmbeddingKind,
    model_name: String,
    /// Removal method already applied to the vectors, if any.
    removal: Option<String>,
    ids: Vec<String>,
    vectors: Matrix,
}

impl EmbeddingSet {
    pub fn new(
        language: impl Into<String>,
        kind: EmbeddingKind,
        model_name: impl Into<String>,
        ids: Vec<String>,
        vectors: Matrix,
    ) -> Result<Self> {
        let language = language.into();
        if language.is_empty() {
            return Err(validation("embedding set language id is empty"));
        }
        if ids.len() != vectors.rows() {
            return Err(validation(format!(
                "{language}: {} ids for {} vectors",
                ids.len(),
                vectors.rows()
            )));
        }
        if vectors.cols() == 0 {
            return Err(validation(format!("{language}: embedding dimension is 0")));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(validation(format!("{language}: duplicate snippet id '{id}'")));
            }
        }
        Ok(Self {
            language,
            kind,
            model_name: model_name.into(),
            removal: None,
            ids,
            vectors,
        })
    }

    pub fn with_removal(mut self, removal: Option<String>) -> Self {
        self.removal = removal;
        self
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn removal(&self) -> Option<&str> {
        self.removal.as_deref()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, row: usize) -> &[f64] {
        self.vectors.row(row)
    }

    /// Same metadata, different vectors (row count must match).
    pub fn with_vectors(&self, vectors: Matrix) -> Result<Self> {
        let mut out = Self::new(
            self.language.clone(),
            self.kind,
            self.model_name.clone(),
            self.ids.clone(),
            vectors,
        )?;
        out.removal = self.removal.clone();
        Ok(out)
    }

    /// Subset of rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            language: self.language.clone(),
            kind: self.kind,
            model_name: self.model_name.clone(),
            removal: self.removal.clone(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            vectors: self.vectors.select_rows(rows),
        }
    }
}

/// Per-language embedding sets used to fit component models. The sets need
/// not be translations of one another.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationSet {
    sets: BTreeMap<String, EmbeddingSet>,
    dim: usize,
}

impl EstimationSet {
    pub fn new(sets: impl IntoIterator<Item = EmbeddingSet>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dim = None;
        for set in sets {
            if set.is_empty() {
                return Err(validation(format!(
                    "estimation set for '{}' has no snippets",
                    set.language()
                )));
            }
            match dim {
                None => dim = Some(set.dim()),
                Some(d) if d != set.dim() => {
                    return Err(validation(format!(
                        "estimation set for '{}' has dimension {}, expected {d}",
                        set.language(),
                        set.dim()
                    )))
                }
                _ => {}
            }
            let lang = set.language().to_string();
            if map.insert(lang.clone(), set).is_some() {
                return Err(validation(format!("language '{lang}' appears twice")));
            }
        }
        if map.len() < 2 {
            return Err(validation(format!(
                "an estimation set needs at least 2 languages, got {}",
                map.len()
            )));
        }
        Ok(Self {
            sets: map,
            dim: dim.unwrap_or(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Languages in sorted order; this order indexes every fitted model.
    pub fn languages(&self) -> Vec<String> {
        self.sets.keys().cloned().collect()
    }

    pub fn get(&self, language: &str) -> Option<&EmbeddingSet> {
        self.sets.get(language)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingSet> {
        self.sets.values()
    }

    pub fn num_languages(&self) -> usize {
        self.sets.len()
    }

    pub fn sizes(&self) -> BTreeMap<String, usize> {
        self.sets.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }

    /// The estimation set restricted to a subset of languages.
    pub fn restrict(&self, languages: &[&str]) -> Result<Self> {
        let mut sets = Vec::new();
        for lang in languages {
            let set = self
                .get(lang)
                .ok_or_else(|| LaceError::Lookup(format!("language '{lang}' not in estimation set")))?;
            sets.push(set.clone());
        }
        Self::new(sets)
    }
}

/// One aligned concept: the snippet implementing it in each language that has one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub snippets: BTreeMap<String, String>,
}

/// Concept-aligned snippets across languages, used for retrieval evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    sets: BTreeMap<String, EmbeddingSet>,
    concepts: Vec<Concept>,
    rows: BTreeMap<String, HashMap<String, usize>>,
}

impl ParallelCorpus {
    pub fn new(sets: impl IntoIterator<Item = EmbeddingSet>, concepts: Vec<Concept>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dim = None;
        for set in sets {
            match dim {
                None => dim = Some(set.dim()),
                Some(d) if d != set.dim() => {
                    return Err(validation(format!(
                        "corpus set '{}' has dimension {}, expected {d}",
                        set.language(),
                        set.dim()
                    )))
                }
                _ => {}
            }
            let lang = set.language().to_string();
            if map.insert(lang.clone(), set).is_some() {
                return Err(validation(format!("corpus language '{lang}' appears twice")));
            }
        }
        let rows: BTreeMap<String, HashMap<String, usize>> = map
            .iter()
            .map(|(lang, set)| {
                let idx = set
                    .ids()
                    .iter()
                    .enumerate()
                    .map(|(i, id)| (id.clone(), i))
                    .collect();
                (lang.clone(), idx)
            })
            .collect();
        let mut concept_ids = HashSet::new();
        for concept in &concepts {
            if !concept_ids.insert(concept.id.as_str()) {
                return Err(validation(format!("duplicate concept id '{}'", concept.id)));
            }
            for (lang, snippet) in &concept.snippets {
                let index = rows.get(lang).ok_or_else(|| {
                    validation(format!(
                        "concept '{}' references language '{lang}' which has no embedding set",
                        concept.id
                    ))
                })?;
                if !index.contains_key(snippet) {
                    return Err(validation(format!(
                        "concept '{}' references unknown snippet '{snippet}' in '{lang}'",
                        concept.id
                    )));
                }
            }
        }
        Ok(Self {
            sets: map,
            concepts,
            rows,
        })
    }

    pub fn languages(&self) -> Vec<String> {
        self.sets.keys().cloned().collect()
    }

    pub fn set(&self, language: &str) -> Option<&EmbeddingSet> {
        self.sets.get(language)
    }

    pub fn sets(&self) -> impl Iterator<Item = &EmbeddingSet> {
        self.sets.values()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn dim(&self) -> usize {
        self.sets.values().next().map_or(0, |s| s.dim())
    }

    pub fn row_of(&self, language: &str, snippet: &str) -> Option<usize> {
        self.rows.get(language)?.get(snippet).copied()
    }

    /// Same concepts over replacement sets (e.g. after component removal).
    pub fn with_sets(&self, sets: impl IntoIterator<Item = EmbeddingSet>) -> Result<Self> {
        let out = Self::new(sets, self.concepts.clone())?;
        if out.languages() != self.languages() {
            return Err(validation("replacement sets change the corpus languages"));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(lang: &str, ids: &[&str], d: usize) -> EmbeddingSet {
        let vectors = Matrix::new(
            ids.len(),
            d,
            (0..ids.len() * d).map(|i| i as f64).collect(),
        )
        .unwrap();
        EmbeddingSet::new(
            lang,
            EmbeddingKind::Mean,
            "m",
            ids.iter().map(|s| s.to_string()).collect(),
            vectors,
        )
        .unwrap()
    }

    #[test]
    fn rejects_duplicate_ids() {
        let m = Matrix::zeros(2, 2);
        let r = EmbeddingSet::new("py", EmbeddingKind::Mean, "", vec!["a".into(), "a".into()], m);
        assert!(r.is_err());
    }

    #[test]
    fn estimation_set_invariants() {
        assert!(EstimationSet::new(vec![set("a", &["x"], 2)]).is_err());
        assert!(EstimationSet::new(vec![set("a", &["x"], 2), set("b", &["y"], 3)]).is_err());
        assert!(EstimationSet::new(vec![set("a", &["x"], 2), set("b", &[], 2)]).is_err());
        let est = EstimationSet::new(vec![set("b", &["y"], 2), set("a", &["x"], 2)]).unwrap();
        assert_eq!(est.languages(), vec!["a", "b"]);
    }

    #[test]
    fn corpus_rejects_dangling_reference() {
        let concept = Concept {
            id: "c1".into(),
            snippets: [("a".to_string(), "nope".to_string())].into_iter().collect(),
        };
        let err = ParallelCorpus::new(vec![set("a", &["x"], 2)], vec![concept]).unwrap_err();
        assert!(err.to_string().contains("c1"));
    }
}
