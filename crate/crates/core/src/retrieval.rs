//! Cross-lingual retrieval evaluation (code2code and text2code) scored by MRR.
//!
//! Ranking is exact: every query is scored against the whole database. Ties
//! are broken by ascending snippet id, then language name.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{apply, apply_set, fit, ComponentModel, FitOptions};
use crate::embedding::{Concept, EmbeddingSet, EstimationSet, ParallelCorpus};
use crate::error::{range, validation, LaceError, Result};
use crate::linalg::{dot, norm};

/// Language name of natural-language queries in text2code corpora.
pub const ENGLISH: &str = "english";

/// Mean reciprocal rank as a percentage.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(validation("mrr of an empty rank list"));
    }
    if ranks.contains(&0) {
        return Err(validation("ranks are 1-based"));
    }
    let sum: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum();
    Ok(sum / ranks.len() as f64 * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

impl Similarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Similarity::Cosine => "cosine",
            Similarity::Dot => "dot",
        }
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Similarity {
    type Err = LaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "dot" => Ok(Similarity::Dot),
            other => Err(validation(format!("unknown similarity '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbConfig {
    Monolingual,
    SourceExcludedMultilingual,
    SourceIncludedMultilingual,
    #[serde(rename = "text2code_monolingual")]
    Text2CodeMonolingual,
    #[serde(rename = "text2code_multilingual")]
    Text2CodeMultilingual,
}

impl DbConfig {
    pub fn as_str(self) -> &'static str {
        match self {
            DbConfig::Monolingual => "monolingual",
            DbConfig::SourceExcludedMultilingual => "source_excluded_multilingual",
            DbConfig::SourceIncludedMultilingual => "source_included_multilingual",
            DbConfig::Text2CodeMonolingual => "text2code_monolingual",
            DbConfig::Text2CodeMultilingual => "text2code_multilingual",
        }
    }

    pub fn is_text2code(self) -> bool {
        matches!(self, DbConfig::Text2CodeMonolingual | DbConfig::Text2CodeMultilingual)
    }

    fn title(self) -> &'static str {
        match self {
            DbConfig::Monolingual => "Monolingual",
            DbConfig::SourceExcludedMultilingual => "Source Excluded Multilingual",
            DbConfig::SourceIncludedMultilingual => "Source Included Multilingual",
            DbConfig::Text2CodeMonolingual => "Text2Code Monolingual",
            DbConfig::Text2CodeMultilingual => "Text2Code Multilingual",
        }
    }
}

impl fmt::Display for DbConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DbConfig {
    type Err = LaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "monolingual" => Ok(DbConfig::Monolingual),
            "source_excluded" | "source_excluded_multilingual" => {
                Ok(DbConfig::SourceExcludedMultilingual)
            }
            "source_included" | "source_included_multilingual" => {
                Ok(DbConfig::SourceIncludedMultilingual)
            }
            "text2code_monolingual" => Ok(DbConfig::Text2CodeMonolingual),
            "text2code_multilingual" => Ok(DbConfig::Text2CodeMultilingual),
            other => Err(validation(format!("unknown database configuration '{other}'"))),
        }
    }
}

/// One (source, target) retrieval task. For text2code the source is [`ENGLISH`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalTask {
    pub source: String,
    pub target: String,
    pub db: DbConfig,
    pub count_any_translation_relevant: bool,
}

impl RetrievalTask {
    pub fn new(source: impl Into<String>, target: impl Into<String>, db: DbConfig) -> Self {
        RetrievalTask {
            source: source.into(),
            target: target.into(),
            db,
            count_any_translation_relevant: false,
        }
    }
}

/// A database entry: language index into `ParallelCorpus::languages()` and row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SnippetRef {
    pub lang: usize,
    pub row: usize,
}

fn code_languages(corpus: &ParallelCorpus) -> Vec<String> {
    corpus.languages().into_iter().filter(|l| l != ENGLISH).collect()
}

fn lang_index(langs: &[String], lang: &str) -> Result<usize> {
    langs
        .iter()
        .position(|l| l == lang)
        .ok_or_else(|| validation(format!("language '{lang}' is not in the corpus")))
}

/// Languages whose snippets enter the database of `task`, as indices into `langs`.
fn member_languages(langs: &[String], task: &RetrievalTask) -> Result<Vec<usize>> {
    let code: Vec<usize> = (0..langs.len()).filter(|&i| langs[i] != ENGLISH).collect();
    let target = lang_index(langs, &task.target)?;
    if task.db.is_text2code() {
        if task.source != ENGLISH {
            return Err(validation("text2code queries must be english"));
        }
        lang_index(langs, ENGLISH)?;
        if task.target == ENGLISH {
            return Err(validation("text2code target must be a code language"));
        }
        return Ok(match task.db {
            DbConfig::Text2CodeMonolingual => vec![target],
            _ => code,
        });
    }
    let source = lang_index(langs, &task.source)?;
    if source == target {
        return Err(validation("code2code source and target must differ"));
    }
    if task.source == ENGLISH || task.target == ENGLISH {
        return Err(validation("code2code tasks take code languages only"));
    }
    Ok(match task.db {
        DbConfig::Monolingual => vec![target],
        DbConfig::SourceExcludedMultilingual => code.into_iter().filter(|&i| i != source).collect(),
        _ => code,
    })
}

/// Database membership of one query: member languages minus `excluded`, with `relevant` golds.
struct Membership {
    members: Vec<usize>,
    excluded: Vec<SnippetRef>,
    relevant: Vec<SnippetRef>,
}

impl Membership {
    fn of(corpus: &ParallelCorpus, langs: &[String], task: &RetrievalTask, concept: &Concept) -> Result<Self> {
        let members = member_languages(langs, task)?;
        let target = lang_index(langs, &task.target)?;
        let own = |li: usize| -> Option<SnippetRef> {
            let lang = &langs[li];
            concept
                .snippets
                .get(lang)
                .and_then(|id| corpus.row_of(lang, id))
                .map(|row| SnippetRef { lang: li, row })
        };
        let gold = own(target).ok_or_else(|| {
            validation(format!("concept '{}' has no '{}' snippet", concept.id, task.target))
        })?;
        let query = own(lang_index(langs, &task.source)?).ok_or_else(|| {
            validation(format!("concept '{}' has no '{}' snippet", concept.id, task.source))
        })?;
        // text2code multilingual counts every aligned snippet as relevant
        let any_relevant =
            task.db == DbConfig::Text2CodeMultilingual || task.count_any_translation_relevant;
        let mut excluded = vec![query];
        let mut relevant = vec![gold];
        for &li in &members {
            if li == target {
                continue;
            }
            if let Some(s) = own(li) {
                if any_relevant {
                    relevant.push(s);
                } else {
                    excluded.push(s);
                }
            }
        }
        relevant.retain(|s| !excluded.contains(s));
        relevant.sort();
        Ok(Membership {
            members,
            excluded,
            relevant,
        })
    }

    fn database(&self, corpus: &ParallelCorpus, langs: &[String]) -> Vec<SnippetRef> {
        let mut db = Vec::new();
        for &li in &self.members {
            let n = corpus.set(&langs[li]).map_or(0, |s| s.len());
            for row in 0..n {
                let s = SnippetRef { lang: li, row };
                if !self.excluded.contains(&s) {
                    db.push(s);
                }
            }
        }
        db
    }
}

/// Database of one query; `lang` indexes `corpus.languages()`.
pub fn build_database(
    corpus: &ParallelCorpus,
    task: &RetrievalTask,
    query_concept: &Concept,
) -> Result<Vec<SnippetRef>> {
    let langs = corpus.languages();
    Membership::of(corpus, &langs, task, query_concept).map(|m| m.database(corpus, &langs))
}

fn similarity(a: &[f64], b: &[f64], sim: Similarity) -> f64 {
    match sim {
        Similarity::Dot => dot(a, b),
        Similarity::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot(a, b) / (na * nb)
            }
        }
    }
}

/// 1-based rank of `gold_id` among `db` ordered by similarity descending, ties by ascending id.
pub fn rank_of_gold(
    query: &[f64],
    db: &[(String, Vec<f64>)],
    gold_id: &str,
    sim: Similarity,
) -> Result<usize> {
    let gold = db
        .iter()
        .find(|(id, _)| id == gold_id)
        .ok_or_else(|| validation(format!("gold '{gold_id}' is not in the database")))?;
    let gs = similarity(query, &gold.1, sim);
    let ahead = db
        .iter()
        .filter(|(id, v)| {
            let s = similarity(query, v, sim);
            s > gs || (s == gs && id.as_str() < gold_id)
        })
        .count();
    Ok(ahead + 1)
}

/// Corpus vectors prepared for scoring (unit-normalised under cosine).
struct Space<'a> {
    sets: Vec<&'a EmbeddingSet>,
    vectors: Vec<Vec<Vec<f64>>>,
    sim: Similarity,
}

impl<'a> Space<'a> {
    fn new(sets: Vec<&'a EmbeddingSet>, sim: Similarity) -> Self {
        let vectors = sets
            .iter()
            .map(|s| (0..s.len()).map(|r| prepare(s.vector(r), sim)).collect())
            .collect();
        Space { sets, vectors, sim }
    }

    fn key(&self, s: SnippetRef) -> (&str, &str) {
        (self.sets[s.lang].ids()[s.row].as_str(), self.sets[s.lang].language())
    }

    /// Scores of a prepared query against every snippet, indexed `[lang][row]`.
    fn scores(&self, q: &[f64]) -> Vec<Vec<f64>> {
        self.vectors
            .iter()
            .map(|rows| rows.iter().map(|v| dot(q, v)).collect())
            .collect()
    }

    /// Rank of the first relevant entry: one plus the non-relevant entries ahead of the best relevant one.
    fn first_relevant_rank(&self, scores: &[Vec<f64>], m: &Membership) -> usize {
        let score = |s: SnippetRef| scores[s.lang][s.row];
        // a ranks ahead of b: higher score, or equal score and smaller key
        let ahead = |a: SnippetRef, b: SnippetRef| {
            let (sa, sb) = (score(a), score(b));
            sa > sb || (sa == sb && self.key(a) < self.key(b))
        };
        let mut best = m.relevant[0];
        for &g in &m.relevant[1..] {
            if ahead(g, best) {
                best = g;
            }
        }
        let mut count = 0;
        for &li in &m.members {
            for row in 0..scores[li].len() {
                let s = SnippetRef { lang: li, row };
                if ahead(s, best) && !m.excluded.contains(&s) && !m.relevant.contains(&s) {
                    count += 1;
                }
            }
        }
        count + 1
    }
}

fn prepare(v: &[f64], sim: Similarity) -> Vec<f64> {
    match sim {
        Similarity::Dot => v.to_vec(),
        Similarity::Cosine => {
            let n = norm(v);
            if n == 0.0 {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|x| x / n).collect()
            }
        }
    }
}

/// Options shared by both retrieval protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub db: DbConfig,
    pub similarity: Similarity,
    /// text2code only: also transform the english queries.
    pub transform_query: bool,
    pub count_any_translation_relevant: bool,
}

impl EvalOptions {
    pub fn new(db: DbConfig) -> Self {
        EvalOptions {
            db,
            similarity: Similarity::Cosine,
            transform_query: true,
            count_any_translation_relevant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMrr {
    pub source: String,
    pub target: String,
    pub queries: usize,
    pub mrr: f64,
}

/// MRR per pair, averaged per column (source language for code2code,
/// target language for text2code) and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrrTable {
    pub pairs: Vec<PairMrr>,
    pub columns: BTreeMap<String, f64>,
    pub average: f64,
}

impl MrrTable {
    fn from_pairs(pairs: Vec<PairMrr>, by_target: bool) -> Result<Self> {
        if pairs.is_empty() {
            return Err(validation("no (source, target) pair has an aligned query"));
        }
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for p in &pairs {
            let key = if by_target { &p.target } else { &p.source };
            groups.entry(key.clone()).or_default().push(p.mrr);
        }
        let columns = groups.into_iter().map(|(k, v)| (k, mean(&v))).collect();
        let average = mean(&pairs.iter().map(|p| p.mrr).collect::<Vec<_>>());
        Ok(MrrTable {
            pairs,
            columns,
            average,
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub task: String,
    pub db: DbConfig,
    pub similarity: Similarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub transform_query: bool,
    pub count_any_translation_relevant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub meta: ReportMeta,
    pub baseline: MrrTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformed: Option<MrrTable>,
    /// Present when translations in other languages count as relevant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub any_translation: Option<AnyTranslation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnyTranslation {
    pub baseline: MrrTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformed: Option<MrrTable>,
}

impl RetrievalReport {
    /// Transformed minus baseline average; `None` without a model.
    pub fn delta(&self) -> Option<f64> {
        self.transformed.as_ref().map(|t| t.average - self.baseline.average)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned text table: one row per method, one column per language, then the average.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.render(&mut out, &self.baseline, self.transformed.as_ref(), self.meta.db.title());
        if let Some(any) = &self.any_translation {
            out.push('\n');
            let title = format!("{} (any translation relevant)", self.meta.db.title());
            self.render(&mut out, &any.baseline, any.transformed.as_ref(), &title);
        }
        out
    }

    fn render(&self, out: &mut String, base: &MrrTable, tr: Option<&MrrTable>, title: &str) {
        let cols: Vec<&String> = base.columns.keys().collect();
        let label = match (&self.meta.method, self.meta.rank) {
            (Some(m), Some(r)) => format!("{m}(r={r})"),
            (Some(m), None) => m.clone(),
            _ => String::new(),
        };
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec![title.to_string()];
        header.extend(cols.iter().map(|c| c.to_string()));
        header.push("avg".into());
        rows.push(header);
        let mut orig = vec!["Original".to_string()];
        orig.extend(cols.iter().map(|c| format!("{:.2}", base.columns[*c])));
        orig.push(format!("{:.2}", base.average));
        rows.push(orig);
        if let Some(t) = tr {
            let mut row = vec![label];
            row.extend(cols.iter().map(|c| format!("{:.2}", t.columns[*c])));
            row.push(format!("{:.2} ({:+.2})", t.average, t.average - base.average));
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        for r in rows {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
    }
}

/// Scores every (pair, concept) query of `tasks` in `space`. Each query
/// vector is scored once and reused for all targets; accumulation follows
/// task order, so the result is independent of the thread count.
fn score_tasks(
    corpus: &ParallelCorpus,
    langs: &[String],
    tasks: &[RetrievalTask],
    space: &Space<'_>,
    query_vec: &(dyn Fn(usize, usize) -> Result<Vec<f64>> + Sync),
) -> Result<Vec<PairMrr>> {
    let concepts = corpus.concepts();
    let mut sources: Vec<&str> = tasks.iter().map(|t| t.source.as_str()).collect();
    sources.dedup();
    // one group per (source, concept): the pairs it answers
    let mut groups: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for src in &sources {
        let li = lang_index(langs, src)?;
        for (c, concept) in concepts.iter().enumerate() {
            if !concept.snippets.contains_key(*src) {
                continue;
            }
            let pairs: Vec<usize> = (0..tasks.len())
                .filter(|&p| tasks[p].source == *src && concept.snippets.contains_key(&tasks[p].target))
                .collect();
            if !pairs.is_empty() {
                groups.push((li, c, pairs));
            }
        }
    }
    let ranks: Vec<Vec<(usize, usize)>> = groups
        .par_iter()
        .map(|(li, c, pairs)| {
            let concept = &concepts[*c];
            let src = &langs[*li];
            let row = corpus
                .row_of(src, &concept.snippets[src])
                .expect("corpus resolves its own concepts");
            let scores = space.scores(&prepare(&query_vec(*li, row)?, space.sim));
            pairs
                .iter()
                .map(|&p| {
                    let m = Membership::of(corpus, langs, &tasks[p], concept)?;
                    Ok((p, space.first_relevant_rank(&scores, &m)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_pair: Vec<Vec<usize>> = vec![Vec::new(); tasks.len()];
    for (p, r) in ranks.into_iter().flatten() {
        per_pair[p].push(r);
    }
    let mut pairs = Vec::new();
    for (t, r) in tasks.iter().zip(per_pair) {
        if r.is_empty() {
            continue;
        }
        pairs.push(PairMrr {
            source: t.source.clone(),
            target: t.target.clone(),
            queries: r.len(),
            mrr: mrr(&r)?,
        });
    }
    Ok(pairs)
}

fn transformed_sets(corpus: &ParallelCorpus, model: &ComponentModel) -> Result<Vec<EmbeddingSet>> {
    corpus.sets().map(|s| apply_set(model, s)).collect()
}

fn code2code_tasks(langs: &[String], opts: &EvalOptions) -> Vec<RetrievalTask> {
    let code: Vec<&String> = langs.iter().filter(|l| *l != ENGLISH).collect();
    let mut tasks = Vec::new();
    for s in &code {
        for t in &code {
            if s != t {
                let mut task = RetrievalTask::new(s.as_str(), t.as_str(), opts.db);
                task.count_any_translation_relevant = opts.count_any_translation_relevant;
                tasks.push(task);
            }
        }
    }
    tasks
}

fn meta(task: &str, model: Option<&ComponentModel>, opts: &EvalOptions) -> ReportMeta {
    ReportMeta {
        task: task.into(),
        db: opts.db,
        similarity: opts.similarity,
        method: model.map(|m| m.method().as_str().to_string()),
        rank: model.and_then(|m| m.rank()),
        transform_query: opts.transform_query && model.is_some(),
        count_any_translation_relevant: opts.count_any_translation_relevant,
        seed: None,
    }
}

/// Every ordered pair of code languages; the query's translations outside the
/// target language are excluded from multilingual databases unless
/// `count_any_translation_relevant` is set, in which case both readings are reported.
pub fn eval_code2code(
    corpus: &ParallelCorpus,
    model: Option<&ComponentModel>,
    opts: &EvalOptions,
) -> Result<RetrievalReport> {
    if opts.db.is_text2code() {
        return Err(validation(format!("{} is not a code2code database", opts.db)));
    }
    let langs = corpus.languages();
    if code_languages(corpus).len() < 2 {
        return Err(validation("code2code needs at least two code languages"));
    }
    let transformed = model.map(|m| transformed_sets(corpus, m)).transpose()?;
    let run = |any: bool| -> Result<(MrrTable, Option<MrrTable>)> {
        let mut o = *opts;
        o.count_any_translation_relevant = any;
        let tasks = code2code_tasks(&langs, &o);
        let base_space = Space::new(corpus.sets().collect(), opts.similarity);
        let raw = |l: usize, r: usize| Ok(base_space.sets[l].vector(r).to_vec());
        let base = MrrTable::from_pairs(score_tasks(corpus, &langs, &tasks, &base_space, &raw)?, false)?;
        let tr = match &transformed {
            Some(sets) => {
                let space = Space::new(sets.iter().collect(), opts.similarity);
                let q = |l: usize, r: usize| Ok(space.sets[l].vector(r).to_vec());
                Some(MrrTable::from_pairs(score_tasks(corpus, &langs, &tasks, &space, &q)?, false)?)
            }
            None => None,
        };
        Ok((base, tr))
    };
    let (baseline, tr) = run(false)?;
    let any_translation = if opts.count_any_translation_relevant && opts.db != DbConfig::Monolingual {
        let (b, t) = run(true)?;
        Some(AnyTranslation {
            baseline: b,
            transformed: t,
        })
    } else {
        None
    };
    Ok(RetrievalReport {
        meta: meta("code2code", model, opts),
        baseline,
        transformed: tr,
        any_translation,
    })
}

/// English queries against code; code is always transformed when a model is
/// given, queries only when `transform_query` is set.
pub fn eval_text2code(
    corpus: &ParallelCorpus,
    model: Option<&ComponentModel>,
    opts: &EvalOptions,
) -> Result<RetrievalReport> {
    if !opts.db.is_text2code() {
        return Err(validation(format!("{} is not a text2code database", opts.db)));
    }
    let langs = corpus.languages();
    let english = corpus
        .set(ENGLISH)
        .ok_or_else(|| validation("text2code needs an 'english' embedding set"))?;
    let tasks: Vec<RetrievalTask> = code_languages(corpus)
        .into_iter()
        .map(|t| RetrievalTask::new(ENGLISH, t, opts.db))
        .collect();
    if tasks.is_empty() {
        return Err(validation("text2code needs at least one code language"));
    }
    let base_space = Space::new(corpus.sets().collect(), opts.similarity);
    let raw = |_: usize, r: usize| Ok(english.vector(r).to_vec());
    let baseline = MrrTable::from_pairs(score_tasks(corpus, &langs, &tasks, &base_space, &raw)?, true)?;
    let transformed = match model {
        Some(m) => {
            let sets = corpus
                .sets()
                .map(|s| if s.language() == ENGLISH { Ok(s.clone()) } else { apply_set(m, s) })
                .collect::<Result<Vec<_>>>()?;
            let space = Space::new(sets.iter().collect(), opts.similarity);
            let q = |_: usize, r: usize| {
                if opts.transform_query {
                    apply(m, english.vector(r), ENGLISH)
                } else {
                    Ok(english.vector(r).to_vec())
                }
            };
            Some(MrrTable::from_pairs(score_tasks(corpus, &langs, &tasks, &space, &q)?, true)?)
        }
        None => None,
    };
    Ok(RetrievalReport {
        meta: meta("text2code", model, opts),
        baseline,
        transformed,
        any_translation: None,
    })
}

/// Dispatches on the database configuration.
pub fn evaluate(
    corpus: &ParallelCorpus,
    model: Option<&ComponentModel>,
    opts: &EvalOptions,
) -> Result<RetrievalReport> {
    if opts.db.is_text2code() {
        eval_text2code(corpus, model, opts)
    } else {
        eval_code2code(corpus, model, opts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub size: usize,
    pub deltas: Vec<f64>,
    pub mean_delta: f64,
    /// Sample variance (n - 1 denominator; 0 for a single seed).
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub db: DbConfig,
    pub seeds: Vec<u64>,
    pub baseline_average: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} baseline avg {:.2}\n{:>8}  {:>10}  {:>10}\n",
            self.method, self.db, self.baseline_average, "size", "mean delta", "variance"
        );
        for r in &self.rows {
            out.push_str(&format!("{:>8}  {:>+10.3}  {:>10.4}\n", r.size, r.mean_delta, r.variance));
        }
        out
    }
}

/// Subsamples `size` rows per language (sorted indices, so `size = n` keeps the set unchanged).
pub fn subsample_estimation(est: &EstimationSet, size: usize, seed: u64) -> Result<EstimationSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::new();
    for set in est.iter() {
        if size == 0 || size > set.len() {
            return Err(range(format!(
                "subsample size {size} outside 1..={} for '{}'",
                set.len(),
                set.language()
            )));
        }
        let mut rows = sample(&mut rng, set.len(), size).into_vec();
        rows.sort_unstable();
        sets.push(set.select(&rows));
    }
    EstimationSet::new(sets)
}

/// Refits on subsampled estimation sets and reports the MRR delta per size and seed.
pub fn ablation_estimation_size(
    est: &EstimationSet,
    corpus: &ParallelCorpus,
    sizes: &[usize],
    seeds: &[u64],
    fit_opts: &FitOptions,
    eval_opts: &EvalOptions,
) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(validation("ablation needs at least one seed"));
    }
    if sizes.is_empty() {
        return Err(validation("ablation needs at least one size"));
    }
    let smallest = est.sizes().values().copied().min().unwrap_or(0);
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > smallest) {
        return Err(range(format!("subsample size {s} outside 1..={smallest}")));
    }
    let baseline = evaluate(corpus, None, eval_opts)?.baseline.average;
    let mut rows = Vec::with_capacity(sizes.len());
    let mut rank = None;
    for &size in sizes {
        let mut deltas = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let sub = subsample_estimation(est, size, seed)?;
            let model = fit(&sub, fit_opts)?;
            rank = model.rank();
            let report = evaluate(corpus, Some(&model), eval_opts)?;
            let avg = report.transformed.as_ref().expect("model given").average;
            deltas.push(avg - baseline);
        }
        let m = mean(&deltas);
        let variance = if deltas.len() > 1 {
            deltas.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (deltas.len() - 1) as f64
        } else {
            0.0
        };
        rows.push(AblationRow {
            size,
            deltas,
            mean_delta: m,
            variance,
        });
    }
    Ok(AblationTable {
        method: fit_opts.method.as_str().to_string(),
        rank,
        db: eval_opts.db,
        seeds: seeds.to_vec(),
        baseline_average: baseline,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingKind;
    use crate::linalg::Matrix;

    fn set(lang: &str, ids: &[&str], rows: Vec<Vec<f64>>) -> EmbeddingSet {
        EmbeddingSet::new(
            lang,
            EmbeddingKind::Mean,
            "test",
            ids.iter().map(|s| s.to_string()).collect(),
            Matrix::from_rows(&rows).unwrap(),
        )
        .unwrap()
    }

    fn concept(id: &str, pairs: &[(&str, &str)]) -> Concept {
        Concept {
            id: id.into(),
            snippets: pairs.iter().map(|(l, s)| (l.to_string(), s.to_string())).collect(),
        }
    }

    fn tiny_corpus() -> ParallelCorpus {
        let py = set("python", &["p1", "p2"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let c = set("c", &["c1", "c2"], vec![vec![1.0, 0.1], vec![0.1, 1.0]]);
        let cs = set("csharp", &["s1", "s2"], vec![vec![0.9, 0.0], vec![0.0, 0.9]]);
        let concepts = vec![
            concept("k1", &[("python", "p1"), ("c", "c1"), ("csharp", "s1")]),
            concept("k2", &[("python", "p2"), ("c", "c2"), ("csharp", "s2")]),
        ];
        ParallelCorpus::new([py, c, cs], concepts).unwrap()
    }

    #[test]
    fn mrr_golden() {
        assert_eq!(mrr(&[1, 1, 1]).unwrap(), 100.0);
        assert!((mrr(&[1, 2, 4]).unwrap() - 175.0 / 3.0).abs() < 1e-12);
        assert!(mrr(&[]).is_err());
        assert!(mrr(&[0]).is_err());
    }

    #[test]
    fn monolingual_database_is_target_language() {
        let corpus = tiny_corpus();
        let langs = corpus.languages();
        let task = RetrievalTask::new("python", "c", DbConfig::Monolingual);
        let db = build_database(&corpus, &task, &corpus.concepts()[0]).unwrap();
        let c = langs.iter().position(|l| l == "c").unwrap();
        assert_eq!(db, vec![SnippetRef { lang: c, row: 0 }, SnippetRef { lang: c, row: 1 }]);
    }

    #[test]
    fn source_included_excludes_query_and_translations() {
        let corpus = tiny_corpus();
        let langs = corpus.languages();
        let task = RetrievalTask::new("python", "c", DbConfig::SourceIncludedMultilingual);
        let db = build_database(&corpus, &task, &corpus.concepts()[0]).unwrap();
        let names: Vec<(&str, usize)> = db.iter().map(|s| (langs[s.lang].as_str(), s.row)).collect();
        assert_eq!(names, vec![("c", 0), ("c", 1), ("csharp", 1), ("python", 1)]);
    }

    #[test]
    fn tie_breaks_by_id() {
        let db = vec![
            ("a1".to_string(), vec![1.0, 0.0]),
            ("a2".to_string(), vec![0.0, 1.0]),
        ];
        let r = rank_of_gold(&[1.0, 1.0], &db, "a2", Similarity::Cosine).unwrap();
        assert_eq!(r, 2);
        assert!(rank_of_gold(&[1.0, 1.0], &db, "zz", Similarity::Dot).is_err());
    }

    #[test]
    fn perfect_corpus_scores_100() {
        let report = eval_code2code(&tiny_corpus(), None, &EvalOptions::new(DbConfig::Monolingual)).unwrap();
        assert_eq!(report.baseline.average, 100.0);
        assert_eq!(report.baseline.pairs.len(), 6);
    }

    #[test]
    fn text2code_requires_english() {
        let err = eval_text2code(&tiny_corpus(), None, &EvalOptions::new(DbConfig::Text2CodeMonolingual));
        assert!(matches!(err, Err(LaceError::Validation(_))));
    }

    #[test]
    fn db_config_parses_cli_spellings() {
        assert_eq!("source-included".parse::<DbConfig>().unwrap(), DbConfig::SourceIncludedMultilingual);
        assert_eq!("text2code-multilingual".parse::<DbConfig>().unwrap(), DbConfig::Text2CodeMultilingual);
        assert!("bogus".parse::<DbConfig>().is_err());
    }
}
