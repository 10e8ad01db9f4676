use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embx::{read_embx, write_embx};
use crate::embedding::{Concept, EmbeddingSet, EstimationSet, ParallelCorpus};
use crate::error::{validation, LaceError, Result};

pub const CORPUS_MANIFEST_VERSION: u32 = 1;

/// `manifest.json` of a parallel corpus. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub languages: BTreeMap<String, PathBuf>,
    pub concepts: Vec<Concept>,
}

pub fn read_parallel_corpus(manifest_path: impl AsRef<Path>) -> Result<ParallelCorpus> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path)?;
    let manifest: CorpusManifest = serde_json::from_str(&text)
        .map_err(|e| LaceError::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.version != CORPUS_MANIFEST_VERSION {
        return Err(LaceError::Format(format!(
            "unsupported corpus manifest version {}",
            manifest.version
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut sets = Vec::with_capacity(manifest.languages.len());
    for (lang, rel) in &manifest.languages {
        let set = read_embx(base.join(rel))?;
        if set.language() != lang {
            return Err(validation(format!(
                "manifest maps '{lang}' to {} which holds language '{}'",
                rel.display(),
                set.language()
            )));
        }
        sets.push(set);
    }
    ParallelCorpus::new(sets, manifest.concepts)
}

/// Writes `<lang>.embx` for every language plus `manifest.json` into `dir`
/// and returns the manifest path.
pub fn write_parallel_corpus(corpus: &ParallelCorpus, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut languages = BTreeMap::new();
    for set in corpus.sets() {
        let file = PathBuf::from(format!("{}.embx", set.language()));
        write_embx(set, dir.join(&file))?;
        languages.insert(set.language().to_string(), file);
    }
    let manifest = CorpusManifest {
        version: CORPUS_MANIFEST_VERSION,
        languages,
        concepts: corpus.concepts().to_vec(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// Loads every `*.embx` / `*.jsonl` file of a directory (sorted by name) as one estimation set.
pub fn read_estimation_dir(dir: impl AsRef<Path>) -> Result<EstimationSet> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("embx") | Some("jsonl")
                )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(validation(format!("{} contains no .embx or .jsonl files", dir.display())));
    }
    let sets = files.iter().map(read_embx).collect::<Result<Vec<EmbeddingSet>>>()?;
    EstimationSet::new(sets)
}

pub fn write_estimation_dir(est: &EstimationSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for set in est.iter() {
        write_embx(set, dir.join(format!("{}.embx", set.language())))?;
    }
    Ok(())
}
