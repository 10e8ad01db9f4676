use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lace_core::components::{CsLrdMode, Method};
use lace_core::retrieval::Similarity;
use lace_core::synth::SynthMode;
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "lace", version, about = "Language-component removal for code embeddings")]
pub struct Cli {
    /// Worker threads for retrieval evaluation (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "LACE_THREADS")]
    pub threads: Option<usize>,

    /// Where to write the run manifest (default: next to the primary output).
    #[arg(long, global = true, value_name = "PATH")]
    pub run_manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Estimate a language-component model from per-language embedding sets.
    Fit(FitArgs),
    /// Remove (or isolate) the language component of embedding sets.
    Apply(ApplyArgs),
    /// Retrieval evaluation on a parallel corpus.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Linear language-identification probe before and after removal.
    Probe(ProbeArgs),
    /// Project embedding sets onto their top principal components (CSV).
    Pca(PcaArgs),
    /// Generate a synthetic corpus with planted language components.
    Synth(SynthArgs),
    /// Ablation studies.
    #[command(subcommand)]
    Ablate(AblateCommand),
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct MethodArgs {
    /// centering | lrd | cs-lrd
    #[arg(long)]
    pub method: Option<Method>,
    /// Removal rank (lrd: 10, cs-lrd: 9 by default); not valid with centering.
    #[arg(long)]
    pub rank: Option<usize>,
    /// CS-LRD factorization target: means | pooled.
    #[arg(long, value_name = "MODE")]
    pub cs_lrd_mode: Option<CsLrdMode>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    /// Directory of per-language .embx / .jsonl files.
    #[arg(long, value_name = "DIR")]
    pub estimation_dir: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ApplyArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// An .embx/.jsonl file, a directory of them, or a corpus manifest (.json).
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Output file, or directory for directory / corpus input.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Keep the projection onto the language subspace instead of removing it.
    #[arg(long)]
    pub invert_removal: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalCommand {
    /// Code-to-code retrieval over every ordered language pair.
    Code2code(EvalArgs),
    /// English-to-code retrieval.
    Text2code(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Corpus manifest (.json).
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Pre-fitted model file.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Fit on the fly instead of --model (requires --estimation-dir).
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_name = "DIR")]
    pub estimation_dir: Option<PathBuf>,
    /// code2code: monolingual | source-excluded | source-included (default).
    /// text2code: monolingual (default) | multilingual.
    #[arg(long)]
    pub db: Option<String>,
    #[arg(long, default_value = "cosine")]
    pub similarity: Similarity,
    /// text2code: also transform the english queries (default on).
    #[arg(long, overrides_with = "no_transform_query")]
    pub transform_query: bool,
    #[arg(long, overrides_with = "transform_query")]
    pub no_transform_query: bool,
    /// Also report MRR with translations in other languages counted as relevant.
    #[arg(long)]
    pub count_any_translation_relevant: bool,
    /// Report JSON; the text table goes to stdout.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    /// Directory of per-language training sets.
    #[arg(long, value_name = "DIR")]
    pub train: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub test: PathBuf,
    /// Model(s) to compare against the raw embeddings; repeatable.
    #[arg(long = "model", value_name = "PATH")]
    pub models: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PcaArgs {
    /// .embx/.jsonl file or directory; repeatable.
    #[arg(long = "input", value_name = "PATH", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Apply this model before projecting.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// JSON spec; flags below override its fields.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<SynthMode>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub languages: Option<usize>,
    #[arg(long)]
    pub concepts: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub syntax_scale: Option<f64>,
    #[arg(long)]
    pub semantic_scale: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub include_english: bool,
    #[arg(long)]
    pub estimation_size: Option<usize>,
    /// Rows per language in probe/train (0 skips the probe splits).
    #[arg(long, default_value_t = 1000)]
    pub probe_train: usize,
    #[arg(long, default_value_t = 500)]
    pub probe_test: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblateCommand {
    /// Refit on subsampled estimation sets of several sizes.
    Size(AblateSizeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct AblateSizeArgs {
    #[arg(long, value_name = "DIR")]
    pub estimation_dir: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Any code2code or text2code database name.
    #[arg(long, default_value = "source-included")]
    pub db: String,
    #[arg(long, default_value = "cosine")]
    pub similarity: Similarity,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}
