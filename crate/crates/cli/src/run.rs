use std::fs;
use std::path::{Path, PathBuf};

use lace_core::components::{apply_set_with, fit_clamped, FitOptions, Method, RemovalMode};
use lace_core::io::{
    read_embx, read_estimation_dir, read_model, read_parallel_corpus, write_embx, write_estimation_dir,
    write_model, write_parallel_corpus,
};
use lace_core::probe::{export_pca, run_probe, write_pca_csv, ProbeHyper};
use lace_core::retrieval::{ablation_estimation_size, evaluate, DbConfig, EvalOptions};
use lace_core::synth::{generate, sample_sets, SynthSpec};
use lace_core::{ComponentModel, EmbeddingSet, EstimationSet, LaceError, ParallelCorpus, Result};

use crate::args::*;

/// Side information collected while a command runs, for the run manifest.
#[derive(Debug, Default)]
pub struct RunLog {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

impl RunLog {
    fn warn(&mut self, msg: String) {
        eprintln!("WARNING: {msg}");
        self.warnings.push(msg);
    }
}

fn invalid(msg: impl Into<String>) -> LaceError {
    LaceError::Validation(msg.into())
}

/// Resolves `--method/--rank/--cs-lrd-mode`; `None` when no method was given.
pub fn fit_options(m: &MethodArgs) -> Result<Option<FitOptions>> {
    let Some(method) = m.method else {
        if m.rank.is_some() || m.cs_lrd_mode.is_some() {
            return Err(invalid("--rank and --cs-lrd-mode require --method"));
        }
        return Ok(None);
    };
    let mut opts = FitOptions::new(method);
    match (method, m.rank) {
        (Method::Centering, Some(_)) => return Err(invalid("--rank is not valid with --method centering")),
        (_, Some(0)) => return Err(LaceError::Range("--rank must be at least 1".into())),
        (_, Some(r)) => opts = opts.with_rank(r),
        _ => {}
    }
    if let Some(mode) = m.cs_lrd_mode {
        if method != Method::CsLrd {
            return Err(invalid("--cs-lrd-mode is only valid with --method cs-lrd"));
        }
        opts.cs_lrd_mode = mode;
    }
    Ok(Some(opts))
}

fn code2code_db(s: &str) -> Result<DbConfig> {
    let db: DbConfig = s.parse()?;
    if db.is_text2code() {
        return Err(invalid(format!("'{s}' is a text2code database")));
    }
    Ok(db)
}

fn text2code_db(s: &str) -> Result<DbConfig> {
    match s.replace('-', "_").as_str() {
        "monolingual" | "text2code_monolingual" => Ok(DbConfig::Text2CodeMonolingual),
        "multilingual" | "text2code_multilingual" => Ok(DbConfig::Text2CodeMultilingual),
        _ => Err(invalid(format!("unknown text2code database '{s}' (monolingual | multilingual)"))),
    }
}

fn fit_logged(est: &EstimationSet, opts: &FitOptions, log: &mut RunLog) -> Result<ComponentModel> {
    let model = fit_clamped(est, opts)?;
    for w in &model.metadata().warnings {
        log.warn(w.clone());
    }
    Ok(model)
}

/// Names the path in I/O errors, which the OS error alone does not.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        LaceError::Io(io) => LaceError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn load_model(path: &Path, log: &mut RunLog) -> Result<ComponentModel> {
    log.inputs.push(path.to_path_buf());
    at(path, read_model(path))
}

fn load_estimation(dir: &Path, log: &mut RunLog) -> Result<EstimationSet> {
    log.inputs.push(dir.to_path_buf());
    at(dir, read_estimation_dir(dir))
}

fn load_corpus(path: &Path, log: &mut RunLog) -> Result<ParallelCorpus> {
    log.inputs.push(path.to_path_buf());
    at(path, read_parallel_corpus(path))
}

fn write_text(path: &Path, text: &str, log: &mut RunLog) -> Result<()> {
    at(path, fs::write(path, text).map_err(LaceError::from))?;
    log.outputs.push(path.to_path_buf());
    Ok(())
}

fn is_set_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("embx") | Some("jsonl"))
}

/// Set files of a directory, sorted by name.
fn set_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_set_file(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(invalid(format!("{} contains no .embx or .jsonl files", dir.display())));
    }
    Ok(files)
}

/// The primary output and whether it is a directory; the run manifest defaults to a sibling of it.
pub fn primary_output(cmd: &Command) -> (&Path, bool) {
    match cmd {
        Command::Fit(a) => (&a.out, false),
        Command::Apply(a) => (&a.out, a.input.is_dir() || has_json_ext(&a.input)),
        Command::Eval(EvalCommand::Code2code(a) | EvalCommand::Text2code(a)) => (&a.out, false),
        Command::Probe(a) => (&a.out, false),
        Command::Pca(a) => (&a.out, false),
        Command::Synth(a) => (&a.out, true),
        Command::Ablate(AblateCommand::Size(a)) => (&a.out, false),
    }
}

fn has_json_ext(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()) == Some("json")
}

/// Checks flag combinations; runs before any file is touched.
pub fn validate(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Fit(a) => {
            fit_options(&a.method)?.ok_or_else(|| invalid("fit requires --method"))?;
        }
        Command::Apply(_) => {}
        Command::Eval(ec) => {
            let (a, text) = match ec {
                EvalCommand::Code2code(a) => (a, false),
                EvalCommand::Text2code(a) => (a, true),
            };
            eval_options(a, text)?;
            let fit = fit_options(&a.method)?;
            match (&a.model, &fit, &a.estimation_dir) {
                (Some(_), Some(_), _) => return Err(invalid("--model and --method are mutually exclusive")),
                (Some(_), None, Some(_)) => return Err(invalid("--estimation-dir is only used with --method")),
                (None, Some(_), None) => return Err(invalid("--method requires --estimation-dir")),
                (None, None, Some(_)) => return Err(invalid("--estimation-dir requires --method")),
                _ => {}
            }
        }
        Command::Probe(a) => {
            probe_hyper(a)?;
        }
        Command::Pca(a) => {
            if a.k == 0 {
                return Err(LaceError::Range("--k must be at least 1".into()));
            }
        }
        Command::Synth(a) => {
            if a.probe_train > 0 && a.probe_test == 0 || a.probe_train == 0 && a.probe_test > 0 {
                return Err(invalid("--probe-train and --probe-test must both be zero or both positive"));
            }
        }
        Command::Ablate(AblateCommand::Size(a)) => {
            fit_options(&a.method)?.ok_or_else(|| invalid("ablate size requires --method"))?;
            a.db.parse::<DbConfig>()?;
            if a.seeds.is_empty() {
                return Err(invalid("--seeds must not be empty"));
            }
            if a.sizes.contains(&0) {
                return Err(LaceError::Range("--sizes must be positive".into()));
            }
        }
    }
    Ok(())
}

fn eval_options(a: &EvalArgs, text2code: bool) -> Result<EvalOptions> {
    let db = match (&a.db, text2code) {
        (Some(s), false) => code2code_db(s)?,
        (Some(s), true) => text2code_db(s)?,
        (None, false) => DbConfig::SourceIncludedMultilingual,
        (None, true) => DbConfig::Text2CodeMonolingual,
    };
    if !text2code && (a.transform_query || a.no_transform_query) {
        return Err(invalid("--transform-query / --no-transform-query only apply to text2code"));
    }
    let mut opts = EvalOptions::new(db);
    opts.similarity = a.similarity;
    opts.transform_query = !a.no_transform_query;
    opts.count_any_translation_relevant = a.count_any_translation_relevant;
    Ok(opts)
}

fn probe_hyper(a: &ProbeArgs) -> Result<ProbeHyper> {
    if !(a.lr.is_finite() && a.lr > 0.0) {
        return Err(invalid("--lr must be positive"));
    }
    if !(a.l2.is_finite() && a.l2 >= 0.0) {
        return Err(invalid("--l2 must be non-negative"));
    }
    Ok(ProbeHyper {
        lr: a.lr,
        epochs: a.epochs,
        l2: a.l2,
        seed: a.seed,
    })
}

pub fn execute(cmd: &Command, log: &mut RunLog) -> Result<()> {
    match cmd {
        Command::Fit(a) => fit_cmd(a, log),
        Command::Apply(a) => apply_cmd(a, log),
        Command::Eval(EvalCommand::Code2code(a)) => eval_cmd(a, false, log),
        Command::Eval(EvalCommand::Text2code(a)) => eval_cmd(a, true, log),
        Command::Probe(a) => probe_cmd(a, log),
        Command::Pca(a) => pca_cmd(a, log),
        Command::Synth(a) => synth_cmd(a, log),
        Command::Ablate(AblateCommand::Size(a)) => ablate_cmd(a, log),
    }
}

fn fit_cmd(a: &FitArgs, log: &mut RunLog) -> Result<()> {
    let opts = fit_options(&a.method)?.expect("validated");
    let est = load_estimation(&a.estimation_dir, log)?;
    let model = fit_logged(&est, &opts, log)?;
    write_model(&model, &a.out)?;
    log.outputs.push(a.out.clone());
    println!(
        "fitted {}{} on {} languages (d = {}) -> {}",
        model.method(),
        model.rank().map_or(String::new(), |r| format!(" r={r}")),
        model.languages().len(),
        model.dim(),
        a.out.display()
    );
    Ok(())
}

fn apply_cmd(a: &ApplyArgs, log: &mut RunLog) -> Result<()> {
    let model = load_model(&a.model, log)?;
    let mode = if a.invert_removal {
        RemovalMode::ProjectOnto
    } else {
        RemovalMode::Remove
    };
    if has_json_ext(&a.input) {
        let corpus = load_corpus(&a.input, log)?;
        let sets = corpus.sets().map(|s| apply_set_with(&model, s, mode)).collect::<Result<Vec<_>>>()?;
        let out = corpus.with_sets(sets)?;
        write_parallel_corpus(&out, &a.out)?;
    } else if a.input.is_dir() {
        log.inputs.push(a.input.clone());
        let files = set_files(&a.input)?;
        fs::create_dir_all(&a.out)?;
        for f in files {
            let set = apply_set_with(&model, &read_embx(&f)?, mode)?;
            let name = f.file_stem().expect("file has a name");
            write_embx(&set, a.out.join(name).with_extension("embx"))?;
        }
    } else {
        log.inputs.push(a.input.clone());
        let set = apply_set_with(&model, &at(&a.input, read_embx(&a.input))?, mode)?;
        write_embx(&set, &a.out)?;
    }
    log.outputs.push(a.out.clone());
    Ok(())
}

fn eval_cmd(a: &EvalArgs, text2code: bool, log: &mut RunLog) -> Result<()> {
    let opts = eval_options(a, text2code)?;
    let corpus = load_corpus(&a.corpus, log)?;
    let model = match (&a.model, fit_options(&a.method)?, &a.estimation_dir) {
        (Some(p), _, _) => Some(load_model(p, log)?),
        (None, Some(fo), Some(dir)) => {
            let est = load_estimation(dir, log)?;
            Some(fit_logged(&est, &fo, log)?)
        }
        _ => None,
    };
    let report = evaluate(&corpus, model.as_ref(), &opts)?;
    write_text(&a.out, &report.to_json()?, log)?;
    print!("{}", report.to_text());
    Ok(())
}

fn probe_cmd(a: &ProbeArgs, log: &mut RunLog) -> Result<()> {
    let hyper = probe_hyper(a)?;
    log.seeds.push(a.seed);
    let train: Vec<EmbeddingSet> = load_estimation(&a.train, log)?.iter().cloned().collect();
    let test: Vec<EmbeddingSet> = load_estimation(&a.test, log)?.iter().cloned().collect();
    let models = a.models.iter().map(|p| load_model(p, log)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ComponentModel> = models.iter().collect();
    let report = run_probe(&train, &test, &refs, &hyper)?;
    write_text(&a.out, &report.to_json()?, log)?;
    print!("{}", report.to_text());
    Ok(())
}

fn pca_cmd(a: &PcaArgs, log: &mut RunLog) -> Result<()> {
    let model = a.model.as_ref().map(|p| load_model(p, log)).transpose()?;
    let mut sets = Vec::new();
    for input in &a.inputs {
        log.inputs.push(input.clone());
        let files = if input.is_dir() { at(input, set_files(input))? } else { vec![input.clone()] };
        for f in files {
            let set = at(&f, read_embx(&f))?;
            sets.push(match &model {
                Some(m) => apply_set_with(m, &set, RemovalMode::Remove)?,
                None => set,
            });
        }
    }
    let rows = export_pca(&sets, a.k)?;
    write_pca_csv(&rows, &a.out)?;
    log.outputs.push(a.out.clone());
    Ok(())
}

pub fn synth_spec(a: &SynthArgs, log: &mut RunLog) -> Result<SynthSpec> {
    let mut spec = match &a.config {
        Some(p) => {
            log.inputs.push(p.clone());
            let text = at(p, fs::read_to_string(p).map_err(LaceError::from))?;
            serde_json::from_str(&text).map_err(|e| LaceError::Format(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { spec.$f = v; } )* };
    }
    set!(mode, dim, languages, concepts, rank, seed, syntax_scale, semantic_scale, noise_scale);
    if a.include_english {
        spec.include_english = true;
    }
    if a.estimation_size.is_some() {
        spec.estimation_size = a.estimation_size;
    }
    spec.validate()?;
    Ok(spec)
}

/// Stream ids for the probe splits (0-2 are used inside `generate`).
const PROBE_TRAIN_STREAM: u64 = 10;
const PROBE_TEST_STREAM: u64 = 11;

fn synth_cmd(a: &SynthArgs, log: &mut RunLog) -> Result<()> {
    let spec = synth_spec(a, log)?;
    log.seeds.push(spec.seed);
    let out = generate(&spec)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    fs::write(a.out.join("truth.json"), serde_json::to_string(&out.truth)? + "\n")?;
    write_estimation_dir(&out.estimation, a.out.join("estimation"))?;
    write_parallel_corpus(&out.corpus, a.out.join("corpus"))?;
    if a.probe_train > 0 {
        for (name, n, stream) in [("train", a.probe_train, PROBE_TRAIN_STREAM), ("test", a.probe_test, PROBE_TEST_STREAM)] {
            let sets = sample_sets(&spec, &out.truth, n, stream, false)?;
            write_estimation_dir(&EstimationSet::new(sets)?, a.out.join("probe").join(name))?;
        }
    }
    log.outputs.push(a.out.clone());
    println!(
        "synth {} d={} languages={} concepts={} seed={} -> {}",
        spec.mode,
        spec.dim,
        spec.languages,
        spec.concepts,
        spec.seed,
        a.out.display()
    );
    Ok(())
}

fn ablate_cmd(a: &AblateSizeArgs, log: &mut RunLog) -> Result<()> {
    let fo = fit_options(&a.method)?.expect("validated");
    let mut eo = EvalOptions::new(a.db.parse()?);
    eo.similarity = a.similarity;
    log.seeds.extend(&a.seeds);
    let est = load_estimation(&a.estimation_dir, log)?;
    let corpus = load_corpus(&a.corpus, log)?;
    let table = ablation_estimation_size(&est, &corpus, &a.sizes, &a.seeds, &fo, &eo)?;
    write_text(&a.out, &(serde_json::to_string_pretty(&table)? + "\n"), log)?;
    print!("{}", table.to_text());
    Ok(())
}
