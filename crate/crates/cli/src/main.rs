mod args;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lace_core::LaceError;

use args::Cli;
use manifest::{fingerprint, RunManifest, RUN_MANIFEST_SCHEMA};
use run::RunLog;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors exit 1; --help / --version exit 0
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };

    let mut log = RunLog::default();
    let result = run::validate(&cli.command).and_then(|()| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        match cli.threads {
            Some(0) => return Err(LaceError::Validation("--threads must be at least 1".into())),
            Some(n) => pool = pool.num_threads(n),
            None => {}
        }
        pool.build_global()
            .map_err(|e| LaceError::Validation(format!("cannot start thread pool: {e}")))?;
        run::execute(&cli.command, &mut log)
    });

    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };

    let (out, is_dir) = run::primary_output(&cli.command);
    let manifest_path = cli.run_manifest.clone().unwrap_or_else(|| {
        if is_dir {
            out.join("run.json")
        } else {
            let mut s = out.as_os_str().to_owned();
            s.push(".run.json");
            PathBuf::from(s)
        }
    });
    let manifest = RunManifest {
        schema: RUN_MANIFEST_SCHEMA,
        tool: "lace",
        version: env!("CARGO_PKG_VERSION"),
        core_version: lace_core::VERSION,
        argv,
        command: &cli.command,
        threads: rayon::current_num_threads(),
        seeds: log.seeds,
        status: if code == 0 { "ok" } else { "error" },
        exit_code: code,
        error: result.as_ref().err().map(|e| e.to_string()),
        warnings: log.warnings,
        inputs: log.inputs.iter().flat_map(|p| fingerprint(p, None)).collect(),
        outputs: log.outputs.iter().flat_map(|p| fingerprint(p, Some(&manifest_path))).collect(),
    };
    // a failed run may not have an output directory to write into
    if code == 0 || manifest_path.parent().is_none_or(|p| p.as_os_str().is_empty() || p.is_dir()) {
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        if let Err(e) = std::fs::write(&manifest_path, text) {
            eprintln!("error: cannot write run manifest {}: {e}", manifest_path.display());
            return ExitCode::from(2);
        }
    }
    ExitCode::from(code as u8)
}
