//! Run manifests: everything needed to rerun a command and check its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::Command;

pub const RUN_MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub schema: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub argv: Vec<String>,
    pub command: &'a Command,
    /// Worker threads actually used; outputs do not depend on it.
    pub threads: usize,
    pub seeds: Vec<u64>,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub warnings: Vec<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

/// Hashes a file, or every file below a directory (sorted, skipping `exclude`).
pub fn fingerprint(path: &Path, exclude: Option<&Path>) -> Vec<FileRecord> {
    let mut out = Vec::new();
    collect(path, exclude, &mut out);
    out
}

fn collect(path: &Path, exclude: Option<&Path>, out: &mut Vec<FileRecord>) {
    if exclude == Some(path) {
        return;
    }
    if path.is_dir() {
        let Ok(rd) = fs::read_dir(path) else { return };
        let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for e in entries {
            collect(&e, exclude, out);
        }
    } else if let Ok(bytes) = fs::read(path) {
        out.push(FileRecord {
            path: path.to_path_buf(),
            bytes: bytes.len() as u64,
            sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
        });
    }
}
