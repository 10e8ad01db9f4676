use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingKind, EmbeddingSet};
use crate::error::{validation, LaceError, Result};
use crate::linalg::Matrix;

pub const EMBX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbxManifest {
    pub version: u32,
    pub dim: usize,
    pub count: usize,
    pub language: String,
    pub kind: EmbeddingKind,
    pub model_name: String,
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removal: Option<String>,
}

#[derive(Debug, Deserialize)]
struct JsonlRecord {
    id: String,
    lang: String,
    vec: Vec<f64>,
    #[serde(default)]
    kind: Option<EmbeddingKind>,
    #[serde(default)]
    model_name: Option<String>,
}

pub fn encode_embx(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let manifest = EmbxManifest {
        version: EMBX_VERSION,
        dim: set.dim(),
        count: set.len(),
        language: set.language().to_string(),
        kind: set.kind(),
        model_name: set.model_name().to_string(),
        ids: set.ids().to_vec(),
        removal: set.removal().map(str::to_string),
    };
    let mut out = serde_json::to_vec(&manifest)?;
    out.push(b'\n');
    out.reserve(set.len() * set.dim() * 4);
    for v in set.vectors().data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn write_embx(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_embx(set)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

/// Reads an EMBX v1 file, or a JSONL fallback file (detected by a first line
/// without a `version` key).
pub fn read_embx(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_embx(&bytes).map_err(|e| match e {
        LaceError::Format(msg) => LaceError::Format(format!("{}: {msg}", path.display())),
        LaceError::Validation(msg) => LaceError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_embx(bytes: &[u8]) -> Result<EmbeddingSet> {
    let newline = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
    let first = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| LaceError::Format("manifest line is not UTF-8".into()))?;
    let head: serde_json::Value = serde_json::from_str(first)
        .map_err(|e| LaceError::Format(format!("manifest line is not JSON: {e}")))?;
    if head.get("version").is_some() {
        decode_binary(first, &bytes[(newline + 1).min(bytes.len())..])
    } else {
        decode_jsonl(bytes)
    }
}

fn decode_binary(header: &str, payload: &[u8]) -> Result<EmbeddingSet> {
    let raw: serde_json::Value = serde_json::from_str(header)?;
    let version = raw.get("version").and_then(|v| v.as_u64());
    if version != Some(EMBX_VERSION as u64) {
        return Err(LaceError::Format(format!(
            "unsupported EMBX version {}",
            raw.get("version").map_or("?".to_string(), |v| v.to_string())
        )));
    }
    let manifest: EmbxManifest = serde_json::from_value(raw)
        .map_err(|e| LaceError::Format(format!("bad EMBX manifest: {e}")))?;
    if manifest.dim == 0 {
        return Err(LaceError::Format("EMBX manifest declares dim = 0".into()));
    }
    if manifest.ids.len() != manifest.count {
        return Err(LaceError::Format(format!(
            "manifest lists {} ids but count = {}",
            manifest.ids.len(),
            manifest.count
        )));
    }
    let expected = manifest.count * manifest.dim * 4;
    if payload.len() != expected {
        return Err(LaceError::Format(format!(
            "payload has {} bytes, expected {expected} bytes (count = {}, dim = {})",
            payload.len(),
            manifest.count,
            manifest.dim
        )));
    }
    let mut data = Vec::with_capacity(manifest.count * manifest.dim);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(validation(format!(
                "non-finite value in payload at row {}, column {}",
                i / manifest.dim,
                i % manifest.dim
            )));
        }
        data.push(v as f64);
    }
    let vectors = Matrix::new(manifest.count, manifest.dim, data)?;
    Ok(EmbeddingSet::new(
        manifest.language,
        manifest.kind,
        manifest.model_name,
        manifest.ids,
        vectors,
    )?
    .with_removal(manifest.removal))
}

fn decode_jsonl(bytes: &[u8]) -> Result<EmbeddingSet> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| LaceError::Format("JSONL file is not UTF-8".into()))?;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut language: Option<String> = None;
    let mut kind = None;
    let mut model_name = None;
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line)
            .map_err(|e| LaceError::Format(format!("line {}: {e}", lineno + 1)))?;
        match &language {
            None => language = Some(rec.lang.clone()),
            Some(l) if *l != rec.lang => {
                return Err(validation(format!(
                    "line {}: language '{}' differs from '{l}'",
                    lineno + 1,
                    rec.lang
                )))
            }
            _ => {}
        }
        match dim {
            None => dim = Some(rec.vec.len()),
            Some(d) if d != rec.vec.len() => {
                return Err(validation(format!(
                    "line {}: vector has length {}, expected {d}",
                    lineno + 1,
                    rec.vec.len()
                )))
            }
            _ => {}
        }
        kind = kind.or(rec.kind);
        model_name = model_name.or(rec.model_name);
        for v in &rec.vec {
            let f = *v as f32;
            if !f.is_finite() {
                return Err(validation(format!("line {}: non-finite value", lineno + 1)));
            }
            data.push(f as f64);
        }
        ids.push(rec.id);
    }
    let language = language.ok_or_else(|| LaceError::Format("JSONL file has no records".into()))?;
    let dim = dim.unwrap_or(0);
    let vectors = Matrix::new(ids.len(), dim, data)?;
    EmbeddingSet::new(
        language,
        kind.unwrap_or_default(),
        model_name.unwrap_or_default(),
        ids,
        vectors,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingSet {
        EmbeddingSet::new(
            "python",
            EmbeddingKind::Pooler,
            "tiny-encoder",
            vec!["p0".into(), "p1".into()],
            Matrix::from_rows(&[[0.5, -1.25, 3.0], [1e-3, 2.0, -0.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let set = sample();
        let bytes = encode_embx(&set).unwrap();
        let back = decode_embx(&bytes).unwrap();
        // 1e-3 is not an f32 value, so compare after f32 rounding
        assert_eq!(back.ids(), set.ids());
        for (a, b) in back.vectors().data().iter().zip(set.vectors().data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(encode_embx(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload_names_byte_counts() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64; 3]).collect();
        let set = EmbeddingSet::new(
            "c",
            EmbeddingKind::Mean,
            "",
            (0..10).map(|i| format!("c{i}")).collect(),
            Matrix::from_rows(&rows).unwrap(),
        )
        .unwrap();
        let mut bytes = encode_embx(&set).unwrap();
        bytes.truncate(bytes.len() - 12);
        let err = decode_embx(&bytes).unwrap_err();
        assert!(matches!(err, LaceError::Format(_)));
        let msg = err.to_string();
        assert!(msg.contains("108") && msg.contains("120"), "{msg}");
    }

    #[test]
    fn unknown_version() {
        let bytes = b"{\"version\":2,\"dim\":1,\"count\":0,\"language\":\"a\",\"kind\":\"mean\",\"model_name\":\"\",\"ids\":[]}\n";
        assert!(matches!(decode_embx(bytes), Err(LaceError::Format(_))));
    }

    #[test]
    fn nan_payload_is_validation_error() {
        let mut bytes = encode_embx(&sample()).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_embx(&bytes), Err(LaceError::Validation(_))));
    }

    #[test]
    fn jsonl_fallback() {
        let text = "{\"id\":\"a\",\"lang\":\"go\",\"vec\":[1.0,2.0]}\n\n{\"id\":\"b\",\"lang\":\"go\",\"vec\":[0.1,-2.0]}\n";
        let set = decode_embx(text.as_bytes()).unwrap();
        assert_eq!(set.language(), "go");
        assert_eq!(set.len(), 2);
        assert_eq!(set.vector(1)[0], 0.1f32 as f64);
        let mixed = "{\"id\":\"a\",\"lang\":\"go\",\"vec\":[1.0]}\n{\"id\":\"b\",\"lang\":\"c\",\"vec\":[1.0]}\n";
        assert!(decode_embx(mixed.as_bytes()).is_err());
    }
}
