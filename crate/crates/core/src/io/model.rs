use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::components::{ComponentModel, CsLrdMode, FitMetadata, Method, Structure};
use crate::error::{LaceError, Result};
use crate::linalg::{Matrix, OrthonormalBasis};

const MODEL_FORMAT: &str = "lace-model";
const MODEL_VERSION: u32 = 1;

/// Orthonormality / orthogonality tolerance applied when loading a model.
pub const MODEL_LOAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// First line of a model file; the blobs follow as little-endian `f64`, row-major, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cs_lrd_mode: Option<CsLrdMode>,
    pub languages: Vec<String>,
    pub metadata: FitMetadata,
    pub blobs: Vec<BlobSpec>,
}

fn push_blob(specs: &mut Vec<BlobSpec>, payload: &mut Vec<u8>, name: String, m: &Matrix) {
    specs.push(BlobSpec {
        name,
        rows: m.rows(),
        cols: m.cols(),
    });
    for v in m.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_model(model: &ComponentModel) -> Result<Vec<u8>> {
    let mut blobs = Vec::new();
    let mut payload = Vec::new();
    let mut cs_lrd_mode = None;
    match model.structure() {
        Structure::Centering { means } => {
            for (lang, mean) in model.languages().iter().zip(means) {
                let m = Matrix::new(1, mean.len(), mean.clone())?;
                push_blob(&mut blobs, &mut payload, format!("mean:{lang}"), &m);
            }
        }
        Structure::Lrd { bases } => {
            for (lang, basis) in model.languages().iter().zip(bases) {
                push_blob(&mut blobs, &mut payload, format!("basis:{lang}"), basis.columns());
            }
        }
        Structure::CsLrd {
            mode,
            basis,
            common_mean,
            gammas,
        } => {
            cs_lrd_mode = Some(*mode);
            push_blob(&mut blobs, &mut payload, "shared_basis".into(), basis.columns());
            let m = Matrix::new(1, common_mean.len(), common_mean.clone())?;
            push_blob(&mut blobs, &mut payload, "common_mean".into(), &m);
            push_blob(&mut blobs, &mut payload, "gammas".into(), gammas);
        }
    }
    let manifest = ModelManifest {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        method: model.method(),
        dim: model.dim(),
        rank: model.rank(),
        cs_lrd_mode,
        languages: model.languages().to_vec(),
        metadata: model.metadata().clone(),
        blobs,
    };
    let mut out = serde_json::to_vec(&manifest)?;
    out.push(b'\n');
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn write_model(model: &ComponentModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ComponentModel> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_model(&bytes).map_err(|e| match e {
        LaceError::Format(m) => LaceError::Format(format!("{}: {m}", path.display())),
        LaceError::Corruption(m) => LaceError::Corruption(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn decode_model(bytes: &[u8]) -> Result<ComponentModel> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LaceError::Format("model file has no manifest line".into()))?;
    let manifest: ModelManifest = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| LaceError::Format(format!("bad model manifest: {e}")))?;
    if manifest.format != MODEL_FORMAT || manifest.version != MODEL_VERSION {
        return Err(LaceError::Format(format!(
            "unsupported model format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let payload = &bytes[newline + 1..];
    let expected: usize = manifest.blobs.iter().map(|b| b.rows * b.cols * 8).sum();
    if payload.len() != expected {
        return Err(LaceError::Format(format!(
            "model payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut blobs = Vec::with_capacity(manifest.blobs.len());
    let mut offset = 0;
    for spec in &manifest.blobs {
        let n = spec.rows * spec.cols;
        let data: Vec<f64> = payload[offset..offset + n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        offset += n * 8;
        let m = Matrix::new(spec.rows, spec.cols, data)
            .map_err(|e| LaceError::Corruption(format!("blob '{}': {e}", spec.name)))?;
        blobs.push((spec.name.clone(), m));
    }

    let d = manifest.dim;
    let langs = &manifest.languages;
    let take = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
        let (_, m) = blobs
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| LaceError::Format(format!("missing blob '{name}'")))?;
        if m.rows() != rows || m.cols() != cols {
            return Err(LaceError::Format(format!(
                "blob '{name}' is {}x{}, expected {rows}x{cols}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(m.clone())
    };
    let basis = |name: &str, m: Matrix| -> Result<OrthonormalBasis> {
        OrthonormalBasis::with_tolerance(m, MODEL_LOAD_TOL)
            .map_err(|e| LaceError::Corruption(format!("blob '{name}': {e}")))
    };

    let expected_names: Vec<String>;
    let structure = match manifest.method {
        Method::Centering => {
            if manifest.rank.is_some() {
                return Err(LaceError::Format("centering model must not declare a rank".into()));
            }
            expected_names = langs.iter().map(|l| format!("mean:{l}")).collect();
            let means = expected_names
                .iter()
                .map(|n| take(n, 1, d).map(|m| m.into_data()))
                .collect::<Result<Vec<_>>>()?;
            Structure::Centering { means }
        }
        Method::Lrd => {
            let r = manifest
                .rank
                .ok_or_else(|| LaceError::Format("lrd model must declare a rank".into()))?;
            expected_names = langs.iter().map(|l| format!("basis:{l}")).collect();
            let bases = expected_names
                .iter()
                .map(|n| take(n, d, r).and_then(|m| basis(n, m)))
                .collect::<Result<Vec<_>>>()?;
            Structure::Lrd { bases }
        }
        Method::CsLrd => {
            let r = manifest
                .rank
                .ok_or_else(|| LaceError::Format("cs_lrd model must declare a rank".into()))?;
            let mode = manifest
                .cs_lrd_mode
                .ok_or_else(|| LaceError::Format("cs_lrd model must declare its mode".into()))?;
            expected_names = vec!["shared_basis".into(), "common_mean".into(), "gammas".into()];
            Structure::CsLrd {
                mode,
                basis: basis("shared_basis", take("shared_basis", d, r)?)?,
                common_mean: take("common_mean", 1, d)?.into_data(),
                gammas: take("gammas", langs.len(), r)?,
            }
        }
    };
    if blobs.len() != expected_names.len() {
        let extra: Vec<&str> = blobs
            .iter()
            .map(|(n, _)| n.as_str())
            .filter(|n| !expected_names.iter().any(|e| e == n))
            .collect();
        return Err(LaceError::Format(format!(
            "unexpected blobs for a {} model: {}",
            manifest.method,
            extra.join(", ")
        )));
    }
    ComponentModel::from_parts_with_tolerance(
        manifest.languages,
        d,
        structure,
        manifest.metadata,
        MODEL_LOAD_TOL,
    )
    .map_err(|e| match e {
        LaceError::Validation(m) if m.contains("orthogonal") => LaceError::Corruption(m),
        LaceError::Validation(m) => LaceError::Format(m),
        other => other,
    })
}
