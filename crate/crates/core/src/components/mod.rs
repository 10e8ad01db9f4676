//! Language-specific component models and their removal.
//!
//! An embedding is treated as `e = e_s + e_a`: a language-specific part `e_s`
//! and a language-agnostic remainder `e_a`. Each model estimates `e_s` from a
//! non-parallel estimation set:
//!
//! * **centering**: `e_s` is the language mean `m_l`, so `e_a = e - m_l`;
//! * **lrd**: `e_s` lives in a per-language rank-`r` subspace `V_l`, so
//!   `e_a = e - V_l V_l^T e`;
//! * **cs_lrd**: `e_s` lives in one subspace `M_s` shared by all languages,
//!   fitted on the language means under `m_c ⊥ colspan(M_s)`, so
//!   `e_a = e - M_s M_s^T e` for any language, including unseen ones.

mod fit;

pub use fit::{clamp_rank, fit, fit_centering, fit_clamped, fit_cs_lrd, fit_lrd, cs_lrd_objective, FitOptions};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{validation, LaceError, Result};
use crate::linalg::{dot, norm, Matrix, OrthonormalBasis};

/// Default LRD rank.
pub const DEFAULT_LRD_RANK: usize = 10;
/// Default CS-LRD rank.
pub const DEFAULT_CS_LRD_RANK: usize = 9;
/// Alternating-minimization stopping rule for CS-LRD.
pub const CS_LRD_TOL: f64 = 1e-10;
pub const CS_LRD_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Centering,
    Lrd,
    CsLrd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Centering => "centering",
            Method::Lrd => "lrd",
            Method::CsLrd => "cs_lrd",
        }
    }

    pub fn default_rank(self) -> Option<usize> {
        match self {
            Method::Centering => None,
            Method::Lrd => Some(DEFAULT_LRD_RANK),
            Method::CsLrd => Some(DEFAULT_CS_LRD_RANK),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = LaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centering" => Ok(Method::Centering),
            "lrd" => Ok(Method::Lrd),
            "cs-lrd" | "cs_lrd" => Ok(Method::CsLrd),
            other => Err(validation(format!("unknown method '{other}'"))),
        }
    }
}

/// What CS-LRD factorizes: the `d x l` matrix of language means, or all
/// per-language mean-centered embeddings pooled together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CsLrdMode {
    #[default]
    Means,
    Pooled,
}

impl FromStr for CsLrdMode {
    type Err = LaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "means" => Ok(CsLrdMode::Means),
            "pooled" => Ok(CsLrdMode::Pooled),
            other => Err(validation(format!("unknown cs-lrd mode '{other}'"))),
        }
    }
}

impl fmt::Display for CsLrdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsLrdMode::Means => "means",
            CsLrdMode::Pooled => "pooled",
        })
    }
}

/// Whether `apply` returns the residual (the default) or the projection onto
/// the fitted subspace. The latter only exists for comparison experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    #[default]
    Remove,
    ProjectOnto,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    /// One mean per language, aligned with `ComponentModel::languages`.
    Centering { means: Vec<Vec<f64>> },
    /// One rank-`r` basis per language.
    Lrd { bases: Vec<OrthonormalBasis> },
    /// A shared basis `M_s`, a common mean `m_c ⊥ M_s` and per-language coefficients (`l x r`).
    CsLrd {
        mode: CsLrdMode,
        basis: OrthonormalBasis,
        common_mean: Vec<f64>,
        gammas: Matrix,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    /// Alternating-minimization iterations (cs_lrd only).
    #[serde(default)]
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub converged: bool,
    /// Objective per iterate; entry 0 is the center-then-SVD initializer.
    #[serde(default)]
    pub objective_trace: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub estimation_sizes: BTreeMap<String, usize>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentModel {
    languages: Vec<String>,
    dim: usize,
    structure: Structure,
    metadata: FitMetadata,
}

impl ComponentModel {
    /// Assembles a model, checking every structural invariant with `tol`
    /// as the tolerance for the `m_c ⊥ M_s` constraint.
    pub fn from_parts(
        languages: Vec<String>,
        dim: usize,
        structure: Structure,
        metadata: FitMetadata,
    ) -> Result<Self> {
        Self::from_parts_with_tolerance(languages, dim, structure, metadata, 1e-8)
    }

    pub(crate) fn from_parts_with_tolerance(
        languages: Vec<String>,
        dim: usize,
        structure: Structure,
        metadata: FitMetadata,
        tol: f64,
    ) -> Result<Self> {
        if languages.is_empty() {
            return Err(validation("component model has no languages"));
        }
        let mut sorted = languages.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != languages.len() {
            return Err(validation("component model languages are not distinct"));
        }
        let l = languages.len();
        match &structure {
            Structure::Centering { means } => {
                if means.len() != l || means.iter().any(|m| m.len() != dim) {
                    return Err(validation("centering model needs one d-dimensional mean per language"));
                }
            }
            Structure::Lrd { bases } => {
                if bases.len() != l || bases.iter().any(|b| b.dim() != dim) {
                    return Err(validation("lrd model needs one basis in R^d per language"));
                }
                if bases.windows(2).any(|w| w[0].rank() != w[1].rank()) {
                    return Err(validation("lrd bases must share one rank"));
                }
            }
            Structure::CsLrd {
                basis,
                common_mean,
                gammas,
                ..
            } => {
                if basis.dim() != dim || common_mean.len() != dim {
                    return Err(validation("cs_lrd basis and common mean must live in R^d"));
                }
                if gammas.rows() != l || gammas.cols() != basis.rank() {
                    return Err(validation(format!(
                        "cs_lrd gammas must be {l}x{}, got {}x{}",
                        basis.rank(),
                        gammas.rows(),
                        gammas.cols()
                    )));
                }
                let scale = norm(common_mean).max(1.0);
                for j in 0..basis.rank() {
                    let overlap = dot(common_mean, &basis.column(j)).abs();
                    if overlap > tol * scale {
                        return Err(validation(format!(
                            "common mean is not orthogonal to shared basis column {j} (|<m_c, M_s[:,{j}]>| = {overlap:.3e})"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            languages,
            dim,
            structure,
            metadata,
        })
    }

    pub fn method(&self) -> Method {
        match self.structure {
            Structure::Centering { .. } => Method::Centering,
            Structure::Lrd { .. } => Method::Lrd,
            Structure::CsLrd { .. } => Method::CsLrd,
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match &self.structure {
            Structure::Centering { .. } => None,
            Structure::Lrd { bases } => Some(bases.first().map_or(0, |b| b.rank())),
            Structure::CsLrd { basis, .. } => Some(basis.rank()),
        }
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn metadata(&self) -> &FitMetadata {
        &self.metadata
    }

    pub fn push_warning(&mut self, warning: impl Into<String>) {
        self.metadata.warnings.push(warning.into());
    }

    fn language_index(&self, language: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == language)
            .ok_or_else(|| {
                LaceError::Lookup(format!(
                    "language '{language}' is not covered by this {} model (known: {})",
                    self.method(),
                    self.languages.join(", ")
                ))
            })
    }

    /// Mean of `language` (centering models only).
    pub fn mean(&self, language: &str) -> Result<&[f64]> {
        match &self.structure {
            Structure::Centering { means } => Ok(&means[self.language_index(language)?]),
            _ => Err(validation("only centering models store per-language means")),
        }
    }

    /// Basis removed for `language` (lrd: its own, cs_lrd: the shared one).
    pub fn basis(&self, language: &str) -> Result<&OrthonormalBasis> {
        match &self.structure {
            Structure::Lrd { bases } => Ok(&bases[self.language_index(language)?]),
            Structure::CsLrd { basis, .. } => Ok(basis),
            Structure::Centering { .. } => Err(validation("centering models have no basis")),
        }
    }

    fn transform_in_place(&self, e: &mut [f64], language: &str, mode: RemovalMode) -> Result<()> {
        match &self.structure {
            Structure::Centering { means } => {
                // both readings of the removal step coincide for centering
                let m = &means[self.language_index(language)?];
                for (x, mi) in e.iter_mut().zip(m) {
                    *x -= mi;
                }
            }
            Structure::Lrd { bases } => {
                let basis = &bases[self.language_index(language)?];
                apply_basis(basis, e, mode);
            }
            Structure::CsLrd { basis, .. } => apply_basis(basis, e, mode),
        }
        Ok(())
    }
}

fn apply_basis(basis: &OrthonormalBasis, e: &mut [f64], mode: RemovalMode) {
    match mode {
        RemovalMode::Remove => basis.remove_in_place(e),
        RemovalMode::ProjectOnto => basis.project_in_place(e),
    }
}

/// Language-agnostic part of `e`, a snippet written in `language`.
pub fn apply(model: &ComponentModel, e: &[f64], language: &str) -> Result<Vec<f64>> {
    apply_with(model, e, language, RemovalMode::Remove)
}

pub fn apply_with(
    model: &ComponentModel,
    e: &[f64],
    language: &str,
    mode: RemovalMode,
) -> Result<Vec<f64>> {
    if e.len() != model.dim {
        return Err(validation(format!(
            "embedding has dimension {}, model expects {}",
            e.len(),
            model.dim
        )));
    }
    let mut out = e.to_vec();
    model.transform_in_place(&mut out, language, mode)?;
    Ok(out)
}

/// Row-wise [`apply`] over a whole set; ids and metadata are kept and the
/// set is annotated with the method used.
pub fn apply_set(model: &ComponentModel, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    apply_set_with(model, set, RemovalMode::Remove)
}

pub fn apply_set_with(
    model: &ComponentModel,
    set: &EmbeddingSet,
    mode: RemovalMode,
) -> Result<EmbeddingSet> {
    if set.dim() != model.dim {
        return Err(validation(format!(
            "set '{}' has dimension {}, model expects {}",
            set.language(),
            set.dim(),
            model.dim
        )));
    }
    let mut vectors = set.vectors().clone();
    if vectors.rows() > 0 {
        for i in 0..vectors.rows() {
            model.transform_in_place(vectors.row_mut(i), set.language(), mode)?;
        }
    } else {
        // still reject unknown languages on empty input
        if matches!(model.structure, Structure::Centering { .. } | Structure::Lrd { .. }) {
            model.language_index(set.language())?;
        }
    }
    let tag = match mode {
        RemovalMode::Remove => model.method().as_str().to_string(),
        RemovalMode::ProjectOnto => format!("{}_projection", model.method()),
    };
    Ok(set.with_vectors(vectors)?.with_removal(Some(tag)))
}
