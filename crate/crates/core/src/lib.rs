//! Removal of language-specific structure from multilingual code embeddings,
//! with the retrieval and probing harness used to measure its effect.

pub mod components;
pub mod embedding;
pub mod error;
pub mod io;
pub mod linalg;
pub mod probe;
pub mod retrieval;
pub mod synth;

pub use components::{apply, apply_set, ComponentModel, CsLrdMode, Method};
pub use embedding::{Concept, EmbeddingKind, EmbeddingSet, EstimationSet, ParallelCorpus};
pub use error::{LaceError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
