//! On-disk formats.
//!
//! * **EMBX v1**: one UTF-8 JSON manifest line (`version`, `dim`, `count`,
//!   `language`, `kind`, `model_name`, `ids`, optional `removal`) terminated
//!   by `\n`, then `count * dim` little-endian `f32` values in row-major order.
//! * **JSONL fallback**: one `{"id": .., "lang": .., "vec": [..]}` object per
//!   line, for hand-written fixtures. Values are rounded to `f32` on load so
//!   both formats describe the same set.
//! * **corpus manifest**: JSON mapping language to an EMBX path plus a concept table.
//! * **model file**: a JSON manifest line followed by little-endian `f64` blobs.

mod corpus;
mod embx;
mod model;

pub use corpus::{
    read_estimation_dir, read_parallel_corpus, write_estimation_dir, write_parallel_corpus,
    CorpusManifest, CORPUS_MANIFEST_VERSION,
};
pub use embx::{decode_embx, encode_embx, read_embx, write_embx, EmbxManifest, EMBX_VERSION};
pub use model::{decode_model, encode_model, read_model, write_model, ModelManifest, MODEL_LOAD_TOL};
