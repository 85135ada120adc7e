//! Shared document model, tokenizer and run manifests.

mod document;
mod io;
mod manifest;
mod tokenize;

pub use document::{Document, Source};
pub use io::{
    load_corpus, read_corpus, write_corpus, CorpusError, CorpusReader, CorpusWriter, LoadedCorpus,
    LineError,
};
pub use manifest::{validate_manifest, RunManifest, SourceEntry, StageConfig, ValidationReport, Violation};
pub use tokenize::{tokenize, TokenSequence, TokenizerKind, TokenizerSpec};
