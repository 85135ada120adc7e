//! JSONL corpus reading and writing (plain or gzip, chosen by extension).

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Deserialize;

use super::{Document, Source};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// A malformed line, reported instead of being silently skipped.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Deserialize)]
struct RawDocument {
    #[serde(default)]
    id: Option<String>,
    text: String,
    source: Source,
    #[serde(default)]
    domain: Option<String>,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    meta: Option<BTreeMap<String, String>>,
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Streaming reader yielding documents in file order. Line numbers are
/// 1-based. Documents without an `id` get `"<file name>:<line>"`.
pub struct CorpusReader {
    path: PathBuf,
    label: String,
    lines: io::Lines<Box<dyn BufRead + Send>>,
    line_no: usize,
    seen: HashSet<String>,
}

impl CorpusReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|source| CorpusError::Open {
            path: path.clone(),
            source,
        })?;
        let inner: Box<dyn BufRead + Send> = if is_gzip(&path) {
            Box::new(BufReader::new(MultiGzDecoder::new(file)))
        } else {
            Box::new(BufReader::with_capacity(1 << 16, file))
        };
        let label = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(CorpusReader {
            path,
            label,
            lines: inner.lines(),
            line_no: 0,
            seen: HashSet::new(),
        })
    }

    fn parse(&mut self, line: &str) -> Result<Document, String> {
        let raw: RawDocument = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let id = match raw.id {
            Some(id) if id.is_empty() => return Err("empty document id".into()),
            Some(id) => id,
            None => format!("{}:{}", self.label, self.line_no),
        };
        if !self.seen.insert(id.clone()) {
            return Err(format!("duplicate document id {id:?}"));
        }
        Ok(Document {
            id,
            text: raw.text,
            source: raw.source,
            domain_label: raw.domain,
            url: raw.url,
            meta: raw.meta.unwrap_or_default(),
        })
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(source) => {
                    self.line_no += 1;
                    // Invalid UTF-8 surfaces here as InvalidData; report it
                    // against the line rather than aborting the stream.
                    if source.kind() == io::ErrorKind::InvalidData {
                        return Some(Err(CorpusError::Parse {
                            path: self.path.clone(),
                            line: self.line_no,
                            message: source.to_string(),
                        }));
                    }
                    return Some(Err(CorpusError::Io {
                        path: self.path.clone(),
                        source,
                    }));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line).map_err(|message| CorpusError::Parse {
                path: self.path.clone(),
                line: self.line_no,
                message,
            }));
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusReader, CorpusError> {
    CorpusReader::open(path)
}

/// A fully materialized corpus plus the line-level errors met on the way.
#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    pub errors: Vec<LineError>,
}

/// Reads a whole file, collecting parse errors. I/O errors abort.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    for item in load_corpus(path)? {
        match item {
            Ok(doc) => out.documents.push(doc),
            Err(CorpusError::Parse { line, message, .. }) => {
                out.errors.push(LineError { line, message })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub struct CorpusWriter {
    path: PathBuf,
    inner: Box<dyn Write + Send>,
}

impl CorpusWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|source| CorpusError::Open {
            path: path.clone(),
            source,
        })?;
        let inner: Box<dyn Write + Send> = if is_gzip(&path) {
            Box::new(GzEncoder::new(BufWriter::new(file), Compression::default()))
        } else {
            Box::new(BufWriter::with_capacity(1 << 16, file))
        };
        Ok(CorpusWriter { path, inner })
    }

    pub fn write(&mut self, doc: &Document) -> Result<(), CorpusError> {
        let line = doc.to_json_line();
        self.inner
            .write_all(line.as_bytes())
            .and_then(|_| self.inner.write_all(b"\n"))
            .map_err(|source| CorpusError::Io {
                path: self.path.clone(),
                source,
            })
    }

    pub fn finish(mut self) -> Result<(), CorpusError> {
        self.inner.flush().map_err(|source| CorpusError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn write_corpus<'a>(
    path: impl AsRef<Path>,
    docs: impl IntoIterator<Item = &'a Document>,
) -> Result<(), CorpusError> {
    let mut w = CorpusWriter::create(path)?;
    for doc in docs {
        w.write(doc)?;
    }
    w.finish()
}
