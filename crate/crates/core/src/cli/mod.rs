//! Subcommand implementations and the plumbing they share.

pub mod corpus_cmds;
pub mod mixeval_cmd;
pub mod mm_cmd;
pub mod pipeline_cmd;
pub mod sft_cmd;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::Context;
use clap::Args;
use curate::corpus::{CorpusReader, Document, LineError};
use curate::endpoint::RetryPolicy;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Bad input or configuration. Maps to exit code 2; any other error is a
/// processing failure (exit code 3).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

/// Endpoint flags shared by every command that talks to a model service.
#[derive(Debug, Clone, Args)]
pub struct EndpointArgs {
    /// Per-request timeout.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Retries after the first attempt on transient errors.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long, default_value_t = 200)]
    pub retry_base_ms: u64,
}

impl EndpointArgs {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.retries,
            base_delay_ms: self.retry_base_ms,
            ..RetryPolicy::default()
        }
    }
}

/// Reads a JSONL file of any record type. Malformed lines are errors.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).map_err(|e| invalid(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("invalid {what} {}: {e}", path.display())))
}

/// Streams a corpus in chunks so large files never sit in memory whole.
/// Line-level parse errors are collected, not fatal.
pub fn for_each_chunk(
    path: &Path,
    chunk: usize,
    mut f: impl FnMut(Vec<Document>) -> anyhow::Result<()>,
) -> anyhow::Result<Vec<LineError>> {
    let reader = CorpusReader::open(path).map_err(|e| invalid(e.to_string()))?;
    let mut errors = Vec::new();
    let mut buf = Vec::with_capacity(chunk);
    for item in reader {
        match item {
            Ok(d) => {
                buf.push(d);
                if buf.len() == chunk {
                    f(std::mem::replace(&mut buf, Vec::with_capacity(chunk)))?;
                }
            }
            Err(curate::corpus::CorpusError::Parse { line, message, .. }) => {
                errors.push(LineError { line, message })
            }
            Err(e) => return Err(e.into()),
        }
    }
    if !buf.is_empty() {
        f(buf)?;
    }
    Ok(errors)
}

/// Whole-corpus read; line errors are reported on stderr.
pub fn read_docs(path: &Path) -> anyhow::Result<Vec<Document>> {
    let loaded = curate::corpus::read_corpus(path).map_err(|e| invalid(e.to_string()))?;
    for e in loaded.errors.iter().take(5) {
        eprintln!("warning: {}:{}: {}", path.display(), e.line, e.message);
    }
    if loaded.errors.len() > 5 {
        eprintln!("warning: {} more malformed lines", loaded.errors.len() - 5);
    }
    Ok(loaded.documents)
}
