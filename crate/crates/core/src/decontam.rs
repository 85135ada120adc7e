//! Token-level n-gram benchmark decontamination.
//!
//! Every contiguous `n`-token window of every benchmark question (and,
//! by default, answer) is hashed into an index. A corpus document is
//! contaminated iff at least one of its windows is in the index. Hash
//! collisions can only cause over-removal; they never let a shared n-gram
//! through.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TokenizerSpec};
use crate::hash;

pub const DEFAULT_N: usize = 10;
pub const DEFAULT_HIT_CAP: usize = 16;
const GRAM_SEED: u64 = 0x4e47_5241_4d5f_3130;

#[derive(Debug, thiserror::Error)]
pub enum DecontamError {
    #[error("no benchmarks given")]
    NoBenchmarks,
    #[error("n must be at least 1")]
    InvalidN,
    #[error("tokenizer spec does not match the one the index was built with")]
    SpecMismatch,
    #[error("too many benchmarks ({0}); at most 65535 are supported")]
    TooManyBenchmarks(usize),
    #[error("benchmark file {path}: {message}")]
    BenchmarkFile { path: String, message: String },
    #[error("index file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed index file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub question: String,
    #[serde(default)]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Benchmark {
    pub name: String,
    pub items: Vec<BenchmarkItem>,
}

impl Benchmark {
    pub fn new(name: impl Into<String>, items: Vec<BenchmarkItem>) -> Self {
        Benchmark {
            name: name.into(),
            items,
        }
    }

    /// Reads a JSONL benchmark. The question is taken from the first of
    /// `question`, `text`, `prompt`, `problem`; the answer from `answer`,
    /// `solution`, `output`. The benchmark name is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DecontamError> {
        let path = path.as_ref();
        let err = |message: String| DecontamError::BenchmarkFile {
            path: path.display().to_string(),
            message,
        };
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let mut items = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            let pick = |keys: &[&str]| {
                keys.iter()
                    .find_map(|k| v.get(*k).and_then(|x| x.as_str()).map(str::to_string))
            };
            let question = pick(&["question", "text", "prompt", "problem"])
                .ok_or_else(|| err(format!("line {}: no question field", i + 1)))?;
            items.push(BenchmarkItem {
                question,
                answer: pick(&["answer", "solution", "output"]),
            });
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "benchmark".into());
        Ok(Benchmark { name, items })
    }
}

/// Hashes of normalized benchmark n-grams and the benchmarks each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramIndex {
    pub n: usize,
    pub spec: TokenizerSpec,
    pub benchmark_names: Vec<String>,
    grams: HashMap<u64, Vec<u16>>,
}

impl NGramIndex {
    /// Number of distinct n-grams.
    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn spec_fingerprint(&self) -> u64 {
        self.spec.fingerprint()
    }

    /// Names of the benchmarks containing the given window.
    pub fn lookup<S: AsRef<str>>(&self, window: &[S]) -> Vec<&str> {
        self.grams
            .get(&hash::hash_tokens(window, GRAM_SEED))
            .map(|ids| ids.iter().map(|&i| self.benchmark_names[i as usize].as_str()).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexOptions {
    pub n: usize,
    pub include_answers: bool,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            n: DEFAULT_N,
            include_answers: true,
        }
    }
}

pub fn build_ngram_index(
    benchmarks: &[Benchmark],
    options: IndexOptions,
    spec: &TokenizerSpec,
) -> Result<NGramIndex, DecontamError> {
    if benchmarks.is_empty() {
        return Err(DecontamError::NoBenchmarks);
    }
    if options.n == 0 {
        return Err(DecontamError::InvalidN);
    }
    if benchmarks.len() > usize::from(u16::MAX) {
        return Err(DecontamError::TooManyBenchmarks(benchmarks.len()));
    }
    let mut grams: HashMap<u64, Vec<u16>> = HashMap::new();
    for (bi, bench) in benchmarks.iter().enumerate() {
        let bi = bi as u16;
        for item in &bench.items {
            let texts = std::iter::once(item.question.as_str()).chain(
                item.answer
                    .as_deref()
                    .filter(|_| options.include_answers),
            );
            for text in texts {
                let toks = spec.tokenize(text);
                for win in toks.as_slice().windows(options.n) {
                    let ids = grams.entry(hash::hash_tokens(win, GRAM_SEED)).or_default();
                    if ids.last() != Some(&bi) {
                        ids.push(bi);
                    }
                }
            }
        }
    }
    Ok(NGramIndex {
        n: options.n,
        spec: spec.clone(),
        benchmark_names: benchmarks.iter().map(|b| b.name.clone()).collect(),
        grams,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    /// 0-based token offset of the matching window.
    pub offset: usize,
    pub benchmark: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContaminationVerdict {
    pub contaminated: bool,
    /// First hits, up to the cap.
    pub hits: Vec<Hit>,
    /// Number of matching windows.
    pub hit_count: usize,
    /// Matching windows per benchmark name.
    pub per_benchmark: BTreeMap<String, usize>,
}

pub fn check_document(
    doc: &Document,
    index: &NGramIndex,
    spec: &TokenizerSpec,
) -> Result<ContaminationVerdict, DecontamError> {
    if spec.fingerprint() != index.spec_fingerprint() {
        return Err(DecontamError::SpecMismatch);
    }
    Ok(scan(&doc.text, index, DEFAULT_HIT_CAP))
}

fn scan(text: &str, index: &NGramIndex, cap: usize) -> ContaminationVerdict {
    let mut v = ContaminationVerdict::default();
    if index.is_empty() {
        return v;
    }
    let toks = index.spec.tokenize(text);
    for (offset, win) in toks.as_slice().windows(index.n).enumerate() {
        if let Some(ids) = index.grams.get(&hash::hash_tokens(win, GRAM_SEED)) {
            v.hit_count += 1;
            for &id in ids {
                let name = &index.benchmark_names[id as usize];
                *v.per_benchmark.entry(name.clone()).or_default() += 1;
                if v.hits.len() < cap {
                    v.hits.push(Hit {
                        offset,
                        benchmark: name.clone(),
                    });
                }
            }
        }
    }
    v.contaminated = v.hit_count > 0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContaminationPolicy {
    #[default]
    DropDocument,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecontamReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub removed_ids: Vec<String>,
    /// Matching windows per benchmark, summed over removed documents.
    pub hits_per_benchmark: BTreeMap<String, usize>,
    /// Removed documents per benchmark.
    pub documents_per_benchmark: BTreeMap<String, usize>,
}

pub fn decontaminate_corpus(
    corpus: Vec<Document>,
    index: &NGramIndex,
    spec: &TokenizerSpec,
    policy: ContaminationPolicy,
) -> Result<(Vec<Document>, DecontamReport), DecontamError> {
    let ContaminationPolicy::DropDocument = policy;
    if spec.fingerprint() != index.spec_fingerprint() {
        return Err(DecontamError::SpecMismatch);
    }
    let verdicts: Vec<ContaminationVerdict> =
        corpus.par_iter().map(|d| scan(&d.text, index, 0)).collect();
    let mut report = DecontamReport {
        input_count: corpus.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(corpus.len());
    for (doc, v) in corpus.into_iter().zip(verdicts) {
        if v.contaminated {
            for (name, count) in v.per_benchmark {
                *report.hits_per_benchmark.entry(name.clone()).or_default() += count;
                *report.documents_per_benchmark.entry(name).or_default() += 1;
            }
            report.removed_ids.push(doc.id);
        } else {
            kept.push(doc);
        }
    }
    report.kept_count = kept.len();
    Ok((kept, report))
}

const INDEX_MAGIC: &[u8; 4] = b"CNGX";
const INDEX_VERSION: u16 = 1;

impl NGramIndex {
    /// Layout (little-endian): magic `CNGX`, u16 version, u32 n, u64 spec
    /// fingerprint, u32-prefixed JSON tokenizer spec, u32 benchmark count
    /// and u32-prefixed names, u64 gram count, then grams sorted by hash as
    /// (u64 hash, u16 id count, u16 ids...). The same benchmarks and spec
    /// always produce the same bytes.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), DecontamError> {
        let put_str = |w: &mut dyn Write, s: &str| -> io::Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())
        };
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&self.spec_fingerprint().to_le_bytes())?;
        put_str(w, &serde_json::to_string(&self.spec).expect("spec serializes"))?;
        w.write_all(&(self.benchmark_names.len() as u32).to_le_bytes())?;
        for name in &self.benchmark_names {
            put_str(w, name)?;
        }
        let mut entries: Vec<(&u64, &Vec<u16>)> = self.grams.iter().collect();
        entries.sort_unstable_by_key(|(h, _)| **h);
        w.write_all(&(entries.len() as u64).to_le_bytes())?;
        for (h, ids) in entries {
            w.write_all(&h.to_le_bytes())?;
            w.write_all(&(ids.len() as u16).to_le_bytes())?;
            for id in ids {
                w.write_all(&id.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, DecontamError> {
        fn take(r: &mut impl Read, n: usize) -> Result<Vec<u8>, DecontamError> {
            let mut b = vec![0u8; n];
            r.read_exact(&mut b)
                .map_err(|e| DecontamError::Format(format!("truncated: {e}")))?;
            Ok(b)
        }
        fn u16_(r: &mut impl Read) -> Result<u16, DecontamError> {
            Ok(u16::from_le_bytes(take(r, 2)?.try_into().unwrap()))
        }
        fn u32_(r: &mut impl Read) -> Result<u32, DecontamError> {
            Ok(u32::from_le_bytes(take(r, 4)?.try_into().unwrap()))
        }
        fn u64_(r: &mut impl Read) -> Result<u64, DecontamError> {
            Ok(u64::from_le_bytes(take(r, 8)?.try_into().unwrap()))
        }
        fn string(r: &mut impl Read) -> Result<String, DecontamError> {
            let len = u32_(r)? as usize;
            String::from_utf8(take(r, len)?).map_err(|e| DecontamError::Format(e.to_string()))
        }
        if take(r, 4)? != INDEX_MAGIC {
            return Err(DecontamError::Format("bad magic".into()));
        }
        let version = u16_(r)?;
        if version != INDEX_VERSION {
            return Err(DecontamError::Format(format!("unsupported version {version}")));
        }
        let n = u32_(r)? as usize;
        let fingerprint = u64_(r)?;
        let spec: TokenizerSpec = serde_json::from_str(&string(r)?)
            .map_err(|e| DecontamError::Format(format!("tokenizer spec: {e}")))?;
        if spec.fingerprint() != fingerprint {
            return Err(DecontamError::Format("tokenizer fingerprint mismatch".into()));
        }
        let names = (0..u32_(r)?).map(|_| string(r)).collect::<Result<Vec<_>, _>>()?;
        let count = u64_(r)? as usize;
        let mut grams = HashMap::with_capacity(count);
        for _ in 0..count {
            let h = u64_(r)?;
            let k = u16_(r)?;
            let ids = (0..k).map(|_| u16_(r)).collect::<Result<Vec<_>, _>>()?;
            if ids.iter().any(|&i| usize::from(i) >= names.len()) {
                return Err(DecontamError::Format("benchmark id out of range".into()));
            }
            grams.insert(h, ids);
        }
        if n == 0 {
            return Err(DecontamError::InvalidN);
        }
        Ok(NGramIndex {
            n,
            spec,
            benchmark_names: names,
            grams,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DecontamError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DecontamError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
