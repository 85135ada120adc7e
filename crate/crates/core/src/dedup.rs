//! Near-duplicate elimination with MinHash signatures and LSH banding.
//!
//! Signatures are computed in parallel; candidate pairs come from band
//! buckets, are verified against the Jaccard threshold, and merged with a
//! single-threaded union-find. Each connected component keeps its
//! lexicographically smallest id, so the outcome depends only on the corpus
//! and the config, never on the worker count.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TokenSequence, TokenizerSpec};
use crate::hash;

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("document too short to dedup")]
    TooShort,
    #[error("signatures are not comparable: {0}")]
    Incompatible(String),
    #[error("invalid dedup config: {0}")]
    InvalidConfig(String),
    #[error("signature file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed signature file: {0}")]
    Format(String),
}

/// Hashes of the distinct contiguous `w`-token windows of a document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShingleSet {
    /// Sorted, distinct.
    pub shingles: Vec<u64>,
}

impl ShingleSet {
    pub fn len(&self) -> usize {
        self.shingles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shingles.is_empty()
    }

    pub fn from_hashes(mut hashes: Vec<u64>) -> Self {
        hashes.sort_unstable();
        hashes.dedup();
        ShingleSet { shingles: hashes }
    }
}

const SHINGLE_SEED: u64 = 0x5348_494e_474c_4531;

pub fn shingle(tokens: &TokenSequence, w: usize) -> ShingleSet {
    assert!(w >= 1, "shingle width must be at least 1");
    let toks = tokens.as_slice();
    if toks.len() < w {
        return ShingleSet::default();
    }
    ShingleSet::from_hashes(
        toks.windows(w)
            .map(|win| hash::hash_tokens(win, SHINGLE_SEED))
            .collect(),
    )
}

const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    let mut r = lo + (hi & MERSENNE_61) + (hi >> 61);
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

/// `k` hash functions `h_i(x) = (a_i·x + b_i) mod (2^61 − 1)` whose
/// coefficients are derived from `perm_seed`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    perm_seed: u64,
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(k: usize, perm_seed: u64) -> Self {
        let mut state = perm_seed;
        let mut next = || {
            state = hash::splitmix64(state);
            state
        };
        let coeffs = (0..k)
            .map(|_| {
                let a = next() % (MERSENNE_61 - 1) + 1;
                let b = next() % MERSENNE_61;
                (a, b)
            })
            .collect();
        MinHasher { perm_seed, coeffs }
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn signature(&self, shingles: &ShingleSet) -> Result<MinHashSignature, DedupError> {
        if shingles.is_empty() {
            return Err(DedupError::TooShort);
        }
        let mut mins = vec![u64::MAX; self.coeffs.len()];
        for &s in &shingles.shingles {
            let x = u128::from(s % MERSENNE_61);
            for (m, &(a, b)) in mins.iter_mut().zip(&self.coeffs) {
                let h = mod_mersenne(u128::from(a) * x + u128::from(b));
                if h < *m {
                    *m = h;
                }
            }
        }
        Ok(MinHashSignature {
            mins,
            perm_seed: self.perm_seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub mins: Vec<u64>,
    pub perm_seed: u64,
}

pub fn signature(
    shingles: &ShingleSet,
    k: usize,
    perm_seed: u64,
) -> Result<MinHashSignature, DedupError> {
    MinHasher::new(k, perm_seed).signature(shingles)
}

/// Fraction of positions where the two signatures agree.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.mins.len() != b.mins.len() {
        return Err(DedupError::Incompatible(format!(
            "k differs ({} vs {})",
            a.mins.len(),
            b.mins.len()
        )));
    }
    if a.perm_seed != b.perm_seed {
        return Err(DedupError::Incompatible("permutation seeds differ".into()));
    }
    if a.mins.is_empty() {
        return Err(DedupError::Incompatible("empty signatures".into()));
    }
    Ok(agreement(&a.mins, &b.mins))
}

fn agreement(a: &[u64], b: &[u64]) -> f64 {
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len() as f64
}

/// Exact Jaccard similarity of two shingle sets (1.0 for two empty sets).
pub fn exact_jaccard(a: &ShingleSet, b: &ShingleSet) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    let (x, y) = (&a.shingles, &b.shingles);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = x.len() + y.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub shingle_width: usize,
    pub k: usize,
    pub bands: usize,
    pub rows: usize,
    pub threshold: f64,
    pub seed: u64,
    /// Only compare documents of the same source. `false` dedups globally.
    pub per_source: bool,
    pub tokenizer: TokenizerSpec,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            shingle_width: 5,
            k: 128,
            bands: 16,
            rows: 8,
            threshold: 0.8,
            seed: 42,
            per_source: true,
            tokenizer: TokenizerSpec::default(),
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), DedupError> {
        if self.bands * self.rows != self.k {
            return Err(DedupError::InvalidConfig(format!(
                "bands ({}) x rows ({}) must equal k ({})",
                self.bands, self.rows, self.k
            )));
        }
        if self.k == 0 || self.shingle_width == 0 {
            return Err(DedupError::InvalidConfig("k and shingle width must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(DedupError::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub kept_id: String,
    pub removed_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    /// Components with at least one removal, ordered by kept id.
    pub clusters: Vec<Cluster>,
    pub pairs_examined: usize,
    pub pairs_linked: usize,
    pub input_count: usize,
    pub kept_count: usize,
    pub removed_count: usize,
    /// Documents shorter than the shingle width; always kept.
    pub too_short_count: usize,
}

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Per-document signatures for a corpus, in corpus order. `None` marks a
/// document too short to shingle.
pub fn corpus_signatures(docs: &[Document], config: &DedupConfig) -> Vec<Option<MinHashSignature>> {
    let hasher = MinHasher::new(config.k, config.seed);
    docs.par_iter()
        .map(|d| {
            let toks = config.tokenizer.tokenize(&d.text);
            hasher.signature(&shingle(&toks, config.shingle_width)).ok()
        })
        .collect()
}

pub fn dedup(
    corpus: Vec<Document>,
    config: &DedupConfig,
) -> Result<(Vec<Document>, DedupReport), DedupError> {
    config.validate()?;
    let sigs = corpus_signatures(&corpus, config);
    dedup_with_signatures(corpus, &sigs, config)
}

/// Dedup using precomputed signatures (e.g. loaded from a sidecar).
pub fn dedup_with_signatures(
    corpus: Vec<Document>,
    sigs: &[Option<MinHashSignature>],
    config: &DedupConfig,
) -> Result<(Vec<Document>, DedupReport), DedupError> {
    config.validate()?;
    if sigs.len() != corpus.len() {
        return Err(DedupError::Incompatible(format!(
            "{} signatures for {} documents",
            sigs.len(),
            corpus.len()
        )));
    }
    for s in sigs.iter().flatten() {
        if s.mins.len() != config.k || s.perm_seed != config.seed {
            return Err(DedupError::Incompatible(
                "signature k or seed differs from config".into(),
            ));
        }
    }

    let group_key = |d: &Document| -> u64 {
        if config.per_source {
            d.source as u64 + 1
        } else {
            0
        }
    };

    // Candidate pairs from every band, computed band-parallel then merged.
    let mut candidates: Vec<(u32, u32)> = (0..config.bands)
        .into_par_iter()
        .flat_map_iter(|band| {
            let mut buckets: HashMap<(u64, u64), Vec<u32>> = HashMap::new();
            for (i, s) in sigs.iter().enumerate() {
                if let Some(s) = s {
                    let rows = &s.mins[band * config.rows..(band + 1) * config.rows];
                    let mut bytes = Vec::with_capacity(rows.len() * 8);
                    for r in rows {
                        bytes.extend_from_slice(&r.to_le_bytes());
                    }
                    let key = hash::hash_bytes(&bytes, band as u64);
                    buckets
                        .entry((group_key(&corpus[i]), key))
                        .or_default()
                        .push(i as u32);
                }
            }
            let mut pairs = Vec::new();
            for members in buckets.into_values() {
                for (x, &a) in members.iter().enumerate() {
                    for &b in &members[x + 1..] {
                        pairs.push((a, b));
                    }
                }
            }
            pairs
        })
        .collect();
    candidates.par_sort_unstable();
    candidates.dedup();

    let linked: Vec<(u32, u32)> = candidates
        .par_iter()
        .copied()
        .filter(|&(a, b)| {
            let (sa, sb) = (sigs[a as usize].as_ref(), sigs[b as usize].as_ref());
            agreement(&sa.unwrap().mins, &sb.unwrap().mins) >= config.threshold
        })
        .collect();

    let n = corpus.len();
    let mut uf = UnionFind::new(n);
    for &(a, b) in &linked {
        uf.union(a, b);
    }
    // Representative per root: the smallest id in the component.
    let mut best: HashMap<u32, u32> = HashMap::new();
    for i in 0..n as u32 {
        let root = uf.find(i);
        best.entry(root)
            .and_modify(|cur| {
                if corpus[i as usize].id < corpus[*cur as usize].id {
                    *cur = i;
                }
            })
            .or_insert(i);
    }
    let mut removed_by: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut keep = vec![true; n];
    for i in 0..n as u32 {
        let rep = best[&uf.find(i)];
        if rep != i {
            keep[i as usize] = false;
            removed_by.entry(rep).or_default().push(i);
        }
    }
    let mut clusters: Vec<Cluster> = removed_by
        .into_iter()
        .map(|(rep, members)| {
            let mut removed_ids: Vec<String> =
                members.iter().map(|&m| corpus[m as usize].id.clone()).collect();
            removed_ids.sort();
            Cluster {
                kept_id: corpus[rep as usize].id.clone(),
                removed_ids,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.kept_id.cmp(&b.kept_id));

    let too_short_count = sigs.iter().filter(|s| s.is_none()).count();
    let kept: Vec<Document> = corpus
        .into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect();
    let report = DedupReport {
        clusters,
        pairs_examined: candidates.len(),
        pairs_linked: linked.len(),
        input_count: n,
        kept_count: kept.len(),
        removed_count: n - kept.len(),
        too_short_count,
    };
    Ok((kept, report))
}

const SIG_MAGIC: &[u8; 4] = b"CMHS";
const SIG_VERSION: u16 = 1;

/// Writes a signature sidecar: magic `CMHS`, u16 version, u32 k, u64 seed,
/// u64 count, then per document a u32-length-prefixed id, a presence byte
/// and `k` u64 minima. All integers little-endian.
pub fn write_signatures(
    path: impl AsRef<Path>,
    docs: &[Document],
    sigs: &[Option<MinHashSignature>],
    config: &DedupConfig,
) -> Result<(), DedupError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SIG_MAGIC)?;
    w.write_all(&SIG_VERSION.to_le_bytes())?;
    w.write_all(&(config.k as u32).to_le_bytes())?;
    w.write_all(&config.seed.to_le_bytes())?;
    w.write_all(&(docs.len() as u64).to_le_bytes())?;
    for (d, s) in docs.iter().zip(sigs) {
        w.write_all(&(d.id.len() as u32).to_le_bytes())?;
        w.write_all(d.id.as_bytes())?;
        match s {
            Some(s) => {
                w.write_all(&[1])?;
                for m in &s.mins {
                    w.write_all(&m.to_le_bytes())?;
                }
            }
            None => w.write_all(&[0])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a sidecar into an id → signature map.
pub fn read_signatures(
    path: impl AsRef<Path>,
) -> Result<HashMap<String, Option<MinHashSignature>>, DedupError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut take = |n: usize| -> Result<Vec<u8>, DedupError> {
        let mut b = vec![0u8; n];
        r.read_exact(&mut b)
            .map_err(|e| DedupError::Format(format!("truncated: {e}")))?;
        Ok(b)
    };
    if take(4)? != SIG_MAGIC {
        return Err(DedupError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != SIG_VERSION {
        return Err(DedupError::Format(format!("unsupported version {version}")));
    }
    let k = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut out = HashMap::new();
    for _ in 0..count {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let id = String::from_utf8(take(len)?).map_err(|e| DedupError::Format(e.to_string()))?;
        let sig = match take(1)?[0] {
            0 => None,
            1 => {
                let raw = take(k * 8)?;
                let mins = raw
                    .chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Some(MinHashSignature {
                    mins,
                    perm_seed: seed,
                })
            }
            other => return Err(DedupError::Format(format!("bad presence byte {other}"))),
        };
        out.insert(id, sig);
    }
    Ok(out)
}
