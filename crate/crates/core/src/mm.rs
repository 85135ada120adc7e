//! Image-text pair filtering by embedding similarity.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::endpoint::{with_retry, EndpointError, JsonEndpoint, RetryPolicy};
use crate::hash::hash_str;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub image_ref: String,
    pub text: String,
    /// Image embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_a: Option<Vec<f64>>,
    /// Text embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

impl PairRecord {
    pub fn new(pair_id: impl Into<String>, image_ref: impl Into<String>, text: impl Into<String>) -> Self {
        PairRecord {
            pair_id: pair_id.into(),
            image_ref: image_ref.into(),
            text: text.into(),
            embedding_a: None,
            embedding_b: None,
            similarity: None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MmError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-length embedding")]
    ZeroVector,
    #[error("threshold {0} is outside [-1, 1]")]
    InvalidThreshold(f64),
}

/// Cosine similarity, clamped to [-1, 1].
pub fn pair_similarity(a: &[f64], b: &[f64]) -> Result<f64, MmError> {
    if a.len() != b.len() {
        return Err(MmError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 || !(na.is_finite() && nb.is_finite()) {
        return Err(MmError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError>;
    fn embed_images(&self, image_refs: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError>;
}

/// `{"texts"}` or `{"image_refs"}` → `{"embeddings"}`.
pub struct HttpEmbeddingProvider(JsonEndpoint);

impl HttpEmbeddingProvider {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpEmbeddingProvider(JsonEndpoint::new(url, timeout))
    }
}

#[derive(Serialize)]
struct TextsRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Serialize)]
struct ImagesRequest<'a> {
    image_refs: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    embeddings: Vec<Vec<f64>>,
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
        Ok(self.0.post::<_, EmbeddingsResponse>(&TextsRequest { texts })?.embeddings)
    }

    fn embed_images(&self, image_refs: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
        Ok(self.0.post::<_, EmbeddingsResponse>(&ImagesRequest { image_refs })?.embeddings)
    }
}

/// Deterministic stand-in: hashed bag of words, the same for texts and
/// image references, so a reference equal to its caption scores 1.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbeddingMock {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbeddingMock {
    fn embed(&self, s: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for w in s.split_whitespace() {
            let h = hash_str(&w.to_lowercase(), self.seed);
            v[(h % self.dim as u64) as usize] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

impl EmbeddingProvider for HashEmbeddingMock {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }

    fn embed_images(&self, image_refs: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
        Ok(image_refs.iter().map(|t| self.embed(t)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairFilterConfig {
    pub threshold: f64,
    pub batch_size: usize,
    pub retry: RetryPolicy,
}

impl Default for PairFilterConfig {
    fn default() -> Self {
        PairFilterConfig {
            threshold: 0.5,
            batch_size: 64,
            retry: RetryPolicy::default(),
        }
    }
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnscoredPair {
    pub pair_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFilterReport {
    pub threshold: f64,
    pub total: usize,
    pub kept: usize,
    pub dropped: usize,
    pub unscored: Vec<UnscoredPair>,
    /// `dropped / total`.
    pub drop_rate: f64,
    /// 20 equal-width bins over [-1, 1]; the last bin includes 1.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFilterOutcome {
    pub kept: Vec<PairRecord>,
    pub dropped: Vec<PairRecord>,
    pub unscored: Vec<PairRecord>,
    pub report: PairFilterReport,
}

fn histogram_bin(s: f64) -> usize {
    (((s + 1.0) / 2.0 * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

type Embedded = Result<(Vec<f64>, Vec<f64>), String>;

fn fetch_batch(batch: &[PairRecord], provider: &dyn EmbeddingProvider, retry: &RetryPolicy) -> Vec<Embedded> {
    let need_img: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].embedding_a.is_none()).collect();
    let need_txt: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].embedding_b.is_none()).collect();
    let imgs: Vec<&str> = need_img.iter().map(|&i| batch[i].image_ref.as_str()).collect();
    let txts: Vec<&str> = need_txt.iter().map(|&i| batch[i].text.as_str()).collect();
    let call = |f: &dyn Fn() -> Result<Vec<Vec<f64>>, EndpointError>, n: usize| {
        if n == 0 {
            return Ok(Vec::new());
        }
        let v = with_retry(retry, f).map_err(|e| e.to_string())?.value;
        if v.len() != n {
            return Err(format!("provider returned {} embeddings for {n} inputs", v.len()));
        }
        Ok(v)
    };
    let got_img = call(&|| provider.embed_images(&imgs), imgs.len());
    let got_txt = call(&|| provider.embed_texts(&txts), txts.len());
    match (got_img, got_txt) {
        (Ok(gi), Ok(gt)) => {
            let mut a: Vec<Option<Vec<f64>>> = batch.iter().map(|p| p.embedding_a.clone()).collect();
            let mut b: Vec<Option<Vec<f64>>> = batch.iter().map(|p| p.embedding_b.clone()).collect();
            for (i, e) in need_img.into_iter().zip(gi) {
                a[i] = Some(e);
            }
            for (i, e) in need_txt.into_iter().zip(gt) {
                b[i] = Some(e);
            }
            a.into_iter().zip(b).map(|(a, b)| Ok((a.unwrap(), b.unwrap()))).collect()
        }
        (Err(e), _) | (_, Err(e)) if batch.len() == 1 => vec![Err(e)],
        // Retry pair by pair so one bad input does not sink its batch.
        _ => batch
            .iter()
            .flat_map(|p| fetch_batch(std::slice::from_ref(p), provider, retry))
            .collect(),
    }
}

/// Keeps pairs with similarity ≥ threshold. Pairs reuse a cached
/// similarity or precomputed embeddings when present; the provider fills
/// in the rest. Pairs that cannot be scored are returned separately.
pub fn filter_pairs(
    pairs: Vec<PairRecord>,
    provider: Option<&dyn EmbeddingProvider>,
    config: &PairFilterConfig,
) -> Result<PairFilterOutcome, MmError> {
    if !(-1.0..=1.0).contains(&config.threshold) {
        return Err(MmError::InvalidThreshold(config.threshold));
    }
    let batch_size = config.batch_size.max(1);
    let sims: Vec<Result<f64, String>> = pairs
        .par_chunks(batch_size)
        .flat_map_iter(|batch| {
            let todo: Vec<usize> = (0..batch.len())
                .filter(|&i| {
                    let p = &batch[i];
                    p.similarity.is_none() && (p.embedding_a.is_none() || p.embedding_b.is_none())
                })
                .collect();
            let todo_batch: Vec<PairRecord> = todo.iter().map(|&i| batch[i].clone()).collect();
            let fetched: Vec<Embedded> = match provider {
                Some(p) if !todo_batch.is_empty() => fetch_batch(&todo_batch, p, &config.retry),
                _ => todo_batch.iter().map(|_| Err("no embedding provider".to_string())).collect(),
            };
            let mut fetched = todo.into_iter().zip(fetched).peekable();
            let mut out = Vec::with_capacity(batch.len());
            for (i, p) in batch.iter().enumerate() {
                let r = if let Some(s) = p.similarity {
                    Ok(s)
                } else if let (Some(a), Some(b)) = (&p.embedding_a, &p.embedding_b) {
                    pair_similarity(a, b).map_err(|e| e.to_string())
                } else {
                    let (j, e) = fetched.next().expect("one fetch per pending pair");
                    debug_assert_eq!(i, j);
                    e.and_then(|(a, b)| pair_similarity(&a, &b).map_err(|e| e.to_string()))
                };
                out.push(r);
            }
            out
        })
        .collect();

    let total = pairs.len();
    let mut histogram = vec![0; HISTOGRAM_BINS];
    let (mut kept, mut dropped, mut unscored, mut unscored_ids) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (mut p, s) in pairs.into_iter().zip(sims) {
        match s {
            Ok(s) if s.is_finite() => {
                p.similarity = Some(s);
                histogram[histogram_bin(s.clamp(-1.0, 1.0))] += 1;
                if s >= config.threshold {
                    kept.push(p);
                } else {
                    dropped.push(p);
                }
            }
            Ok(s) => {
                unscored_ids.push(UnscoredPair {
                    pair_id: p.pair_id.clone(),
                    reason: format!("similarity {s} is not finite"),
                });
                unscored.push(p);
            }
            Err(reason) => {
                unscored_ids.push(UnscoredPair {
                    pair_id: p.pair_id.clone(),
                    reason,
                });
                unscored.push(p);
            }
        }
    }
    let report = PairFilterReport {
        threshold: config.threshold,
        total,
        kept: kept.len(),
        dropped: dropped.len(),
        unscored: unscored_ids,
        drop_rate: if total == 0 { 0.0 } else { dropped.len() as f64 / total as f64 },
        histogram,
    };
    Ok(PairFilterOutcome {
        kept,
        dropped,
        unscored,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        assert!((pair_similarity(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pair_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let r = 0.5f64.sqrt();
        assert!((pair_similarity(&[1.0, 0.0], &[r, r]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(pair_similarity(&[1.0], &[1.0, 2.0]), Err(MmError::DimensionMismatch(1, 2)));
        assert_eq!(pair_similarity(&[0.0, 0.0], &[1.0, 2.0]), Err(MmError::ZeroVector));
    }

    /// Unit embeddings whose cosine is `sim`.
    fn at(id: &str, sim: f64) -> PairRecord {
        let mut p = PairRecord::new(id, format!("img/{id}"), "caption");
        p.embedding_a = Some(vec![1.0, 0.0]);
        p.embedding_b = Some(vec![sim, (1.0 - sim * sim).sqrt()]);
        p
    }

    #[test]
    fn threshold_keeps_and_drops() {
        let out = filter_pairs(vec![at("a", 0.6), at("b", 0.4)], None, &PairFilterConfig::default()).unwrap();
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].pair_id, "a");
        assert_eq!(out.dropped[0].pair_id, "b");
        assert_eq!(out.report.histogram.iter().sum::<usize>(), 2);
        assert_eq!(out.report.histogram[histogram_bin(0.6)], 1);
    }

    #[test]
    fn missing_embeddings_without_provider_are_unscored() {
        let out = filter_pairs(vec![PairRecord::new("x", "i", "t")], None, &PairFilterConfig::default()).unwrap();
        assert_eq!(out.unscored.len(), 1);
        assert!(out.kept.is_empty() && out.dropped.is_empty());
    }

    struct Flaky;

    impl EmbeddingProvider for Flaky {
        fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
            if texts.contains(&"poison") {
                return Err(EndpointError::Status(400));
            }
            Ok(texts.iter().map(|_| vec![1.0, 0.0]).collect())
        }

        fn embed_images(&self, refs: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
            Ok(refs.iter().map(|_| vec![1.0, 0.1]).collect())
        }
    }

    #[test]
    fn provider_failure_isolated_to_pair() {
        let pairs = vec![
            PairRecord::new("a", "i1", "fine"),
            PairRecord::new("b", "i2", "poison"),
            PairRecord::new("c", "i3", "fine too"),
        ];
        let cfg = PairFilterConfig {
            retry: RetryPolicy::none(),
            ..PairFilterConfig::default()
        };
        let out = filter_pairs(pairs, Some(&Flaky), &cfg).unwrap();
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.report.unscored.len(), 1);
        assert_eq!(out.report.unscored[0].pair_id, "b");
        assert!(out.kept.iter().all(|p| p.similarity.is_some()));
    }

    #[test]
    fn mock_provider_is_deterministic() {
        let mock = HashEmbeddingMock { dim: 64, seed: 1 };
        let pairs: Vec<_> = (0..50)
            .map(|i| PairRecord::new(format!("p{i}"), format!("a red bird {i}"), format!("a red bird {}", i % 7)))
            .collect();
        let cfg = PairFilterConfig {
            batch_size: 8,
            ..PairFilterConfig::default()
        };
        let a = filter_pairs(pairs.clone(), Some(&mock), &cfg).unwrap();
        let b = filter_pairs(pairs, Some(&mock), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.histogram.iter().sum::<usize>(), 50);
    }

    #[test]
    fn cached_similarity_wins() {
        let mut p = at("a", 0.9);
        p.similarity = Some(0.1);
        let out = filter_pairs(vec![p], None, &PairFilterConfig::default()).unwrap();
        assert_eq!(out.dropped.len(), 1);
    }

    proptest::proptest! {
        #[test]
        fn threshold_monotone(sims in proptest::collection::vec(-1.0f64..1.0, 0..40), t1 in -1.0f64..1.0, t2 in -1.0f64..1.0) {
            let pairs: Vec<_> = sims.iter().enumerate().map(|(i, &s)| {
                let mut p = PairRecord::new(format!("{i}"), "i", "t");
                p.similarity = Some(s);
                p
            }).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let k = |t| filter_pairs(pairs.clone(), None, &PairFilterConfig { threshold: t, ..PairFilterConfig::default() }).unwrap();
            let (a, b) = (k(lo), k(hi));
            proptest::prop_assert!(b.kept.len() <= a.kept.len());
            proptest::prop_assert_eq!(a.report.histogram.iter().sum::<usize>(), sims.len());
        }
    }
}
