//! Binary linear classifiers over hashed word uni/bi-grams, used to recall
//! domain-relevant documents from a bulk corpus.
//!
//! Features are the lowercased whitespace tokens and adjacent token pairs of
//! a text, hashed into `2^b` buckets. A document's feature vector is its
//! bucket count vector scaled to unit L2 norm; the model is
//! `sigmoid(w·x + bias)` trained with shuffled SGD on binary cross-entropy.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TokenizerSpec};
use crate::hash;

pub const MIN_BUCKET_BITS: u8 = 10;
pub const MAX_BUCKET_BITS: u8 = 26;

#[derive(Debug, thiserror::Error)]
pub enum RecallError {
    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(&'static str),
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("model file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// log2 of the bucket count.
    pub bucket_bits: u8,
    /// Highest n-gram order hashed (1 = unigrams, 2 = uni+bigrams).
    pub max_order: u8,
    pub hash_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            bucket_bits: 21,
            max_order: 2,
            hash_seed: hash::DEFAULT_SEED,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), RecallError> {
        if !(MIN_BUCKET_BITS..=MAX_BUCKET_BITS).contains(&self.bucket_bits) {
            return Err(RecallError::InvalidConfig(format!(
                "bucket_bits {} outside [{MIN_BUCKET_BITS}, {MAX_BUCKET_BITS}]",
                self.bucket_bits
            )));
        }
        if !(1..=2).contains(&self.max_order) {
            return Err(RecallError::InvalidConfig(format!(
                "max_order {} not in 1..=2",
                self.max_order
            )));
        }
        Ok(())
    }

    pub fn bucket_count(&self) -> usize {
        1usize << self.bucket_bits
    }
}

/// Hashed bucket occurrences of one text, in token order (unigram of token
/// `i` followed by the bigram starting at `i - 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub bucket_indices: Vec<u32>,
    pub bucket_count: u32,
}

impl FeatureVector {
    /// Unit-L2 sparse representation, sorted by bucket.
    pub fn normalized(&self) -> Vec<(u32, f64)> {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for &b in &self.bucket_indices {
            *counts.entry(b).or_default() += 1;
        }
        let norm = counts
            .values()
            .map(|&c| f64::from(c) * f64::from(c))
            .sum::<f64>()
            .sqrt();
        counts
            .into_iter()
            .map(|(b, c)| (b, f64::from(c) / norm))
            .collect()
    }
}

fn feature_tokenizer() -> TokenizerSpec {
    TokenizerSpec::whitespace().lowercase(true)
}

pub fn featurize(text: &str, config: &FeatureConfig) -> FeatureVector {
    let mask = (config.bucket_count() - 1) as u64;
    let tokens = feature_tokenizer().tokenize(text);
    let toks = tokens.as_slice();
    let mut buckets = Vec::with_capacity(toks.len() * usize::from(config.max_order));
    for i in 0..toks.len() {
        buckets.push((hash::hash_str(&toks[i], config.hash_seed) & mask) as u32);
        if config.max_order >= 2 && i > 0 {
            buckets.push((hash::hash_tokens(&toks[i - 1..=i], config.hash_seed) & mask) as u32);
        }
    }
    FeatureVector {
        bucket_indices: buckets,
        bucket_count: config.bucket_count() as u32,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: u32,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 0.1,
            epochs: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub features: FeatureConfig,
    pub hyper: TrainHyper,
}

/// The built-in recall domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainPreset {
    Math,
    CodeText,
    GeneralReasoning,
}

impl DomainPreset {
    pub fn name(self) -> &'static str {
        match self {
            DomainPreset::Math => "math",
            DomainPreset::CodeText => "code-text",
            DomainPreset::GeneralReasoning => "general-reasoning",
        }
    }

    pub fn config(self) -> ClassifierConfig {
        ClassifierConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub domain: String,
    pub config: ClassifierConfig,
    pub weights: Vec<f32>,
    pub bias: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainReport {
    pub examples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn bce(p: f64, label: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

impl ClassifierModel {
    /// An untrained model: all weights and the bias are zero.
    pub fn zeros(domain: impl Into<String>, config: ClassifierConfig) -> Result<Self, RecallError> {
        config.features.validate()?;
        Ok(ClassifierModel {
            domain: domain.into(),
            weights: vec![0.0; config.features.bucket_count()],
            bias: 0.0,
            config,
        })
    }

    fn logit(&self, x: &[(u32, f64)]) -> f64 {
        x.iter()
            .map(|&(b, v)| f64::from(self.weights[b as usize]) * v)
            .sum::<f64>()
            + f64::from(self.bias)
    }

    pub fn score_text(&self, text: &str) -> f64 {
        let fv = featurize(text, &self.config.features);
        sigmoid(self.logit(&fv.normalized()))
    }

    fn mean_loss(&self, data: &[(Vec<(u32, f64)>, f64)]) -> f64 {
        data.iter()
            .map(|(x, y)| bce(sigmoid(self.logit(x)), *y))
            .sum::<f64>()
            / data.len() as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RecallError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RecallError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Layout (all little-endian): magic `CRCL`, u16 version, u8 bucket
    /// bits, u8 max order, u64 hash seed, f64 lr, u32 epochs, u64 train
    /// seed, u32 domain length + UTF-8 bytes, f32 bias, u64 weight count,
    /// then the f32 weights.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), RecallError> {
        let f = &self.config.features;
        let h = &self.config.hyper;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&[f.bucket_bits, f.max_order])?;
        w.write_all(&f.hash_seed.to_le_bytes())?;
        w.write_all(&h.lr.to_le_bytes())?;
        w.write_all(&h.epochs.to_le_bytes())?;
        w.write_all(&h.seed.to_le_bytes())?;
        w.write_all(&(self.domain.len() as u32).to_le_bytes())?;
        w.write_all(self.domain.as_bytes())?;
        w.write_all(&self.bias.to_le_bytes())?;
        w.write_all(&(self.weights.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.weights.len() * 4);
        for x in &self.weights {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, RecallError> {
        fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N], RecallError> {
            let mut b = [0u8; N];
            r.read_exact(&mut b)
                .map_err(|e| RecallError::Format(format!("truncated header: {e}")))?;
            Ok(b)
        }
        if &take::<4>(r)? != MODEL_MAGIC {
            return Err(RecallError::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(take(r)?);
        if version != MODEL_VERSION {
            return Err(RecallError::Format(format!("unsupported version {version}")));
        }
        let [bucket_bits, max_order] = take::<2>(r)?;
        let features = FeatureConfig {
            bucket_bits,
            max_order,
            hash_seed: u64::from_le_bytes(take(r)?),
        };
        features.validate()?;
        let hyper = TrainHyper {
            lr: f64::from_le_bytes(take(r)?),
            epochs: u32::from_le_bytes(take(r)?),
            seed: u64::from_le_bytes(take(r)?),
        };
        let dlen = u32::from_le_bytes(take(r)?) as usize;
        let mut domain = vec![0u8; dlen];
        r.read_exact(&mut domain)
            .map_err(|e| RecallError::Format(format!("truncated domain: {e}")))?;
        let domain = String::from_utf8(domain).map_err(|e| RecallError::Format(e.to_string()))?;
        let bias = f32::from_le_bytes(take(r)?);
        let n = u64::from_le_bytes(take(r)?) as usize;
        if n != features.bucket_count() {
            return Err(RecallError::Format(format!(
                "weight count {n} does not match 2^{bucket_bits}"
            )));
        }
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)
            .map_err(|e| RecallError::Format(format!("truncated weights: {e}")))?;
        let weights: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(RecallError::Format("non-finite weight".into()));
        }
        Ok(ClassifierModel {
            domain,
            config: ClassifierConfig { features, hyper },
            weights,
            bias,
        })
    }
}

const MODEL_MAGIC: &[u8; 4] = b"CRCL";
const MODEL_VERSION: u16 = 1;

/// Trains a binary recall model. The visiting order of every epoch is a
/// shuffle driven only by `config.hyper.seed`, so a fixed seed gives
/// bit-identical weights.
pub fn train_classifier(
    domain: &str,
    positives: &[Document],
    negatives: &[Document],
    config: ClassifierConfig,
) -> Result<(ClassifierModel, TrainReport), RecallError> {
    if positives.is_empty() {
        return Err(RecallError::DegenerateTrainingSet("no positive examples"));
    }
    if negatives.is_empty() {
        return Err(RecallError::DegenerateTrainingSet("no negative examples"));
    }
    let mut model = ClassifierModel::zeros(domain, config)?;
    let featurize_all = |docs: &[Document], label: f64| {
        docs.par_iter()
            .map(|d| (featurize(&d.text, &config.features).normalized(), label))
            .collect::<Vec<_>>()
    };
    let mut data = featurize_all(positives, 1.0);
    data.extend(featurize_all(negatives, 0.0));

    let initial_loss = model.mean_loss(&data);
    let mut rng = ChaCha8Rng::seed_from_u64(config.hyper.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = config.hyper.lr;
    for _ in 0..config.hyper.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = &data[i];
            let grad = sigmoid(model.logit(x)) - y;
            for &(b, v) in x {
                let w = &mut model.weights[b as usize];
                *w = (f64::from(*w) - lr * grad * v) as f32;
            }
            model.bias = (f64::from(model.bias) - lr * grad) as f32;
        }
    }
    let final_loss = model.mean_loss(&data);
    Ok((
        model,
        TrainReport {
            examples: data.len(),
            initial_loss,
            final_loss,
        },
    ))
}

/// Uniformly samples `count` negatives (without replacement) from `pool`.
pub fn sample_negatives(pool: &[Document], count: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, pool.len(), count.min(pool.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

pub fn score(model: &ClassifierModel, doc: &Document) -> f64 {
    model.score_text(&doc.text)
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub domain: String,
    pub threshold: f64,
    pub total: usize,
    pub kept: usize,
    pub keep_rate: f64,
    /// Score counts over ten equal-width bins of `[0, 1]`.
    pub histogram: Vec<usize>,
}

/// Keeps documents scoring at least `threshold`.
pub fn recall(
    model: &ClassifierModel,
    corpus: Vec<Document>,
    threshold: f64,
) -> (Vec<Document>, RecallReport) {
    let scores: Vec<f64> = corpus.par_iter().map(|d| score(model, d)).collect();
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for s in &scores {
        histogram[((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let total = corpus.len();
    let kept: Vec<Document> = corpus
        .into_iter()
        .zip(&scores)
        .filter(|(_, s)| **s >= threshold)
        .map(|(d, _)| d)
        .collect();
    let report = RecallReport {
        domain: model.domain.clone(),
        threshold,
        total,
        kept: kept.len(),
        keep_rate: if total == 0 {
            0.0
        } else {
            kept.len() as f64 / total as f64
        },
        histogram,
    };
    (kept, report)
}
