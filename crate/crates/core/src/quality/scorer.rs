use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::endpoint::{with_retry, EndpointError, JsonEndpoint, RetryPolicy};
use crate::hash;

#[derive(Debug, thiserror::Error)]
pub enum QualityError {
    #[error("scorer {scorer}: {source}")]
    Endpoint {
        scorer: String,
        #[source]
        source: EndpointError,
    },
    #[error("scorer {scorer}: score {value} at index {index} is outside [{min}, {max}]")]
    OutOfScale {
        scorer: String,
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("scorer {scorer}: expected {expected} scores, got {got}")]
    CountMismatch {
        scorer: String,
        expected: usize,
        got: usize,
    },
    #[error("batch of {got} exceeds batch size {max}")]
    BatchTooLarge { got: usize, max: usize },
    #[error("no policy entry for source {0}")]
    MissingPolicy(String),
    #[error("unknown scorer {0:?}")]
    UnknownScorer(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub scorer: String,
    pub value: f64,
    pub scale: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

/// Something that turns a batch of texts into one number per text.
pub trait ScoreBackend: Send + Sync {
    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>, EndpointError>;
}

/// Remote scorer speaking `{"texts": [..]}` → `{"scores": [..]}`.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    endpoint: JsonEndpoint,
}

impl HttpScorer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpScorer {
            endpoint: JsonEndpoint::new(url, timeout),
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl ScoreBackend for HttpScorer {
    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>, EndpointError> {
        let r: ScoreResponse = self.endpoint.post(&ScoreRequest { texts })?;
        Ok(r.scores)
    }
}

/// Deterministic stand-in for a model scorer: each text gets an integer
/// score in the scale derived from its hash.
#[derive(Debug, Clone, Copy)]
pub struct HashMockScorer {
    pub scale: (f64, f64),
    pub seed: u64,
}

impl ScoreBackend for HashMockScorer {
    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>, EndpointError> {
        let (lo, hi) = self.scale;
        let levels = (hi - lo).floor() as u64 + 1;
        Ok(texts
            .iter()
            .map(|t| lo + (hash::hash_str(t, self.seed) % levels) as f64)
            .collect())
    }
}

impl<F> ScoreBackend for F
where
    F: Fn(&[&str]) -> Result<Vec<f64>, EndpointError> + Send + Sync,
{
    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>, EndpointError> {
        self(texts)
    }
}

/// A named scorer with a fixed output scale.
#[derive(Clone)]
pub struct Scorer {
    pub name: String,
    pub scale: (f64, f64),
    pub backend: Arc<dyn ScoreBackend>,
}

impl std::fmt::Debug for Scorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scorer")
            .field("name", &self.name)
            .field("scale", &self.scale)
            .finish()
    }
}

impl Scorer {
    pub fn new(name: impl Into<String>, scale: (f64, f64), backend: impl ScoreBackend + 'static) -> Self {
        Scorer {
            name: name.into(),
            scale,
            backend: Arc::new(backend),
        }
    }
}

/// Serializable description of a scorer, as found in policy files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScorerSpec {
    Http {
        endpoint: String,
        scale: (f64, f64),
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    Mock {
        mock: MockKind,
        scale: (f64, f64),
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockKind {
    Hash,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl ScorerSpec {
    pub fn build(&self, name: &str) -> Scorer {
        match self {
            ScorerSpec::Http {
                endpoint,
                scale,
                timeout_ms,
            } => Scorer::new(
                name,
                *scale,
                HttpScorer::new(endpoint.clone(), Duration::from_millis(*timeout_ms)),
            ),
            ScorerSpec::Mock { scale, seed, .. } => Scorer::new(
                name,
                *scale,
                HashMockScorer {
                    scale: *scale,
                    seed: *seed,
                },
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub scores: Vec<QualityScore>,
    pub retry_count: u32,
}

/// Scores one batch, order-preserving. Transport failures are retried per
/// `retry`; a wrong count or an out-of-scale value is a protocol error and
/// is not retried.
pub fn score_remote(
    texts: &[&str],
    scorer: &Scorer,
    batch_size: usize,
    retry: &RetryPolicy,
) -> Result<ScoreOutcome, QualityError> {
    if texts.len() > batch_size {
        return Err(QualityError::BatchTooLarge {
            got: texts.len(),
            max: batch_size,
        });
    }
    let endpoint_err = |source| QualityError::Endpoint {
        scorer: scorer.name.clone(),
        source,
    };
    let got = with_retry(retry, || scorer.backend.score_texts(texts)).map_err(endpoint_err)?;
    if got.value.len() != texts.len() {
        return Err(QualityError::CountMismatch {
            scorer: scorer.name.clone(),
            expected: texts.len(),
            got: got.value.len(),
        });
    }
    let (min, max) = scorer.scale;
    let mut scores = Vec::with_capacity(texts.len());
    for (index, value) in got.value.into_iter().enumerate() {
        if !(value.is_finite() && value >= min && value <= max) {
            return Err(QualityError::OutOfScale {
                scorer: scorer.name.clone(),
                index,
                value,
                min,
                max,
            });
        }
        scores.push(QualityScore {
            scorer: scorer.name.clone(),
            value,
            scale: scorer.scale,
            raw: None,
        });
    }
    Ok(ScoreOutcome {
        scores,
        retry_count: got.retries,
    })
}
