use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::MixEvalError;
use crate::endpoint::{with_retry, JsonEndpoint, RetryPolicy};

/// Token set with stable ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Duplicates are ignored; ids follow first appearance.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            let t = t.into();
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len() as u32);
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Unknown tokens map to `u32::MAX`, which never matches a context.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(u32::MAX))
            .collect()
    }
}

/// A next-token distribution over a fixed vocabulary.
///
/// Implementations must be safe for concurrent read-only use and return
/// probabilities that are non-negative and sum to 1.
pub trait ConditionalTokenModel: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    /// Probabilities indexed by token id.
    fn next_token_distribution(&self, context: &[u32]) -> Vec<f64>;

    fn prob(&self, context: &[u32], token: u32) -> f64 {
        self.next_token_distribution(context)
            .get(token as usize)
            .copied()
            .unwrap_or(0.0)
    }
}

/// Anything that can assign a natural-log probability to each token of a
/// sequence given its prefix. Zero probability is `-inf`.
pub trait LogProbProvider: Send + Sync {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>, MixEvalError>;
}

impl<M: ConditionalTokenModel + ?Sized> LogProbProvider for M {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>, MixEvalError> {
        let ids = self.vocabulary().encode(tokens);
        Ok((0..ids.len())
            .map(|i| {
                if ids[i] == u32::MAX {
                    f64::NEG_INFINITY
                } else {
                    self.prob(&ids[..i], ids[i]).ln()
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct UniformModel {
    vocab: Vocabulary,
}

impl UniformModel {
    pub fn new(vocab: Vocabulary) -> Result<Self, MixEvalError> {
        if vocab.is_empty() {
            return Err(MixEvalError::InvalidModel("empty vocabulary".into()));
        }
        Ok(UniformModel { vocab })
    }
}

impl ConditionalTokenModel for UniformModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_distribution(&self, _context: &[u32]) -> Vec<f64> {
        vec![1.0 / self.vocab.len() as f64; self.vocab.len()]
    }

    fn prob(&self, _context: &[u32], token: u32) -> f64 {
        if (token as usize) < self.vocab.len() {
            1.0 / self.vocab.len() as f64
        } else {
            0.0
        }
    }
}

/// Table-driven n-gram model. The longest stored suffix of the context
/// (at most `order - 1` tokens) selects the distribution; with no match the
/// default distribution applies.
#[derive(Debug, Clone)]
pub struct NGramTableModel {
    vocab: Vocabulary,
    order: usize,
    default: Vec<f64>,
    contexts: HashMap<Vec<u32>, Vec<f64>>,
}

const SUM_TOLERANCE: f64 = 1e-9;

fn check_distribution(what: &str, d: &[f64]) -> Result<(), MixEvalError> {
    if d.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(MixEvalError::InvalidModel(format!("{what}: negative or non-finite probability")));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(MixEvalError::InvalidModel(format!("{what}: probabilities sum to {sum}")));
    }
    Ok(())
}

impl NGramTableModel {
    pub fn new(
        vocab: Vocabulary,
        order: usize,
        default: Vec<f64>,
        contexts: HashMap<Vec<u32>, Vec<f64>>,
    ) -> Result<Self, MixEvalError> {
        if order < 1 {
            return Err(MixEvalError::InvalidModel("order must be at least 1".into()));
        }
        let v = vocab.len();
        if v == 0 {
            return Err(MixEvalError::InvalidModel("empty vocabulary".into()));
        }
        if default.len() != v {
            return Err(MixEvalError::InvalidModel("default distribution has wrong length".into()));
        }
        check_distribution("default", &default)?;
        for (ctx, d) in &contexts {
            if ctx.is_empty() || ctx.len() >= order {
                return Err(MixEvalError::InvalidModel(format!(
                    "context of length {} does not fit order {order}",
                    ctx.len()
                )));
            }
            if ctx.iter().any(|&t| t as usize >= v) || d.len() != v {
                return Err(MixEvalError::InvalidModel("context outside vocabulary".into()));
            }
            check_distribution("context", d)?;
        }
        Ok(NGramTableModel {
            vocab,
            order,
            default,
            contexts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn lookup(&self, context: &[u32]) -> &[f64] {
        let max = (self.order - 1).min(context.len());
        for len in (1..=max).rev() {
            if let Some(d) = self.contexts.get(&context[context.len() - len..]) {
                return d;
            }
        }
        &self.default
    }

    pub fn from_spec(spec: &NGramTableSpec) -> Result<Self, MixEvalError> {
        let vocab = Vocabulary::new(spec.vocab.iter().cloned());
        let dense = |what: &str, m: &BTreeMap<String, f64>| -> Result<Vec<f64>, MixEvalError> {
            let mut d = vec![0.0; vocab.len()];
            for (t, p) in m {
                let id = vocab
                    .id(t)
                    .ok_or_else(|| MixEvalError::InvalidModel(format!("{what}: unknown token {t:?}")))?;
                d[id as usize] = *p;
            }
            Ok(d)
        };
        let default = match &spec.default {
            Some(m) => dense("default", m)?,
            None => vec![1.0 / vocab.len().max(1) as f64; vocab.len()],
        };
        let mut contexts = HashMap::new();
        for (key, m) in &spec.contexts {
            let ctx: Vec<&str> = key.split_whitespace().collect();
            let ids = vocab.encode(&ctx);
            if ids.contains(&u32::MAX) {
                return Err(MixEvalError::InvalidModel(format!("context {key:?} has unknown tokens")));
            }
            contexts.insert(ids, dense(key, m)?);
        }
        NGramTableModel::new(vocab, spec.order, default, contexts)
    }
}

impl ConditionalTokenModel for NGramTableModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_distribution(&self, context: &[u32]) -> Vec<f64> {
        self.lookup(context).to_vec()
    }

    fn prob(&self, context: &[u32], token: u32) -> f64 {
        self.lookup(context).get(token as usize).copied().unwrap_or(0.0)
    }
}

/// JSON form of [`NGramTableModel`]. Context keys are space-joined tokens;
/// tokens missing from a distribution have probability 0. Without
/// `default`, unmatched contexts are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramTableSpec {
    pub vocab: Vec<String>,
    pub order: usize,
    #[serde(default)]
    pub default: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub contexts: BTreeMap<String, BTreeMap<String, f64>>,
}

/// q = (1 − ε)·p + ε·r.
#[derive(Clone)]
pub struct MixtureDistribution {
    pub clean: Arc<dyn ConditionalTokenModel>,
    pub contaminant: Arc<dyn ConditionalTokenModel>,
    pub epsilon: f64,
}

impl std::fmt::Debug for MixtureDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MixtureDistribution")
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

pub fn mix(
    p: Arc<dyn ConditionalTokenModel>,
    r: Arc<dyn ConditionalTokenModel>,
    epsilon: f64,
) -> Result<MixtureDistribution, MixEvalError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(MixEvalError::InvalidEpsilon(epsilon));
    }
    if p.vocabulary().tokens() != r.vocabulary().tokens() {
        return Err(MixEvalError::VocabularyMismatch);
    }
    Ok(MixtureDistribution {
        clean: p,
        contaminant: r,
        epsilon,
    })
}

impl ConditionalTokenModel for MixtureDistribution {
    fn vocabulary(&self) -> &Vocabulary {
        self.clean.vocabulary()
    }

    fn next_token_distribution(&self, context: &[u32]) -> Vec<f64> {
        let e = self.epsilon;
        self.clean
            .next_token_distribution(context)
            .into_iter()
            .zip(self.contaminant.next_token_distribution(context))
            .map(|(p, r)| (1.0 - e) * p + e * r)
            .collect()
    }

    fn prob(&self, context: &[u32], token: u32) -> f64 {
        let e = self.epsilon;
        (1.0 - e) * self.clean.prob(context, token) + e * self.contaminant.prob(context, token)
    }
}

/// Model behind an HTTP endpoint: `{"tokens": [..]}` → `{"logprobs": [..]}`.
#[derive(Clone)]
pub struct RemoteLogProbModel {
    endpoint: JsonEndpoint,
    retry: RetryPolicy,
}

#[derive(Serialize)]
struct LogProbRequest<'a> {
    tokens: &'a [String],
}

#[derive(Deserialize)]
struct LogProbResponse {
    logprobs: Vec<f64>,
}

impl RemoteLogProbModel {
    pub fn new(url: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        RemoteLogProbModel {
            endpoint: JsonEndpoint::new(url, timeout),
            retry,
        }
    }
}

impl LogProbProvider for RemoteLogProbModel {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>, MixEvalError> {
        let resp: LogProbResponse = with_retry(&self.retry, || {
            self.endpoint.post(&LogProbRequest { tokens })
        })?
        .value;
        if resp.logprobs.len() != tokens.len() {
            return Err(MixEvalError::Protocol(format!(
                "expected {} logprobs, got {}",
                tokens.len(),
                resp.logprobs.len()
            )));
        }
        if let Some(i) = resp.logprobs.iter().position(|&l| l.is_nan() || l > 0.0) {
            return Err(MixEvalError::Protocol(format!(
                "logprob at position {i} is not a log-probability: {}",
                resp.logprobs[i]
            )));
        }
        Ok(resp.logprobs)
    }
}

/// Model description used by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Table(NGramTableSpec),
    Uniform {
        uniform: Vec<String>,
    },
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl ModelSpec {
    /// Local models only; remote models cannot expose full distributions.
    pub fn build_model(&self) -> Result<Arc<dyn ConditionalTokenModel>, MixEvalError> {
        match self {
            ModelSpec::Table(t) => Ok(Arc::new(NGramTableModel::from_spec(t)?)),
            ModelSpec::Uniform { uniform } => {
                Ok(Arc::new(UniformModel::new(Vocabulary::new(uniform.iter().cloned()))?))
            }
            ModelSpec::Remote { .. } => Err(MixEvalError::InvalidModel(
                "a remote model only provides per-token log-probabilities".into(),
            )),
        }
    }

    pub fn build_provider(&self) -> Result<Arc<dyn LogProbProvider>, MixEvalError> {
        match self {
            ModelSpec::Remote {
                endpoint,
                timeout_ms,
                retry,
            } => Ok(Arc::new(RemoteLogProbModel::new(
                endpoint.clone(),
                Duration::from_millis(*timeout_ms),
                *retry,
            ))),
            _ => {
                let m = self.build_model()?;
                Ok(Arc::new(ArcProvider(m)))
            }
        }
    }
}

struct ArcProvider(Arc<dyn ConditionalTokenModel>);

impl LogProbProvider for ArcProvider {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>, MixEvalError> {
        self.0.as_ref().token_logprobs(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Vocabulary {
        Vocabulary::new(["a", "b"])
    }

    #[test]
    fn vocabulary_ids_follow_first_appearance() {
        let v = Vocabulary::new(["x", "y", "x", "z"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("z"), Some(2));
        assert_eq!(v.encode(&["y", "q"]), vec![1, u32::MAX]);
    }

    #[test]
    fn table_backoff() {
        let spec: NGramTableSpec = serde_json::from_str(
            r#"{"vocab":["a","b","c"],"order":3,
                "default":{"a":1.0},
                "contexts":{"a":{"b":1.0},"a b":{"c":1.0}}}"#,
        )
        .unwrap();
        let m = NGramTableModel::from_spec(&spec).unwrap();
        assert_eq!(m.prob(&[], 0), 1.0);
        assert_eq!(m.prob(&[0], 1), 1.0);
        assert_eq!(m.prob(&[0, 1], 2), 1.0);
        // "c a" is not stored; backs off to "a".
        assert_eq!(m.prob(&[2, 0], 1), 1.0);
        assert_eq!(m.prob(&[2, 2], 0), 1.0);
    }

    #[test]
    fn table_rejects_bad_distributions() {
        let bad = |json: &str| NGramTableModel::from_spec(&serde_json::from_str(json).unwrap()).is_err();
        assert!(bad(r#"{"vocab":["a","b"],"order":2,"default":{"a":0.7}}"#));
        assert!(bad(r#"{"vocab":["a","b"],"order":2,"contexts":{"a":{"z":1.0}}}"#));
        assert!(bad(r#"{"vocab":["a","b"],"order":2,"contexts":{"a b":{"a":1.0}}}"#));
        assert!(bad(r#"{"vocab":["a","b"],"order":2,"default":{"a":1.5,"b":-0.5}}"#));
    }

    #[test]
    fn mixture_pointwise() {
        let p: Arc<dyn ConditionalTokenModel> = Arc::new(UniformModel::new(ab()).unwrap());
        let r: Arc<dyn ConditionalTokenModel> = Arc::new(
            NGramTableModel::new(ab(), 1, vec![1.0, 0.0], HashMap::new()).unwrap(),
        );
        let q = mix(p.clone(), r.clone(), 0.5).unwrap();
        assert_eq!(q.next_token_distribution(&[]), vec![0.75, 0.25]);
        let q0 = mix(p.clone(), r.clone(), 0.0).unwrap();
        assert_eq!(q0.next_token_distribution(&[1]), p.next_token_distribution(&[1]));
        let q1 = mix(p.clone(), r.clone(), 1.0).unwrap();
        assert_eq!(q1.next_token_distribution(&[0]), r.next_token_distribution(&[0]));
        assert!(matches!(mix(p.clone(), r.clone(), 1.5), Err(MixEvalError::InvalidEpsilon(_))));
        let other: Arc<dyn ConditionalTokenModel> =
            Arc::new(UniformModel::new(Vocabulary::new(["a", "c"])).unwrap());
        assert!(matches!(mix(p, other, 0.1), Err(MixEvalError::VocabularyMismatch)));
    }

    #[test]
    fn model_spec_forms() {
        let t: ModelSpec = serde_json::from_str(r#"{"vocab":["a"],"order":1}"#).unwrap();
        assert!(matches!(t, ModelSpec::Table(_)));
        let u: ModelSpec = serde_json::from_str(r#"{"uniform":["a","b"]}"#).unwrap();
        assert_eq!(u.build_model().unwrap().vocabulary().len(), 2);
        let r: ModelSpec = serde_json::from_str(r#"{"endpoint":"http://x"}"#).unwrap();
        assert!(r.build_model().is_err());
        assert!(r.build_provider().is_ok());
    }
}
