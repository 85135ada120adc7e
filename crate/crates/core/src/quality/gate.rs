use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scorer::{score_remote, QualityError, Scorer, ScorerSpec};
use super::syntax::{check_code_syntax, check_with_external, CodeLanguage, ExternalChecker};
use crate::corpus::{Document, Source};
use crate::endpoint::RetryPolicy;
use crate::filter::language_tag;

/// What a source must pass to survive the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceRule {
    /// Keep documents whose score from `scorer` is at least `min`.
    Score { scorer: String, min: f64 },
    /// Keep code whose syntax check passes.
    Syntax,
    PassThrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatePolicy {
    pub rules: BTreeMap<Source, SourceRule>,
    /// Scorers the policy can build itself. Callers may also pass scorers
    /// directly to [`gate`].
    pub scorers: BTreeMap<String, ScorerSpec>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub external_checker: Option<ExternalChecker>,
}

pub const MATH_SCORER: &str = "math-reasoning";
pub const WEB_SCORER: &str = "fineweb-edu";

impl Default for GatePolicy {
    /// Math ≥ 3 on its 1–5 scale, web ≥ 3 on the edu scale, code must
    /// pass the syntax check, everything else passes through.
    fn default() -> Self {
        let mut rules = BTreeMap::new();
        for s in Source::ALL {
            rules.insert(s, SourceRule::PassThrough);
        }
        rules.insert(
            Source::Math,
            SourceRule::Score {
                scorer: MATH_SCORER.into(),
                min: 3.0,
            },
        );
        rules.insert(
            Source::Web,
            SourceRule::Score {
                scorer: WEB_SCORER.into(),
                min: 3.0,
            },
        );
        rules.insert(Source::Code, SourceRule::Syntax);
        GatePolicy {
            rules,
            scorers: BTreeMap::new(),
            batch_size: 32,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            external_checker: None,
        }
    }
}

impl GatePolicy {
    pub fn pass_through() -> Self {
        GatePolicy {
            rules: Source::ALL.iter().map(|&s| (s, SourceRule::PassThrough)).collect(),
            ..GatePolicy::default()
        }
    }

    pub fn with_rule(mut self, source: Source, rule: SourceRule) -> Self {
        self.rules.insert(source, rule);
        self
    }

    pub fn build_scorers(&self) -> HashMap<String, Scorer> {
        self.scorers
            .iter()
            .map(|(name, spec)| (name.clone(), spec.build(name)))
            .collect()
    }

    /// Checks batch settings and that every threshold lies within the scale
    /// of a scorer that exists.
    pub fn validate(&self, scorers: &HashMap<String, Scorer>) -> Result<(), QualityError> {
        self.validate_sources(self.rules.keys().copied(), scorers)
    }

    /// [`GatePolicy::validate`] restricted to `sources`.
    pub fn validate_sources(
        &self,
        sources: impl IntoIterator<Item = Source>,
        scorers: &HashMap<String, Scorer>,
    ) -> Result<(), QualityError> {
        if self.batch_size == 0 {
            return Err(QualityError::InvalidPolicy("batch_size must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(QualityError::InvalidPolicy("max_in_flight must be positive".into()));
        }
        for source in sources {
            if let Some(SourceRule::Score { scorer, min }) = self.rules.get(&source) {
                let s = scorers
                    .get(scorer)
                    .ok_or_else(|| QualityError::UnknownScorer(scorer.clone()))?;
                let (lo, hi) = s.scale;
                if !(*min >= lo && *min <= hi) {
                    return Err(QualityError::InvalidPolicy(format!(
                        "threshold {min} for {source} is outside the {scorer} scale ({lo}, {hi})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceQuality {
    pub input: usize,
    pub kept: usize,
    /// Scored sources: counts per unit-width bin from the scale minimum.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub histogram: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<(f64, f64)>,
    pub syntax_failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub per_source: BTreeMap<Source, SourceQuality>,
    pub retries: u32,
    pub syntax_failures: usize,
}

fn bin(value: f64, (lo, hi): (f64, f64)) -> (usize, usize) {
    let bins = ((hi - lo).floor() as usize) + 1;
    let b = ((value - lo).floor().max(0.0) as usize).min(bins - 1);
    (b, bins)
}

/// Scores `indices` in batches with at most `max_in_flight` batches
/// outstanding. Results come back aligned with `indices`.
fn score_indices(
    corpus: &[Document],
    indices: &[usize],
    scorer: &Scorer,
    policy: &GatePolicy,
) -> Result<(Vec<f64>, u32), QualityError> {
    let batches: Vec<&[usize]> = indices.chunks(policy.batch_size).collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        for _ in 0..policy.max_in_flight.min(batches.len()) {
            let tx = tx.clone();
            let next = &next;
            let batches = &batches;
            s.spawn(move || loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                if b >= batches.len() {
                    break;
                }
                let texts: Vec<&str> = batches[b].iter().map(|&i| corpus[i].text.as_str()).collect();
                let res = score_remote(&texts, scorer, policy.batch_size, &policy.retry);
                let failed = res.is_err();
                if tx.send((b, res)).is_err() || failed {
                    // Stop pulling new work once anything has failed.
                    next.store(batches.len(), Ordering::Relaxed);
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut results: Vec<Option<_>> = (0..batches.len()).map(|_| None).collect();
    for (b, r) in rx {
        results[b] = Some(r);
    }
    let mut values = Vec::with_capacity(indices.len());
    let mut retries = 0;
    // First error in batch order, for a deterministic message.
    if let Some(e) = results.iter_mut().find_map(|r| match r {
        Some(Err(_)) => r.take().and_then(|r| r.err()),
        _ => None,
    }) {
        return Err(e);
    }
    for r in results {
        let outcome = r.expect("all batches dispatched")?;
        retries += outcome.retry_count;
        values.extend(outcome.scores.iter().map(|s| s.value));
    }
    Ok((values, retries))
}

/// Applies per-source rules. Kept documents stay in input order.
pub fn gate(
    corpus: Vec<Document>,
    policy: &GatePolicy,
    scorers: &HashMap<String, Scorer>,
) -> Result<(Vec<Document>, QualityReport), QualityError> {
    let mut by_source: BTreeMap<Source, Vec<usize>> = BTreeMap::new();
    for (i, d) in corpus.iter().enumerate() {
        by_source.entry(d.source).or_default().push(i);
    }
    for s in by_source.keys() {
        if !policy.rules.contains_key(s) {
            return Err(QualityError::MissingPolicy(s.to_string()));
        }
    }
    // Scorers for sources absent from this corpus are not required.
    policy.validate_sources(by_source.keys().copied(), scorers)?;

    let mut keep = vec![false; corpus.len()];
    let mut report = QualityReport::default();
    for (source, indices) in &by_source {
        let mut q = SourceQuality {
            input: indices.len(),
            ..SourceQuality::default()
        };
        match &policy.rules[source] {
            SourceRule::PassThrough => {
                for &i in indices {
                    keep[i] = true;
                }
            }
            SourceRule::Score { scorer, min } => {
                let s = &scorers[scorer];
                let (values, retries) = score_indices(&corpus, indices, s, policy)?;
                report.retries += retries;
                q.scale = Some(s.scale);
                for (&i, &v) in indices.iter().zip(&values) {
                    let (b, bins) = bin(v, s.scale);
                    if q.histogram.is_empty() {
                        q.histogram = vec![0; bins];
                    }
                    q.histogram[b] += 1;
                    keep[i] = v >= *min;
                }
            }
            SourceRule::Syntax => {
                let oks: Vec<bool> = indices
                    .par_iter()
                    .map(|&i| {
                        let doc = &corpus[i];
                        let lang = language_tag(doc)
                            .and_then(|l| l.parse::<CodeLanguage>().ok())
                            .unwrap_or(CodeLanguage::Other);
                        match &policy.external_checker {
                            Some(c) => check_with_external(&doc.text, lang, c).ok,
                            None => check_code_syntax(&doc.text, lang).ok,
                        }
                    })
                    .collect();
                for (&i, ok) in indices.iter().zip(oks) {
                    keep[i] = ok;
                    if !ok {
                        q.syntax_failures += 1;
                    }
                }
                report.syntax_failures += q.syntax_failures;
            }
        }
        q.kept = indices.iter().filter(|&&i| keep[i]).count();
        report.per_source.insert(*source, q);
    }
    let kept = corpus
        .into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect();
    Ok((kept, report))
}
