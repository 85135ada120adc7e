use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nll, LogProbProvider, MixEvalError};
use crate::corpus::{tokenize, Document, TokenizerSpec};

/// How per-provider worst sets combine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscardRule {
    /// Discard only samples in the worst fraction under every provider.
    #[default]
    Intersection,
    /// Discard samples in the worst fraction under any provider.
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValsetOptions {
    pub worst_fraction: f64,
    pub rule: DiscardRule,
}

impl Default for ValsetOptions {
    fn default() -> Self {
        ValsetOptions {
            worst_fraction: 0.2,
            rule: DiscardRule::Intersection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValsetReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub worst_per_provider: usize,
    pub rule: DiscardRule,
    /// Per provider, the worst samples' ids, worst first.
    pub worst_ids: Vec<Vec<String>>,
    pub discarded_ids: Vec<String>,
}

/// Ranks samples by per-token NLL under each provider (highest first, ties
/// by ascending id) and discards those in the worst `worst_fraction`
/// according to `options.rule`.
pub fn build_web_validation_set(
    samples: Vec<Document>,
    providers: &[&dyn LogProbProvider],
    spec: &TokenizerSpec,
    options: &ValsetOptions,
) -> Result<(Vec<Document>, ValsetReport), MixEvalError> {
    if providers.is_empty() {
        return Err(MixEvalError::NoProviders);
    }
    let tokens: Vec<Vec<String>> = samples
        .par_iter()
        .map(|d| tokenize(&d.text, spec).tokens)
        .collect();
    let m = (options.worst_fraction * samples.len() as f64).floor() as usize;
    let mut worst_sets: Vec<HashSet<usize>> = Vec::with_capacity(providers.len());
    let mut worst_ids = Vec::with_capacity(providers.len());
    for (pi, provider) in providers.iter().enumerate() {
        let scores = tokens
            .par_iter()
            .zip(samples.par_iter())
            .map(|(t, d)| {
                nll(*provider, t)
                    .map(|r| r.nll_per_token)
                    .map_err(|e| MixEvalError::Provider {
                        provider: pi,
                        sample: d.id.clone(),
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| samples[a].id.cmp(&samples[b].id))
        });
        order.truncate(m);
        worst_ids.push(order.iter().map(|&i| samples[i].id.clone()).collect());
        worst_sets.push(order.into_iter().collect());
    }
    let discard = |i: usize| match options.rule {
        DiscardRule::Intersection => worst_sets.iter().all(|s| s.contains(&i)),
        DiscardRule::Union => worst_sets.iter().any(|s| s.contains(&i)),
    };
    let mut kept = Vec::new();
    let mut discarded_ids = Vec::new();
    for (i, d) in samples.into_iter().enumerate() {
        if discard(i) {
            discarded_ids.push(d.id);
        } else {
            kept.push(d);
        }
    }
    let report = ValsetReport {
        input_count: kept.len() + discarded_ids.len(),
        kept_count: kept.len(),
        worst_per_provider: m,
        rule: options.rule,
        worst_ids,
        discarded_ids,
    };
    Ok((kept, report))
}
