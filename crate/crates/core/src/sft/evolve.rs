use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Generator, InstructionSample, LineageStep, SftError};
use crate::endpoint::{with_retry, RetryPolicy};
use crate::hash::hash_str;

/// Prompt text with `{instruction}` and optional `{context}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate(pub String);

impl PromptTemplate {
    pub fn evolve() -> Self {
        PromptTemplate(include_str!("../../templates/evolve.txt").into())
    }

    /// Context-enhanced query rewriting; pair with a [`ContextLookup`].
    pub fn knowledge() -> Self {
        PromptTemplate(include_str!("../../templates/knowledge.txt").into())
    }

    pub fn step_by_step() -> Self {
        PromptTemplate(include_str!("../../templates/step_by_step.txt").into())
    }

    pub fn render(&self, instruction: &str, context: &str) -> String {
        self.0.replace("{context}", context).replace("{instruction}", instruction)
    }

    pub fn wants_context(&self) -> bool {
        self.0.contains("{context}")
    }
}

/// Retrieves supporting text for an instruction.
pub trait ContextLookup: Send + Sync {
    fn lookup(&self, instruction: &str) -> Option<String>;
}

impl<F> ContextLookup for F
where
    F: Fn(&str) -> Option<String> + Send + Sync,
{
    fn lookup(&self, instruction: &str) -> Option<String> {
        self(instruction)
    }
}

pub struct EvolveConfig<'a> {
    pub rounds: usize,
    pub variants: usize,
    pub seed: u64,
    pub template: PromptTemplate,
    pub retry: RetryPolicy,
    pub context: Option<&'a dyn ContextLookup>,
}

impl Default for EvolveConfig<'_> {
    fn default() -> Self {
        EvolveConfig {
            rounds: 1,
            variants: 2,
            seed: 0,
            template: PromptTemplate::evolve(),
            retry: RetryPolicy::default(),
            context: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOutcome {
    /// Seeds first, then evolved samples in generation order.
    pub samples: Vec<InstructionSample>,
    /// New, non-duplicate instructions added in each round.
    pub per_round: Vec<usize>,
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Each round rewrites the previous round's new instructions (the seeds in
/// round 1). Exact duplicates after whitespace and case normalization are
/// dropped against everything seen so far.
pub fn evolve_instructions(
    seeds: Vec<InstructionSample>,
    generator: &dyn Generator,
    config: &EvolveConfig<'_>,
) -> Result<EvolveOutcome, SftError> {
    if config.rounds == 0 {
        return Err(SftError::InvalidConfig("rounds must be at least 1".into()));
    }
    let mut seen: HashSet<String> = HashSet::new();
    let mut samples = Vec::with_capacity(seeds.len());
    for s in seeds {
        if seen.insert(normalize(&s.instruction)) {
            samples.push(s);
        }
    }
    let mut frontier: Vec<usize> = (0..samples.len()).collect();
    let mut per_round = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        let outputs = frontier
            .par_iter()
            .map(|&i| {
                let parent = &samples[i];
                let context = match (config.template.wants_context(), config.context) {
                    (true, Some(l)) => l.lookup(&parent.instruction).unwrap_or_default(),
                    _ => String::new(),
                };
                let prompt = config.template.render(&parent.instruction, &context);
                let seed = config.seed ^ hash_str(&parent.id, round as u64);
                with_retry(&config.retry, || generator.generate(&prompt, config.variants, seed))
                    .map(|r| r.value)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut next = Vec::new();
        for (&pi, texts) in frontier.iter().zip(outputs) {
            for (k, text) in texts.into_iter().enumerate() {
                let text = text.trim().to_string();
                if text.is_empty() || !seen.insert(normalize(&text)) {
                    continue;
                }
                let parent = &samples[pi];
                let mut lineage = parent.lineage.clone();
                lineage.push(LineageStep {
                    stage: format!("evolve-r{round}"),
                    parent_id: parent.id.clone(),
                });
                let child = InstructionSample {
                    id: format!("{}.r{round}v{k}", parent.id),
                    instruction: text,
                    domain_label: parent.domain_label.clone(),
                    lineage,
                    difficulty: None,
                    response: None,
                    meta: parent.meta.clone(),
                };
                next.push(samples.len());
                samples.push(child);
            }
        }
        per_round.push(next.len());
        frontier = next;
    }
    Ok(EvolveOutcome { samples, per_round })
}
