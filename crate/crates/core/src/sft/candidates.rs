use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Candidate, CandidateSet, Generator, InstructionSample, PromptTemplate, RewardModel, SftError};
use crate::endpoint::{with_retry, EndpointError, RetryPolicy};

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    pub n: usize,
    pub seed: u64,
    pub template: PromptTemplate,
    pub retry: RetryPolicy,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n: 4,
            seed: 0,
            template: PromptTemplate::step_by_step(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Requests the `n` candidates independently (candidate `i` with seed
/// `seed + i`) so one failure does not discard the others. Order follows
/// candidate index.
pub fn generate_candidates(
    instruction: &InstructionSample,
    generator: &dyn Generator,
    config: &GenerationConfig,
) -> Result<CandidateSet, SftError> {
    if config.n == 0 {
        return Err(SftError::InvalidConfig("n must be at least 1".into()));
    }
    let prompt = config.template.render(&instruction.instruction, "");
    let results: Vec<Result<String, EndpointError>> = (0..config.n)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed.wrapping_add(i as u64);
            with_retry(&config.retry, || {
                let mut texts = generator.generate(&prompt, 1, seed)?;
                match texts.len() {
                    1 => Ok(texts.pop().unwrap()),
                    k => Err(EndpointError::Protocol(format!("expected 1 text, got {k}"))),
                }
            })
            .map(|r| r.value)
        })
        .collect();
    let mut succeeded = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => succeeded.push((i, t)),
            Err(e) => failed.push((i, e.to_string())),
        }
    }
    if !failed.is_empty() {
        return Err(SftError::PartialCandidates {
            instruction_id: instruction.id.clone(),
            succeeded,
            failed,
        });
    }
    Ok(CandidateSet {
        instruction_id: instruction.id.clone(),
        candidates: succeeded
            .into_iter()
            .map(|(i, text)| Candidate {
                text,
                meta: [("seed".to_string(), config.seed.wrapping_add(i as u64).to_string())].into(),
            })
            .collect(),
        rewards: None,
    })
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chosen {
    pub index: usize,
    pub text: String,
    pub reward: f64,
}

/// Scores every candidate and keeps the best one. `cands.rewards` is
/// filled in.
pub fn rejection_sample_reward(
    cands: &mut CandidateSet,
    reward: &dyn RewardModel,
    retry: &RetryPolicy,
) -> Result<Chosen, SftError> {
    if cands.candidates.is_empty() {
        return Err(SftError::EmptyCandidates(cands.instruction_id.clone()));
    }
    let texts: Vec<&str> = cands.candidates.iter().map(|c| c.text.as_str()).collect();
    let rewards = with_retry(retry, || reward.rewards(&texts))?.value;
    if rewards.len() != texts.len() {
        return Err(SftError::Protocol(format!(
            "expected {} rewards, got {}",
            texts.len(),
            rewards.len()
        )));
    }
    if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(SftError::Protocol(format!("reward {i} is not finite")));
    }
    let index = argmax_first(&rewards).expect("non-empty");
    let chosen = Chosen {
        index,
        text: cands.candidates[index].text.clone(),
        reward: rewards[index],
    };
    cands.rewards = Some(rewards);
    Ok(chosen)
}
