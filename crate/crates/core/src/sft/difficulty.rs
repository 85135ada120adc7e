use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DifficultyGroup, DifficultyLabel, DifficultyScorer, InstructionSample, SftError};
use crate::endpoint::{with_retry, RetryPolicy};

/// Labels texts in one request, order-preserving.
pub fn label_difficulty(
    texts: &[&str],
    scorer: &dyn DifficultyScorer,
    retry: &RetryPolicy,
) -> Result<Vec<DifficultyLabel>, SftError> {
    let raw = with_retry(retry, || scorer.labels(texts))?.value;
    if raw.len() != texts.len() {
        return Err(SftError::Protocol(format!(
            "expected {} labels, got {}",
            texts.len(),
            raw.len()
        )));
    }
    raw.into_iter()
        .enumerate()
        .map(|(index, value)| {
            value
                .parse()
                .map_err(|_| SftError::InvalidLabel { index, value })
        })
        .collect()
}

/// Labels samples in batches of `batch_size`, setting `difficulty`.
pub fn label_samples(
    samples: &mut [InstructionSample],
    scorer: &dyn DifficultyScorer,
    batch_size: usize,
    retry: &RetryPolicy,
) -> Result<(), SftError> {
    if batch_size == 0 {
        return Err(SftError::InvalidConfig("batch_size must be positive".into()));
    }
    for chunk in samples.chunks_mut(batch_size) {
        let texts: Vec<String> = chunk.iter().map(|s| s.scoring_text()).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let labels = label_difficulty(&refs, scorer, retry)?;
        for (s, l) in chunk.iter_mut().zip(labels) {
            s.difficulty = Some(l);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeepGroup {
    A,
    B,
    Both,
}

impl KeepGroup {
    fn keeps(self, g: DifficultyGroup) -> bool {
        match self {
            KeepGroup::Both => true,
            KeepGroup::A => g == DifficultyGroup::A,
            KeepGroup::B => g == DifficultyGroup::B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressReport {
    pub per_label: BTreeMap<DifficultyLabel, usize>,
    pub input: usize,
    pub kept: usize,
}

/// Keeps samples whose label falls in the selected tier.
pub fn compress_by_difficulty(
    pool: Vec<InstructionSample>,
    keep: KeepGroup,
) -> Result<(Vec<InstructionSample>, CompressReport), SftError> {
    let mut per_label = BTreeMap::new();
    for s in &pool {
        let l = s.difficulty.ok_or_else(|| SftError::Unlabeled(s.id.clone()))?;
        *per_label.entry(l).or_insert(0) += 1;
    }
    let input = pool.len();
    let kept: Vec<_> = pool
        .into_iter()
        .filter(|s| keep.keeps(s.difficulty.expect("checked").group()))
        .collect();
    Ok((
        kept.clone(),
        CompressReport {
            per_label,
            input,
            kept: kept.len(),
        },
    ))
}
