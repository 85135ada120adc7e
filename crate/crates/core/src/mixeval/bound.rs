use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mix, perplexity, ConditionalTokenModel, MixEvalError, MixtureDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon: f64,
    /// 1 / (1 − ε).
    pub bound: f64,
    /// 1 + ε.
    pub first_order: f64,
    /// ppl_q / ppl_p per sequence.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Indices of sequences whose ratio exceeds the bound.
    pub violations: Vec<usize>,
    pub first_order_held: bool,
}

/// Relative slack for floating-point rounding in the ratio comparison.
const RATIO_TOLERANCE: f64 = 1e-9;

/// Checks ppl_q ≤ ppl_p / (1 − ε) on every sequence, with q the ε-mixture
/// of `p` and `r`.
pub fn contamination_bound_check(
    p: Arc<dyn ConditionalTokenModel>,
    r: Arc<dyn ConditionalTokenModel>,
    epsilon: f64,
    sequences: &[Vec<String>],
) -> Result<BoundReport, MixEvalError> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(MixEvalError::InvalidEpsilon(epsilon));
    }
    let q = mix(p.clone(), r, epsilon)?;
    let ratios = sequences
        .par_iter()
        .map(|s| {
            let pp = perplexity(p.as_ref(), s)?;
            let pq = perplexity(&q, s)?;
            Ok(pq.ppl / pp.ppl)
        })
        .collect::<Result<Vec<f64>, MixEvalError>>()?;
    let bound = 1.0 / (1.0 - epsilon);
    let first_order = 1.0 + epsilon;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let violations = ratios
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > bound * (1.0 + RATIO_TOLERANCE))
        .map(|(i, _)| i)
        .collect();
    Ok(BoundReport {
        epsilon,
        bound,
        first_order,
        max_ratio,
        violations,
        first_order_held: max_ratio <= first_order * (1.0 + RATIO_TOLERANCE),
        ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSample {
    pub total: usize,
    pub corrupted: usize,
    pub rate: f64,
}

fn draw(dist: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    // Rounding left the cumulative sum just under 1.
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
}

/// Samples `n_samples` sequences of `seq_len` tokens from the mixture by
/// latent source: each token comes from r with probability ε, otherwise
/// from p. Returns the fraction drawn from r. Sequence `i` uses its own
/// ChaCha stream, so the result does not depend on scheduling.
pub fn corrupted_token_rate(
    mixture: &MixtureDistribution,
    n_samples: usize,
    seq_len: usize,
    seed: u64,
) -> CorruptionSample {
    let e = mixture.epsilon;
    let corrupted: usize = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut ctx: Vec<u32> = Vec::with_capacity(seq_len);
            let mut hits = 0;
            for _ in 0..seq_len {
                let from_r = rng.gen::<f64>() < e;
                let dist = if from_r {
                    hits += 1;
                    mixture.contaminant.next_token_distribution(&ctx)
                } else {
                    mixture.clean.next_token_distribution(&ctx)
                };
                ctx.push(draw(&dist, &mut rng));
            }
            hits
        })
        .sum();
    let total = n_samples * seq_len;
    CorruptionSample {
        total,
        corrupted,
        rate: if total == 0 { 0.0 } else { corrupted as f64 / total as f64 },
    }
}
