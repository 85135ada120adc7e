use curate::endpoint::{EndpointError, RetryPolicy};
use curate::mm::{filter_pairs, EmbeddingProvider, PairFilterConfig, PairRecord};

use crate::common::Outcome;

const PAIRS: usize = 2500;
const LOW: usize = 100;

/// Image `i` embeds at a fixed direction; its caption sits at an angle whose
/// cosine is 0.3 for the low pairs and 0.8 for the rest.
struct Angles;

fn unit(theta: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin(), 0.0]
}

impl EmbeddingProvider for Angles {
    fn embed_images(&self, refs: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
        Ok(refs.iter().map(|_| unit(0.0)).collect())
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
        Ok(texts
            .iter()
            .map(|t| unit(if t.starts_with("low") { 0.3f64.acos() } else { 0.8f64.acos() }))
            .collect())
    }
}

pub fn drop_rate() -> Outcome {
    // low pairs spread evenly through the set, one in every 25
    let pairs: Vec<PairRecord> = (0..PAIRS)
        .map(|i| {
            let kind = if i % 25 == 7 { "low" } else { "high" };
            PairRecord::new(format!("p{i}"), format!("img/{i}.png"), format!("{kind} caption {i}"))
        })
        .collect();
    let config = PairFilterConfig {
        threshold: 0.5,
        batch_size: 64,
        retry: RetryPolicy::none(),
    };
    let out = filter_pairs(pairs, Some(&Angles), &config).unwrap();
    let r = &out.report;
    Outcome::new(
        r.total == PAIRS && r.dropped == LOW && r.unscored.is_empty() && r.drop_rate == 0.04,
        format!(
            "{} pairs, {} dropped, {} kept, drop rate {:.4}",
            r.total, r.dropped, r.kept, r.drop_rate
        ),
    )
}
