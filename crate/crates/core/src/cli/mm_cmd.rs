//! mmfilter: drop image-text pairs whose embeddings disagree.

use std::path::PathBuf;

use clap::Args;

use curate::mm::{filter_pairs, EmbeddingProvider, HttpEmbeddingProvider, PairFilterConfig, PairRecord};

use super::{invalid, print_json, read_jsonl, write_json, write_jsonl, EndpointArgs};

#[derive(Debug, Args)]
pub struct MmArgs {
    /// Pair records as JSONL. Records may carry precomputed embeddings.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
    /// Pairs below the threshold.
    #[arg(long)]
    dropped: Option<PathBuf>,
    /// Pairs that could not be scored.
    #[arg(long)]
    unscored: Option<PathBuf>,
    /// Similarity histogram and counts.
    #[arg(long)]
    hist: Option<PathBuf>,
    /// Embedding service URL, used for pairs without embeddings.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

pub fn run(a: MmArgs) -> anyhow::Result<()> {
    let pairs: Vec<PairRecord> = read_jsonl(&a.input)?;
    let provider = a
        .provider
        .as_ref()
        .map(|url| HttpEmbeddingProvider::new(url, a.endpoint.timeout()));
    let config = PairFilterConfig {
        threshold: a.threshold,
        batch_size: a.batch_size,
        retry: a.endpoint.retry(),
    };
    let outcome = filter_pairs(
        pairs,
        provider.as_ref().map(|p| p as &dyn EmbeddingProvider),
        &config,
    )
    .map_err(|e| invalid(e.to_string()))?;
    write_jsonl(&a.out, &outcome.kept)?;
    if let Some(p) = &a.dropped {
        write_jsonl(p, &outcome.dropped)?;
    }
    if let Some(p) = &a.unscored {
        write_jsonl(p, &outcome.unscored)?;
    }
    match &a.hist {
        Some(p) => write_json(p, &outcome.report),
        None => print_json(&outcome.report),
    }
}
