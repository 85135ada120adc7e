//! mixeval: offline NLL, perplexity, choice probabilities, contamination
//! bound and validation-set construction.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use curate::corpus::{write_corpus, RunManifest, TokenizerSpec};
use curate::mixeval::{
    build_web_validation_set, contamination_bound_check, corrupted_token_rate, mix, nll_with, normalized_choice_probs,
    ChoiceScoreSet, DiscardRule, LogProbProvider, ModelSpec, NllOptions, ValsetOptions,
};
use curate::sft::argmax_first;

use super::{invalid, load_json, print_json, read_docs, read_jsonl, write_json, write_jsonl};

#[derive(Debug, Subcommand)]
pub enum MixevalCmd {
    /// Per-document negative log-likelihood.
    Nll(SeqArgs),
    /// Per-document perplexity.
    Ppl(SeqArgs),
    /// Normalized multiple-choice probabilities.
    Choices(ChoicesArgs),
    /// Check the contamination perplexity bound on a set of sequences.
    Bound(BoundArgs),
    /// Build a validation set by discarding the worst-scored documents.
    Valset(ValsetArgs),
}

#[derive(Debug, Args)]
pub struct TokArgs {
    /// Tokenizer taken from this manifest. Defaults to a plain whitespace split.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl TokArgs {
    fn spec(&self) -> anyhow::Result<TokenizerSpec> {
        match &self.manifest {
            Some(p) => Ok(RunManifest::load(p).map_err(|e| invalid(e.to_string()))?.tokenizer),
            None => Ok(TokenizerSpec::whitespace()),
        }
    }
}

#[derive(Debug, Args)]
pub struct SeqArgs {
    /// Model spec JSON: a table model, `{"uniform": [...]}` or `{"endpoint": url}`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Replace zero probabilities with this value instead of failing.
    #[arg(long)]
    floor: Option<f64>,
    /// Per-document results as JSONL.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    tok: TokArgs,
}

#[derive(Debug, Args)]
pub struct ChoicesArgs {
    /// JSONL of `{"scores": [...], "correct_index": k}`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Clean model spec.
    #[arg(long)]
    p: PathBuf,
    /// Contaminant model spec.
    #[arg(long)]
    r: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Sequences to check, as a document corpus.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Also sample this many sequences from the mixture and count tokens
    /// drawn from the contaminant.
    #[arg(long, default_value_t = 0)]
    corruption_samples: usize,
    #[arg(long, default_value_t = 100)]
    seq_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    tok: TokArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Intersection,
    Union,
}

#[derive(Debug, Args)]
pub struct ValsetArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Model spec JSON (repeatable); each is one scoring model.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    worst_fraction: f64,
    #[arg(long, value_enum, default_value_t = RuleArg::Intersection)]
    rule: RuleArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    tok: TokArgs,
}

fn provider(path: &Path) -> anyhow::Result<std::sync::Arc<dyn LogProbProvider>> {
    let spec: ModelSpec = load_json(path, "model spec")?;
    spec.build_provider().map_err(|e| invalid(e.to_string()))
}

fn emit<T: Serialize>(report: &Option<PathBuf>, value: &T) -> anyhow::Result<()> {
    match report {
        Some(p) => write_json(p, value),
        None => print_json(value),
    }
}

#[derive(Serialize)]
struct SeqRow {
    id: String,
    n: usize,
    total_nll: f64,
    nll_per_token: f64,
    ppl: f64,
}

fn sequences(a: &SeqArgs, want_ppl: bool) -> anyhow::Result<()> {
    let model = provider(&a.model)?;
    let spec = a.tok.spec()?;
    let docs = read_docs(&a.input)?;
    let opts = NllOptions {
        floor: a.floor,
        trace: false,
    };
    let rows = docs
        .par_iter()
        .map(|d| {
            let toks = spec.tokenize(&d.text);
            let r = nll_with(&*model, toks.as_slice(), &opts).map_err(|e| anyhow::anyhow!("{}: {e}", d.id))?;
            Ok(SeqRow {
                id: d.id.clone(),
                n: r.n,
                total_nll: r.total_nll,
                nll_per_token: r.nll_per_token,
                ppl: r.nll_per_token.exp(),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if want_ppl && rows.iter().any(|r| r.n == 0) {
        return Err(invalid("perplexity is undefined for empty documents"));
    }
    if let Some(out) = &a.out {
        write_jsonl(out, &rows)?;
    }
    let tokens: usize = rows.iter().map(|r| r.n).sum();
    let total: f64 = rows.iter().map(|r| r.total_nll).sum();
    let per_token = if tokens == 0 { 0.0 } else { total / tokens as f64 };
    let mut summary = serde_json::json!({
        "documents": rows.len(),
        "tokens": tokens,
        "total_nll": total,
        "nll_per_token": per_token,
    });
    if want_ppl {
        summary["ppl"] = per_token.exp().into();
    }
    emit(&a.report, &summary)
}

pub fn run(cmd: MixevalCmd) -> anyhow::Result<()> {
    match cmd {
        MixevalCmd::Nll(a) => sequences(&a, false),
        MixevalCmd::Ppl(a) => sequences(&a, true),
        MixevalCmd::Choices(a) => {
            let sets: Vec<ChoiceScoreSet> = read_jsonl(&a.input)?;
            let probs = sets
                .iter()
                .enumerate()
                .map(|(i, s)| normalized_choice_probs(s).map_err(|e| invalid(format!("record {}: {e}", i + 1))))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let graded: Vec<bool> = sets
                .iter()
                .zip(&probs)
                .filter_map(|(s, p)| s.correct_index.map(|c| argmax_first(p) == Some(c)))
                .collect();
            if let Some(out) = &a.out {
                let rows: Vec<_> = probs.iter().map(|p| serde_json::json!({ "probs": p })).collect();
                write_jsonl(out, &rows)?;
            }
            let correct = graded.iter().filter(|&&g| g).count();
            emit(
                &a.report,
                &serde_json::json!({
                    "sets": sets.len(),
                    "graded": graded.len(),
                    "correct": correct,
                    "accuracy": if graded.is_empty() { None } else { Some(correct as f64 / graded.len() as f64) },
                }),
            )
        }
        MixevalCmd::Bound(a) => {
            let load = |p: &Path| -> anyhow::Result<_> {
                let spec: ModelSpec = load_json(p, "model spec")?;
                spec.build_model().map_err(|e| invalid(e.to_string()))
            };
            let (p, r) = (load(&a.p)?, load(&a.r)?);
            let spec = a.tok.spec()?;
            let seqs: Vec<Vec<String>> = match &a.input {
                Some(path) => read_docs(path)?
                    .iter()
                    .map(|d| spec.tokenize(&d.text).as_slice().to_vec())
                    .collect(),
                None => Vec::new(),
            };
            let bound = contamination_bound_check(p.clone(), r.clone(), a.epsilon, &seqs)
                .map_err(|e| invalid(e.to_string()))?;
            let corruption = if a.corruption_samples > 0 {
                let q = mix(p, r, a.epsilon).map_err(|e| invalid(e.to_string()))?;
                Some(corrupted_token_rate(&q, a.corruption_samples, a.seq_len, a.seed))
            } else {
                None
            };
            let held = bound.violations.is_empty();
            emit(&a.report, &serde_json::json!({ "bound": bound, "corruption": corruption }))?;
            if held {
                Ok(())
            } else {
                anyhow::bail!("bound violated on {} sequence(s)", bound.violations.len())
            }
        }
        MixevalCmd::Valset(a) => {
            let providers = a.models.iter().map(|m| provider(m)).collect::<anyhow::Result<Vec<_>>>()?;
            let refs: Vec<&dyn LogProbProvider> = providers.iter().map(|p| &**p).collect();
            let opts = ValsetOptions {
                worst_fraction: a.worst_fraction,
                rule: match a.rule {
                    RuleArg::Intersection => DiscardRule::Intersection,
                    RuleArg::Union => DiscardRule::Union,
                },
            };
            let (kept, report) = build_web_validation_set(read_docs(&a.input)?, &refs, &a.tok.spec()?, &opts)?;
            write_corpus(&a.out, &kept)?;
            emit(&a.report, &report)
        }
    }
}
