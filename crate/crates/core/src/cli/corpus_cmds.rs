//! filter, recall, dedup, decontam and quality.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use curate::corpus::{write_corpus, CorpusWriter, RunManifest, TokenizerSpec};
use curate::decontam::{build_ngram_index, decontaminate_corpus, Benchmark, ContaminationPolicy, IndexOptions, NGramIndex};
use curate::dedup::{corpus_signatures, dedup_with_signatures, read_signatures, write_signatures, DedupConfig};
use curate::filter::{FilterRuleSet, HeuristicFilter, CODE_RULES_V1, FINEWEB_LIKE_V1};
use curate::quality::{gate, GatePolicy};
use curate::recall::{recall, sample_negatives, train_classifier, ClassifierConfig, ClassifierModel};

use super::{for_each_chunk, invalid, load_json, print_json, read_docs, write_json};

const CHUNK: usize = 8192;

fn manifest_tokenizer(manifest: &Option<PathBuf>) -> anyhow::Result<TokenizerSpec> {
    match manifest {
        Some(p) => Ok(RunManifest::load(p).map_err(|e| invalid(e.to_string()))?.tokenizer),
        None => Ok(TokenizerSpec::default()),
    }
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Take heuristic parameters from the first `heuristic` stage of this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = FINEWEB_LIKE_V1)]
    ruleset: String,
    #[arg(long, default_value = CODE_RULES_V1)]
    code_ruleset: String,
    /// Where the colon-ending rule applies: math, all or off.
    #[arg(long)]
    colon: Option<String>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rejects: Option<PathBuf>,
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize)]
struct FilterStats {
    input: usize,
    kept: usize,
    rejected: usize,
    failed_rules: BTreeMap<String, usize>,
    line_errors: usize,
}

pub fn filter(a: FilterArgs) -> anyhow::Result<()> {
    let mut f = match &a.manifest {
        Some(p) => {
            let m = RunManifest::load(p).map_err(|e| invalid(e.to_string()))?;
            match m.stages.iter().find(|s| s.kind == "heuristic") {
                Some(s) if !s.params.is_null() => serde_json::from_value(s.params.clone())
                    .map_err(|e| invalid(format!("heuristic params: {e}")))?,
                _ => HeuristicFilter::default(),
            }
        }
        None => HeuristicFilter {
            web: FilterRuleSet::named(&a.ruleset).map_err(|e| invalid(e.to_string()))?,
            code: FilterRuleSet::named(&a.code_ruleset).map_err(|e| invalid(e.to_string()))?,
            ..HeuristicFilter::default()
        },
    };
    if let Some(c) = &a.colon {
        f.colon = serde_json::from_value(serde_json::Value::String(c.clone()))
            .map_err(|_| invalid(format!("unknown colon scope {c:?}")))?;
    }
    f.validate().map_err(|e| invalid(e.to_string()))?;

    let mut kept = CorpusWriter::create(&a.out)?;
    let mut rejects = a.rejects.as_ref().map(CorpusWriter::create).transpose()?;
    let mut stats = FilterStats::default();
    let errors = for_each_chunk(&a.input, CHUNK, |docs| {
        let verdicts: Vec<_> = docs.par_iter().map(|d| f.evaluate(d)).collect();
        for (mut d, v) in docs.into_iter().zip(verdicts) {
            stats.input += 1;
            if v.keep {
                stats.kept += 1;
                kept.write(&d)?;
            } else {
                stats.rejected += 1;
                for r in &v.failed_rules {
                    *stats.failed_rules.entry(r.clone()).or_default() += 1;
                }
                if let Some(w) = &mut rejects {
                    d.meta.insert("failed_rules".into(), v.failed_rules.join(","));
                    w.write(&d)?;
                }
            }
        }
        Ok(())
    })?;
    stats.line_errors = errors.len();
    kept.finish()?;
    if let Some(w) = rejects {
        w.finish()?;
    }
    match &a.stats {
        Some(p) => write_json(p, &stats),
        None => print_json(&stats),
    }
}

#[derive(Debug, Subcommand)]
pub enum RecallCmd {
    /// Train a recall model from positive and negative examples.
    Train(RecallTrainArgs),
    /// Keep documents the model scores at or above a threshold.
    Score(RecallScoreArgs),
}

#[derive(Debug, Args)]
pub struct RecallTrainArgs {
    #[arg(long)]
    pos: PathBuf,
    /// Negatives. Without it, `--neg-pool` is sampled 1:1.
    #[arg(long)]
    neg: Option<PathBuf>,
    #[arg(long, conflicts_with = "neg")]
    neg_pool: Option<PathBuf>,
    #[arg(long, default_value = "math")]
    domain: String,
    /// JSON classifier config (features and training hyperparameters).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecallScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn recall_cmd(cmd: RecallCmd) -> anyhow::Result<()> {
    match cmd {
        RecallCmd::Train(a) => {
            let mut cfg: ClassifierConfig = match &a.config {
                Some(p) => load_json(p, "classifier config")?,
                None => ClassifierConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.hyper.seed = s;
            }
            let pos = read_docs(&a.pos)?;
            let neg = match (&a.neg, &a.neg_pool) {
                (Some(n), _) => read_docs(n)?,
                (None, Some(pool)) => sample_negatives(&read_docs(pool)?, pos.len(), cfg.hyper.seed),
                (None, None) => return Err(invalid("one of --neg and --neg-pool is required")),
            };
            let (model, report) = train_classifier(&a.domain, &pos, &neg, cfg).map_err(|e| invalid(e.to_string()))?;
            model.save(&a.out)?;
            print_json(&report)
        }
        RecallCmd::Score(a) => {
            if !(0.0..=1.0).contains(&a.threshold) {
                return Err(invalid(format!("threshold {} outside [0, 1]", a.threshold)));
            }
            let model = ClassifierModel::load(&a.model).map_err(|e| invalid(e.to_string()))?;
            let (kept, report) = recall(&model, read_docs(&a.input)?, a.threshold);
            write_corpus(&a.out, &kept)?;
            match &a.report {
                Some(p) => write_json(p, &report),
                None => print_json(&report),
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    bands: usize,
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    shingle_width: usize,
    /// Compare across sources instead of within each source.
    #[arg(long)]
    global: bool,
    /// Tokenizer taken from this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Signature sidecar. Signatures of ids already in it are reused, and
    /// the file is rewritten with the current corpus.
    #[arg(long)]
    signatures: Option<PathBuf>,
}

pub fn dedup_cmd(a: DedupArgs) -> anyhow::Result<()> {
    let config = DedupConfig {
        shingle_width: a.shingle_width,
        k: a.k,
        bands: a.bands,
        rows: a.rows,
        threshold: a.threshold,
        seed: a.seed,
        per_source: !a.global,
        tokenizer: manifest_tokenizer(&a.manifest)?,
    };
    config.validate().map_err(|e| invalid(e.to_string()))?;
    let docs = read_docs(&a.input)?;

    let mut cached = match &a.signatures {
        Some(p) if p.exists() => read_signatures(p).with_context(|| format!("reading {}", p.display()))?,
        _ => HashMap::new(),
    };
    cached.retain(|_, s| s.as_ref().is_none_or(|s| s.mins.len() == config.k && s.perm_seed == config.seed));
    let missing: Vec<usize> = (0..docs.len()).filter(|&i| !cached.contains_key(&docs[i].id)).collect();
    let fresh = {
        let subset: Vec<_> = missing.iter().map(|&i| docs[i].clone()).collect();
        corpus_signatures(&subset, &config)
    };
    let mut fresh = missing.into_iter().zip(fresh).collect::<HashMap<_, _>>();
    let sigs: Vec<_> = (0..docs.len())
        .map(|i| fresh.remove(&i).unwrap_or_else(|| cached[&docs[i].id].clone()))
        .collect();
    if let Some(p) = &a.signatures {
        write_signatures(p, &docs, &sigs, &config)?;
    }

    let (kept, report) = dedup_with_signatures(docs, &sigs, &config)?;
    write_corpus(&a.out, &kept)?;
    match &a.report {
        Some(p) => write_json(p, &report),
        None => print_json(&serde_json::json!({
            "input_count": report.input_count,
            "kept_count": report.kept_count,
            "removed_count": report.removed_count,
            "clusters": report.clusters.len(),
        })),
    }
}

#[derive(Debug, Subcommand)]
pub enum DecontamCmd {
    /// Build an n-gram index over benchmark files.
    Build(DecontamBuildArgs),
    /// Drop documents sharing any indexed n-gram.
    Run(DecontamRunArgs),
}

#[derive(Debug, Args)]
pub struct DecontamBuildArgs {
    /// Benchmark JSONL (repeatable). Records carry `question` and optional `answer`.
    #[arg(long = "bench", required = true)]
    benches: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Index questions only.
    #[arg(long)]
    no_answers: bool,
    /// Tokenizer taken from this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecontamRunArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn decontam_cmd(cmd: DecontamCmd) -> anyhow::Result<()> {
    match cmd {
        DecontamCmd::Build(a) => {
            let spec = manifest_tokenizer(&a.manifest)?;
            let benches = a
                .benches
                .iter()
                .map(|p| Benchmark::load(p).map_err(|e| invalid(e.to_string())))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let opts = IndexOptions {
                n: a.n,
                include_answers: !a.no_answers,
            };
            let index = build_ngram_index(&benches, opts, &spec).map_err(|e| invalid(e.to_string()))?;
            index.save(&a.out)?;
            print_json(&serde_json::json!({
                "benchmarks": index.benchmark_names,
                "n": index.n,
                "ngrams": index.len(),
            }))
        }
        DecontamCmd::Run(a) => {
            let index = NGramIndex::load(&a.index).map_err(|e| invalid(e.to_string()))?;
            let spec = index.spec.clone();
            let (kept, report) =
                decontaminate_corpus(read_docs(&a.input)?, &index, &spec, ContaminationPolicy::DropDocument)?;
            write_corpus(&a.out, &kept)?;
            match &a.report {
                Some(p) => write_json(p, &report),
                None => print_json(&report),
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn quality(a: QualityArgs) -> anyhow::Result<()> {
    let policy: GatePolicy = match &a.policy {
        Some(p) => load_json(p, "policy")?,
        None => GatePolicy::default(),
    };
    let docs = read_docs(&a.input)?;
    let scorers = policy.build_scorers();
    let present: std::collections::BTreeSet<_> = docs.iter().map(|d| d.source).collect();
    policy
        .validate_sources(present, &scorers)
        .map_err(|e| invalid(e.to_string()))?;
    let (kept, report) = gate(docs, &policy, &scorers)?;
    write_corpus(&a.out, &kept)?;
    match &a.report {
        Some(p) => write_json(p, &report),
        None => print_json(&report),
    }
}
