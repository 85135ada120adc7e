//! Stage kinds, their parameters, and how each one runs.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_corpus, Document, RunManifest, Source, StageConfig, ValidationReport};
use crate::decontam::{build_ngram_index, decontaminate_corpus, Benchmark, ContaminationPolicy, IndexOptions, NGramIndex};
use crate::dedup::{dedup, DedupConfig};
use crate::filter::HeuristicFilter;
use crate::hash::hash_str;
use crate::quality::{gate, GatePolicy};
use crate::recall::{recall, sample_negatives, train_classifier, ClassifierConfig, ClassifierModel};

pub type StageResult = Result<(Vec<Document>, serde_json::Value), Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Heuristic,
    Recall,
    Dedup,
    Quality,
    Decontaminate,
}

impl StageKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "heuristic" => StageKind::Heuristic,
            "recall" => StageKind::Recall,
            "dedup" => StageKind::Dedup,
            "quality" => StageKind::Quality,
            "decontaminate" => StageKind::Decontaminate,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecallTrain {
    pub positives: PathBuf,
    /// Defaults to a sample of the stage input, as many as positives.
    #[serde(default)]
    pub negatives: Option<PathBuf>,
    #[serde(default = "default_domain")]
    pub domain: String,
    #[serde(default)]
    pub config: Option<ClassifierConfig>,
}

fn default_domain() -> String {
    "math".into()
}

fn default_threshold() -> f64 {
    0.5
}

fn default_recall_sources() -> Vec<Source> {
    vec![Source::Web]
}

/// Scores documents of `sources` with a recall model (loaded or trained in
/// place); documents of other sources pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecallParams {
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub train: Option<RecallTrain>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_recall_sources")]
    pub sources: Vec<Source>,
}

fn default_n() -> usize {
    10
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecontamParams {
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub benchmarks: Vec<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "yes")]
    pub include_answers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum StagePlan {
    Heuristic(HeuristicFilter),
    Recall(RecallParams),
    Dedup(DedupConfig),
    Quality(GatePolicy),
    Decontaminate(DecontamParams),
}

#[derive(Debug, Clone)]
pub struct PlannedStage {
    pub config: StageConfig,
    pub kind: StageKind,
    pub plan: StagePlan,
}

impl PlannedStage {
    /// Stable hash of the kind and resolved parameters.
    pub fn fingerprint(&self) -> String {
        let body = serde_json::to_string(&self.plan).unwrap_or_default();
        format!("{:016x}", hash_str(&format!("{:?}|{body}", self.kind), 0))
    }
}

fn params_or_empty(v: &serde_json::Value) -> serde_json::Value {
    if v.is_null() {
        serde_json::json!({})
    } else {
        v.clone()
    }
}

fn parse_stage(stage: &StageConfig, kind: StageKind, manifest: &RunManifest) -> Result<StagePlan, String> {
    let params = params_or_empty(&stage.params);
    let has = |k: &str| params.get(k).is_some();
    let err = |e: serde_json::Error| e.to_string();
    Ok(match kind {
        StageKind::Heuristic => {
            let f: HeuristicFilter = serde_json::from_value(params).map_err(err)?;
            f.validate().map_err(|e| e.to_string())?;
            StagePlan::Heuristic(f)
        }
        StageKind::Recall => {
            let mut p: RecallParams = serde_json::from_value(params).map_err(err)?;
            if p.model.is_some() == p.train.is_some() {
                return Err("exactly one of `model` and `train` is required".into());
            }
            if !(0.0..=1.0).contains(&p.threshold) {
                return Err(format!("threshold {} outside [0, 1]", p.threshold));
            }
            p.model = p.model.map(|m| manifest.resolve(&m));
            if let Some(t) = &mut p.train {
                t.positives = manifest.resolve(&t.positives);
                t.negatives = t.negatives.as_ref().map(|n| manifest.resolve(n));
                let mut cfg = t.config.unwrap_or_default();
                if t.config.is_none() {
                    cfg.hyper.seed = manifest.seed;
                }
                cfg.features.validate().map_err(|e| e.to_string())?;
                t.config = Some(cfg);
            }
            StagePlan::Recall(p)
        }
        StageKind::Dedup => {
            let mut c: DedupConfig = serde_json::from_value(params.clone()).map_err(err)?;
            if !has("tokenizer") {
                c.tokenizer = manifest.tokenizer.clone();
            }
            if !has("seed") {
                c.seed = manifest.seed;
            }
            c.validate().map_err(|e| e.to_string())?;
            StagePlan::Dedup(c)
        }
        StageKind::Quality => {
            let p: GatePolicy = serde_json::from_value(params).map_err(err)?;
            // Only sources the run actually loads need a usable rule.
            let sources = manifest.sources.iter().map(|e| e.source);
            p.validate_sources(sources, &p.build_scorers()).map_err(|e| e.to_string())?;
            StagePlan::Quality(p)
        }
        StageKind::Decontaminate => {
            let mut p: DecontamParams = serde_json::from_value(params).map_err(err)?;
            if p.index.is_some() == !p.benchmarks.is_empty() {
                return Err("exactly one of `index` and `benchmarks` is required".into());
            }
            if p.n == 0 {
                return Err("n must be at least 1".into());
            }
            p.index = p.index.map(|i| manifest.resolve(&i));
            p.benchmarks = p.benchmarks.iter().map(|b| manifest.resolve(b)).collect();
            StagePlan::Decontaminate(p)
        }
    })
}

/// Resolves every stage, collecting all problems. Stages must follow the
/// canonical order unless `allow_reorder` is set.
pub fn plan_stages(manifest: &RunManifest, allow_reorder: bool) -> Result<Vec<PlannedStage>, ValidationReport> {
    let mut report = manifest.validate();
    let mut planned = Vec::new();
    let mut last: Option<(StageKind, &str)> = None;
    for stage in &manifest.stages {
        let Some(kind) = StageKind::parse(&stage.kind) else {
            report.push("stage_kind", format!("stage {:?} has unknown kind {:?}", stage.name, stage.kind));
            continue;
        };
        if let Some((prev, prev_name)) = last {
            if kind < prev && !allow_reorder {
                report.push(
                    "stage_order",
                    format!(
                        "stage {:?} ({:?}) runs after {:?} ({:?}); set allow_reorder to permit this",
                        stage.name, kind, prev_name, prev
                    ),
                );
            }
        }
        last = Some((kind, &stage.name));
        match parse_stage(stage, kind, manifest) {
            Ok(plan) => planned.push(PlannedStage {
                config: stage.clone(),
                kind,
                plan,
            }),
            Err(e) => report.push("stage_params", format!("stage {:?}: {e}", stage.name)),
        }
    }
    if report.is_valid() {
        Ok(planned)
    } else {
        Err(report)
    }
}

pub fn run_stage(stage: &PlannedStage, corpus: Vec<Document>, manifest: &RunManifest) -> StageResult {
    match &stage.plan {
        StagePlan::Heuristic(f) => {
            use rayon::prelude::*;
            let verdicts: Vec<Vec<String>> = corpus
                .par_iter()
                .map(|d| {
                    let v = f.evaluate(d);
                    if v.keep {
                        Vec::new()
                    } else {
                        v.failed_rules
                    }
                })
                .collect();
            let mut failed_rules = BTreeMap::<String, usize>::new();
            let mut kept = Vec::with_capacity(corpus.len());
            for (d, failed) in corpus.into_iter().zip(verdicts) {
                if failed.is_empty() {
                    kept.push(d);
                }
                for r in failed {
                    *failed_rules.entry(r).or_default() += 1;
                }
            }
            Ok((kept, serde_json::json!({ "failed_rules": failed_rules })))
        }
        StagePlan::Recall(p) => run_recall(p, corpus, manifest),
        StagePlan::Dedup(c) => {
            let (kept, report) = dedup(corpus, c)?;
            Ok((
                kept,
                serde_json::json!({
                    "clusters": report.clusters.len(),
                    "pairs_examined": report.pairs_examined,
                    "pairs_linked": report.pairs_linked,
                    "removed_count": report.removed_count,
                    "too_short_count": report.too_short_count,
                }),
            ))
        }
        StagePlan::Quality(p) => {
            let (kept, report) = gate(corpus, p, &p.build_scorers())?;
            Ok((kept, serde_json::to_value(report)?))
        }
        StagePlan::Decontaminate(p) => {
            let index = match &p.index {
                Some(path) => NGramIndex::load(path)?,
                None => {
                    let benches = p
                        .benchmarks
                        .iter()
                        .map(Benchmark::load)
                        .collect::<Result<Vec<_>, _>>()?;
                    let opts = IndexOptions {
                        n: p.n,
                        include_answers: p.include_answers,
                    };
                    build_ngram_index(&benches, opts, &manifest.tokenizer)?
                }
            };
            let (kept, report) =
                decontaminate_corpus(corpus, &index, &manifest.tokenizer, ContaminationPolicy::DropDocument)?;
            Ok((
                kept,
                serde_json::json!({
                    "removed_count": report.removed_ids.len(),
                    "hits_per_benchmark": report.hits_per_benchmark,
                    "documents_per_benchmark": report.documents_per_benchmark,
                }),
            ))
        }
    }
}

enum Slot {
    Pass(Document),
    Target(String),
}

fn run_recall(p: &RecallParams, corpus: Vec<Document>, manifest: &RunManifest) -> StageResult {
    let sources: HashSet<Source> = p.sources.iter().copied().collect();
    let mut targets = Vec::new();
    let mut slots = Vec::with_capacity(corpus.len());
    for d in corpus {
        if sources.contains(&d.source) {
            slots.push(Slot::Target(d.id.clone()));
            targets.push(d);
        } else {
            slots.push(Slot::Pass(d));
        }
    }
    let (model, train) = match (&p.model, &p.train) {
        (Some(path), _) => (ClassifierModel::load(path)?, None),
        (None, Some(t)) => {
            let positives = read_corpus(&t.positives)?.documents;
            let negatives = match &t.negatives {
                Some(n) => read_corpus(n)?.documents,
                None => sample_negatives(&targets, positives.len(), manifest.seed),
            };
            let (m, r) = train_classifier(&t.domain, &positives, &negatives, t.config.unwrap_or_default())?;
            (m, Some(r))
        }
        (None, None) => return Err("recall stage needs `model` or `train`".into()),
    };
    // `recall` keeps input order, so kept targets are a subsequence of the
    // target slots and a single forward merge restores the full order.
    let (kept_targets, report) = recall(&model, targets, p.threshold);
    let mut kept = kept_targets.into_iter().peekable();
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        match slot {
            Slot::Pass(d) => out.push(d),
            Slot::Target(id) => {
                if kept.peek().is_some_and(|d| d.id == id) {
                    out.extend(kept.next());
                }
            }
        }
    }
    Ok((out, serde_json::json!({ "recall": report, "train": train })))
}
