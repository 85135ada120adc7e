//! Manifest-driven orchestration: load sources, run the enabled stages in
//! order, mix the survivors, and write the result plus a run report.

mod mix;
mod stages;
mod stats;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::corpus::{read_corpus, write_corpus, CorpusError, Document, RunManifest, ValidationReport};

pub use mix::{mix_final, MixReport};
pub use stages::{
    plan_stages, run_stage, DecontamParams, PlannedStage, RecallParams, RecallTrain, StageKind, StagePlan,
};
pub use stats::{stats, SourceStats, StatsReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub name: String,
    pub kind: String,
    pub enabled: bool,
    pub input_count: usize,
    pub output_count: usize,
    pub duration_ms: u64,
    pub fingerprint: String,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub path: PathBuf,
    pub documents: usize,
    pub line_errors: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub sources: Vec<LoadReport>,
    pub loaded_count: usize,
    pub stages: Vec<StageReport>,
    pub mix: Option<MixReport>,
    pub output_count: usize,
    /// Name of the stage that aborted the run, if any.
    pub failed_stage: Option<String>,
}

impl RunReport {
    /// Stage k's input equals stage k-1's output, starting from the loaded count.
    pub fn counts_telescope(&self) -> bool {
        let mut prev = self.loaded_count;
        for s in &self.stages {
            if s.input_count != prev {
                return false;
            }
            prev = s.output_count;
        }
        true
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid manifest: {} violation(s)", .0.violations.len())]
    Validation(ValidationReport),
    #[error("stage {stage:?} failed: {source}")]
    Stage {
        stage: String,
        report: Box<RunReport>,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Where `final.jsonl`, `report.json` and `stages/` go. `None` keeps
    /// everything in memory.
    pub out_dir: Option<PathBuf>,
    pub keep_intermediate: bool,
    /// Worker threads for data-parallel work; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Permit stages out of canonical order.
    pub allow_reorder: bool,
}

pub struct RunOutput {
    pub documents: Vec<Document>,
    pub report: RunReport,
}

/// Loads every source entry. The entry's source kind overrides whatever the
/// file says. Missing files and duplicate ids are validation failures.
/// Documents, the source entry each came from, and per-file load counts.
pub type LoadedSources = (Vec<Document>, Vec<usize>, Vec<LoadReport>);

pub fn load_sources(manifest: &RunManifest) -> Result<LoadedSources, PipelineError> {
    let mut problems = ValidationReport::default();
    let mut docs = Vec::new();
    let mut origin = Vec::new();
    let mut loads = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (entry_idx, entry) in manifest.sources.iter().enumerate() {
        let path = manifest.resolve(&entry.path);
        let loaded = match read_corpus(&path) {
            Ok(l) => l,
            Err(e) => {
                problems.push("source_file", e.to_string());
                continue;
            }
        };
        loads.push(LoadReport {
            path: path.clone(),
            documents: loaded.documents.len(),
            line_errors: loaded.errors.len(),
        });
        for mut d in loaded.documents {
            if let Some(first) = seen.insert(d.id.clone(), entry_idx) {
                problems.push(
                    "duplicate_id",
                    format!(
                        "document id {:?} in {} was already loaded from {}",
                        d.id,
                        path.display(),
                        manifest.resolve(&manifest.sources[first].path).display()
                    ),
                );
                continue;
            }
            d.source = entry.source;
            docs.push(d);
            origin.push(entry_idx);
        }
    }
    if problems.is_valid() {
        Ok((docs, origin, loads))
    } else {
        Err(PipelineError::Validation(problems))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_report(dir: &Path, report: &RunReport) -> Result<(), PipelineError> {
    let path = dir.join("report.json");
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&path, body + "\n").map_err(io_err(&path))
}

/// Runs the manifest end to end. With an output directory, a failing stage
/// still leaves a `report.json` naming it.
pub fn run_pipeline(manifest: &RunManifest, options: &PipelineOptions) -> Result<RunOutput, PipelineError> {
    match options.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool");
            pool.install(|| run_inner(manifest, options))
        }
        None => run_inner(manifest, options),
    }
}

fn run_inner(manifest: &RunManifest, options: &PipelineOptions) -> Result<RunOutput, PipelineError> {
    let planned = plan_stages(manifest, options.allow_reorder || manifest.allow_reorder)
        .map_err(PipelineError::Validation)?;
    let (mut corpus, origin, loads) = load_sources(manifest)?;
    let mut origin_of: HashMap<String, usize> =
        corpus.iter().zip(&origin).map(|(d, &o)| (d.id.clone(), o)).collect();

    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        if options.keep_intermediate {
            let stages_dir = dir.join("stages");
            std::fs::create_dir_all(&stages_dir).map_err(io_err(&stages_dir))?;
        }
    }

    let mut report = RunReport {
        version: VERSION.to_string(),
        seed: manifest.seed,
        loaded_count: corpus.len(),
        sources: loads,
        ..RunReport::default()
    };

    for (i, stage) in planned.iter().enumerate() {
        let input_count = corpus.len();
        let started = Instant::now();
        let (next, details) = if stage.config.enabled {
            match run_stage(stage, corpus, manifest) {
                Ok(r) => r,
                Err(source) => {
                    report.failed_stage = Some(stage.config.name.clone());
                    if let Some(dir) = &options.out_dir {
                        write_report(dir, &report)?;
                    }
                    return Err(PipelineError::Stage {
                        stage: stage.config.name.clone(),
                        report: Box::new(report),
                        source,
                    });
                }
            }
        } else {
            (corpus, serde_json::Value::Null)
        };
        corpus = next;
        report.stages.push(StageReport {
            name: stage.config.name.clone(),
            kind: stage.config.kind.clone(),
            enabled: stage.config.enabled,
            input_count,
            output_count: corpus.len(),
            duration_ms: started.elapsed().as_millis() as u64,
            fingerprint: stage.fingerprint(),
            details,
        });
        if let (Some(dir), true) = (&options.out_dir, options.keep_intermediate) {
            let path = dir.join("stages").join(format!("{:02}-{}.jsonl", i + 1, stage.config.name));
            write_corpus(&path, &corpus)?;
        }
    }

    let survivors_origin: Vec<usize> = corpus
        .iter()
        .map(|d| origin_of.remove(&d.id).unwrap_or(usize::MAX))
        .collect();
    let (documents, mix) = mix_final(corpus, &survivors_origin, manifest);
    report.mix = Some(mix);
    report.output_count = documents.len();

    if let Some(dir) = &options.out_dir {
        write_corpus(dir.join("final.jsonl"), &documents)?;
        write_report(dir, &report)?;
    }
    Ok(RunOutput { documents, report })
}
