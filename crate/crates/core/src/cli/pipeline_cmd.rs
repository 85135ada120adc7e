//! pipeline run / stats.

use std::path::PathBuf;

use clap::{Args, Subcommand};

use curate::corpus::RunManifest;
use curate::pipeline::{run_pipeline, stats, PipelineError, PipelineOptions};

use super::{invalid, print_json, read_docs, write_json};

#[derive(Debug, Subcommand)]
pub enum PipelineCmd {
    /// Run every enabled stage of a manifest and write the final mix.
    Run(RunArgs),
    /// Summarize a corpus: counts, tokens, lengths and domains.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; receives final.jsonl and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write each stage's output under stages/.
    #[arg(long)]
    keep_intermediate: bool,
    /// Accept stages out of the canonical order.
    #[arg(long)]
    allow_reorder: bool,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Tokenizer taken from this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}


pub fn run(cmd: PipelineCmd) -> anyhow::Result<()> {
    match cmd {
        PipelineCmd::Run(a) => {
            let mut manifest = RunManifest::load(&a.manifest).map_err(|e| invalid(e.to_string()))?;
            if let Some(s) = a.seed {
                manifest.seed = s;
            }
            let options = PipelineOptions {
                out_dir: Some(a.out.clone()),
                keep_intermediate: a.keep_intermediate,
                threads: a.threads,
                allow_reorder: a.allow_reorder,
            };
            match run_pipeline(&manifest, &options) {
                Ok(out) => {
                    let r = &out.report;
                    eprintln!("loaded {} documents", r.loaded_count);
                    for s in &r.stages {
                        let state = if s.enabled { "" } else { " (disabled)" };
                        eprintln!(
                            "{:<16} {:>10} -> {:<10} {:>7} ms{state}",
                            s.name, s.input_count, s.output_count, s.duration_ms
                        );
                    }
                    eprintln!("wrote {} documents to {}", r.output_count, a.out.join("final.jsonl").display());
                    Ok(())
                }
                Err(PipelineError::Validation(v)) => {
                    for viol in &v.violations {
                        eprintln!("{}: {}", viol.code, viol.message);
                    }
                    Err(invalid(format!("manifest has {} problem(s)", v.violations.len())))
                }
                Err(e) => Err(e.into()),
            }
        }
        PipelineCmd::Stats(a) => {
            let spec = match &a.manifest {
                Some(p) => RunManifest::load(p).map_err(|e| invalid(e.to_string()))?.tokenizer,
                None => Default::default(),
            };
            let report = stats(&read_docs(&a.input)?, &spec);
            match &a.out {
                Some(p) => write_json(p, &report),
                None => print_json(&report),
            }
        }
    }
}
