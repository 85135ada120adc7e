use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cli;

use cli::corpus_cmds::{DecontamCmd, DedupArgs, FilterArgs, QualityArgs, RecallCmd};
use cli::mixeval_cmd::MixevalCmd;
use cli::mm_cmd::MmArgs;
use cli::pipeline_cmd::PipelineCmd;
use cli::sft_cmd::SftCmd;
use cli::Invalid;

/// Corpus curation toolkit.
///
/// Exit codes: 0 success, 2 invalid input or configuration, 3 processing failure.
#[derive(Debug, Parser)]
#[command(name = "curate", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Heuristic document filters.
    Filter(FilterArgs),
    /// Train or apply a recall classifier.
    #[command(subcommand)]
    Recall(RecallCmd),
    /// Near-duplicate removal.
    Dedup(DedupArgs),
    /// Benchmark n-gram decontamination.
    #[command(subcommand)]
    Decontam(DecontamCmd),
    /// Per-source quality gate.
    Quality(QualityArgs),
    /// Offline evaluation math.
    #[command(subcommand)]
    Mixeval(MixevalCmd),
    /// Instruction data synthesis.
    #[command(subcommand)]
    Sft(SftCmd),
    /// Image-text pair filter.
    Mmfilter(MmArgs),
    /// Full manifest-driven runs.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Filter(a) => cli::corpus_cmds::filter(a),
        Cmd::Recall(c) => cli::corpus_cmds::recall_cmd(c),
        Cmd::Dedup(a) => cli::corpus_cmds::dedup_cmd(a),
        Cmd::Decontam(c) => cli::corpus_cmds::decontam_cmd(c),
        Cmd::Quality(a) => cli::corpus_cmds::quality(a),
        Cmd::Mixeval(c) => cli::mixeval_cmd::run(c),
        Cmd::Sft(c) => cli::sft_cmd::run(c),
        Cmd::Mmfilter(a) => cli::mm_cmd::run(a),
        Cmd::Pipeline(c) => cli::pipeline_cmd::run(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
