//! sft: instruction evolution, candidate generation, reward ranking,
//! execution checks, difficulty labels and domain-balanced sampling.
//!
//! Every command that writes samples also writes a lineage sidecar
//! (`<out>.lineage.jsonl` unless `--lineage` says otherwise) with one
//! `{"id", "root_id", "lineage"}` record per output sample.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use curate::sft::{
    compress_by_difficulty, diversity_sample, evolve_instructions, generate_candidates, has_reasoning_steps,
    instruction_failures, label_samples, one_solution_per_problem, rejection_sample_code, rejection_sample_reward,
    CandidateSet, EvolveConfig, GenerationConfig, HttpDifficultyScorer, HttpGenerator, HttpRewardModel,
    InstructionRules, InstructionSample, KeepGroup, LineageStep, ProcessExecutor, PromptTemplate, SandboxLimits,
    SftError, ShortfallPolicy, DEFAULT_LANGUAGE_PREFERENCE,
};

use super::{invalid, load_json, print_json, read_jsonl, write_json, write_jsonl, EndpointArgs};

#[derive(Debug, Subcommand)]
pub enum SftCmd {
    /// Rewrite seed instructions into new variants over several rounds.
    Evolve(EvolveArgs),
    /// Generate candidate responses for each instruction.
    Gen(GenArgs),
    /// Keep the highest-reward candidate per instruction.
    Rank(RankArgs),
    /// Keep candidates whose code passes the instruction's tests.
    Verify(VerifyArgs),
    /// Attach difficulty labels.
    Label(LabelArgs),
    /// Draw a domain-balanced subset, optionally by difficulty tier.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    out: PathBuf,
    /// Lineage sidecar path. Defaults to `<out>.lineage.jsonl`.
    #[arg(long)]
    lineage: Option<PathBuf>,
}

#[derive(Serialize)]
struct LineageRecord<'a> {
    id: &'a str,
    root_id: &'a str,
    lineage: &'a [LineageStep],
}

impl OutArgs {
    fn write(&self, samples: &[InstructionSample]) -> anyhow::Result<()> {
        write_jsonl(&self.out, samples)?;
        let side = self.lineage.clone().unwrap_or_else(|| {
            let mut s = self.out.clone().into_os_string();
            s.push(".lineage.jsonl");
            s.into()
        });
        let records: Vec<_> = samples
            .iter()
            .map(|s| LineageRecord {
                id: &s.id,
                root_id: s.root_id(),
                lineage: &s.lineage,
            })
            .collect();
        write_jsonl(&side, &records)
    }
}

fn template(name: &str) -> anyhow::Result<PromptTemplate> {
    Ok(match name {
        "evolve" => PromptTemplate::evolve(),
        "knowledge" => PromptTemplate::knowledge(),
        "step_by_step" | "step-by-step" => PromptTemplate::step_by_step(),
        path => PromptTemplate(
            std::fs::read_to_string(path).map_err(|e| invalid(format!("template {path:?}: {e}")))?,
        ),
    })
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    out: OutArgs,
    /// Generator endpoint URL.
    #[arg(long)]
    generator: String,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long, default_value_t = 2)]
    variants: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// evolve, knowledge, step_by_step, or a template file.
    #[arg(long, default_value = "evolve")]
    template: String,
    /// Instruction rules JSON applied to evolved instructions; `none` disables.
    #[arg(long)]
    rules: Option<String>,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Candidate sets as JSONL.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    generator: String,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "step_by_step")]
    template: String,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Candidate sets from `sft gen`.
    #[arg(long = "in")]
    input: PathBuf,
    /// The instructions the candidates answer.
    #[arg(long)]
    instructions: PathBuf,
    #[arg(long)]
    reward: String,
    /// Drop chosen responses with fewer than two reasoning steps.
    #[arg(long)]
    require_steps: bool,
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Deserialize)]
struct TestRecord {
    instruction_id: String,
    tests: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// JSONL of `{"instruction_id", "tests"}`.
    #[arg(long)]
    tests: PathBuf,
    /// Runner command, whitespace separated (e.g. "python3 runner.py").
    #[arg(long)]
    runner: String,
    #[arg(long, default_value_t = 10_000)]
    time_limit_ms: u64,
    #[arg(long)]
    memory_limit_mb: Option<u64>,
    /// Candidate sets holding only passing candidates.
    #[arg(long)]
    out: PathBuf,
    /// Per-candidate verdicts as JSONL.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    scorer: String,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Strict,
    Redistribute,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KeepArg {
    A,
    B,
    Both,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Domain fractions, as `math=0.5,code=0.5` or a JSON file.
    #[arg(long)]
    target: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Strict)]
    policy: PolicyArg,
    /// Keep only this difficulty tier first (samples must be labeled).
    #[arg(long, value_enum)]
    keep: Option<KeepArg>,
    /// Keep one solution per `meta.problem_id`, preferring Python.
    #[arg(long)]
    one_per_problem: bool,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_target(s: &str) -> anyhow::Result<BTreeMap<String, f64>> {
    if Path::new(s).is_file() {
        return load_json(Path::new(s), "target");
    }
    s.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("target entry {kv:?} is not domain=fraction")))?;
            let v: f64 = v.trim().parse().map_err(|_| invalid(format!("bad fraction in {kv:?}")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn sft_err(e: SftError) -> anyhow::Error {
    match e {
        SftError::InvalidConfig(_)
        | SftError::InvalidTarget(_)
        | SftError::Shortfall { .. }
        | SftError::InsufficientPool { .. }
        | SftError::Unlabeled(_) => invalid(e.to_string()),
        other => other.into(),
    }
}

pub fn run(cmd: SftCmd) -> anyhow::Result<()> {
    match cmd {
        SftCmd::Evolve(a) => {
            let seeds: Vec<InstructionSample> = read_jsonl(&a.input)?;
            let generator = HttpGenerator::new(&a.generator, a.endpoint.timeout());
            let config = EvolveConfig {
                rounds: a.rounds,
                variants: a.variants,
                seed: a.seed,
                template: template(&a.template)?,
                retry: a.endpoint.retry(),
                context: None,
            };
            let outcome = evolve_instructions(seeds, &generator, &config).map_err(sft_err)?;
            let rules = match a.rules.as_deref() {
                Some("none") => None,
                Some(p) => Some(load_json::<InstructionRules>(Path::new(p), "instruction rules")?),
                None => Some(InstructionRules::default()),
            };
            let mut rejected = 0;
            let samples: Vec<_> = outcome
                .samples
                .into_iter()
                .filter(|s| {
                    // Seeds are kept as given; only evolved text is checked.
                    let ok = s.lineage.is_empty()
                        || rules.as_ref().is_none_or(|r| instruction_failures(&s.instruction, r).is_empty());
                    rejected += usize::from(!ok);
                    ok
                })
                .collect();
            a.out.write(&samples)?;
            print_json(&serde_json::json!({
                "samples": samples.len(),
                "per_round": outcome.per_round,
                "rejected_by_rules": rejected,
            }))
        }
        SftCmd::Gen(a) => {
            let instructions: Vec<InstructionSample> = read_jsonl(&a.input)?;
            let generator = HttpGenerator::new(&a.generator, a.endpoint.timeout());
            let config = GenerationConfig {
                n: a.n,
                seed: a.seed,
                template: template(&a.template)?,
                retry: a.endpoint.retry(),
            };
            let sets = instructions
                .iter()
                .map(|i| generate_candidates(i, &generator, &config))
                .collect::<Result<Vec<_>, _>>()
                .map_err(sft_err)?;
            write_jsonl(&a.out, &sets)?;
            print_json(&serde_json::json!({ "instructions": sets.len(), "candidates_each": a.n }))
        }
        SftCmd::Rank(a) => {
            let sets: Vec<CandidateSet> = read_jsonl(&a.input)?;
            let instructions: HashMap<String, InstructionSample> = read_jsonl::<InstructionSample>(&a.instructions)?
                .into_iter()
                .map(|s| (s.id.clone(), s))
                .collect();
            let reward = HttpRewardModel::new(&a.reward, a.endpoint.timeout());
            let retry = a.endpoint.retry();
            let mut out = Vec::with_capacity(sets.len());
            let mut no_steps = 0;
            for mut set in sets {
                let base = instructions
                    .get(&set.instruction_id)
                    .ok_or_else(|| invalid(format!("no instruction with id {:?}", set.instruction_id)))?;
                let chosen = rejection_sample_reward(&mut set, &reward, &retry).map_err(sft_err)?;
                if a.require_steps && !has_reasoning_steps(&chosen.text) {
                    no_steps += 1;
                    continue;
                }
                out.push(
                    base.clone()
                        .with_response(chosen.text)
                        .with_meta("reward", chosen.reward.to_string())
                        .with_meta("candidate_index", chosen.index.to_string()),
                );
            }
            a.out.write(&out)?;
            print_json(&serde_json::json!({ "kept": out.len(), "dropped_no_steps": no_steps }))
        }
        SftCmd::Verify(a) => {
            let sets: Vec<CandidateSet> = read_jsonl(&a.input)?;
            let tests: HashMap<String, String> = read_jsonl::<TestRecord>(&a.tests)?
                .into_iter()
                .map(|t| (t.instruction_id, t.tests))
                .collect();
            let command: Vec<&str> = a.runner.split_whitespace().collect();
            if command.is_empty() {
                return Err(invalid("--runner is empty"));
            }
            let executor = ProcessExecutor::new(command);
            let limits = SandboxLimits {
                time_limit_ms: a.time_limit_ms,
                memory_limit_mb: a.memory_limit_mb,
            };
            let mut kept_sets = Vec::with_capacity(sets.len());
            let mut verdict_rows = Vec::new();
            let (mut total, mut passed) = (0, 0);
            for set in &sets {
                let t = tests
                    .get(&set.instruction_id)
                    .ok_or_else(|| invalid(format!("no tests for {:?}", set.instruction_id)))?;
                let r = rejection_sample_code(set, t, &executor, &limits)?;
                total += set.candidates.len();
                passed += r.kept.len();
                for (i, v) in r.verdicts.iter().enumerate() {
                    verdict_rows.push(serde_json::json!({
                        "instruction_id": set.instruction_id,
                        "candidate": i,
                        "verdict": v,
                    }));
                }
                kept_sets.push(CandidateSet {
                    instruction_id: set.instruction_id.clone(),
                    candidates: r.kept,
                    rewards: None,
                });
            }
            write_jsonl(&a.out, &kept_sets)?;
            if let Some(p) = &a.report {
                write_jsonl(p, &verdict_rows)?;
            }
            print_json(&serde_json::json!({ "candidates": total, "passed": passed }))
        }
        SftCmd::Label(a) => {
            let mut samples: Vec<InstructionSample> = read_jsonl(&a.input)?;
            let scorer = HttpDifficultyScorer::new(&a.scorer, a.endpoint.timeout());
            label_samples(&mut samples, &scorer, a.batch_size, &a.endpoint.retry()).map_err(sft_err)?;
            a.out.write(&samples)?;
            let mut counts = BTreeMap::new();
            for s in &samples {
                *counts.entry(s.difficulty.map(|d| d.as_str())).or_insert(0usize) += 1;
            }
            print_json(&counts)
        }
        SftCmd::Sample(a) => {
            let target = parse_target(&a.target)?;
            let mut pool: Vec<InstructionSample> = read_jsonl(&a.input)?;
            if a.one_per_problem {
                pool = one_solution_per_problem(pool, &DEFAULT_LANGUAGE_PREFERENCE);
            }
            let compress = match a.keep {
                Some(k) => {
                    let keep = match k {
                        KeepArg::A => KeepGroup::A,
                        KeepArg::B => KeepGroup::B,
                        KeepArg::Both => KeepGroup::Both,
                    };
                    let (kept, report) = compress_by_difficulty(pool, keep).map_err(sft_err)?;
                    pool = kept;
                    Some(report)
                }
                None => None,
            };
            let policy = match a.policy {
                PolicyArg::Strict => ShortfallPolicy::Strict,
                PolicyArg::Redistribute => ShortfallPolicy::Redistribute,
            };
            let (out, report) = diversity_sample(pool, &target, a.n, a.seed, policy).map_err(sft_err)?;
            a.out.write(&out)?;
            let summary = serde_json::json!({ "diversity": report, "compress": compress });
            match &a.report {
                Some(p) => write_json(p, &summary),
                None => print_json(&summary),
            }
        }
    }
}
