//! Supervised fine-tuning data synthesis: instruction evolution, candidate
//! generation, reward and execution based rejection sampling, difficulty
//! labeling and compression, and domain-balanced sampling.

mod candidates;
mod difficulty;
mod diversity;
mod endpoints;
mod evolve;
mod posthoc;
mod sandbox;
mod types;

pub use candidates::{argmax_first, generate_candidates, rejection_sample_reward, Chosen, GenerationConfig};
pub use difficulty::{compress_by_difficulty, label_difficulty, label_samples, CompressReport, KeepGroup};
pub use crate::alloc::largest_remainder;
pub use diversity::{diversity_sample, DiversityReport, ShortfallPolicy};
pub use endpoints::{
    DifficultyScorer, Generator, HttpDifficultyScorer, HttpGenerator, HttpRewardModel, RewardModel,
};
pub use evolve::{evolve_instructions, ContextLookup, EvolveConfig, EvolveOutcome, PromptTemplate};
pub use posthoc::{
    has_reasoning_steps, instruction_failures, one_solution_per_problem, InstructionRules,
    DEFAULT_LANGUAGE_PREFERENCE,
};
pub use sandbox::{
    parse_verdict_wire, rejection_sample_code, CodeRejection, ProcessExecutor, SandboxError,
    SandboxExecutor, SandboxLimits, SandboxVerdict, VerdictStatus, VerdictWireError,
};
pub use types::{Candidate, CandidateSet, DifficultyGroup, DifficultyLabel, InstructionSample, LineageStep};

use crate::endpoint::EndpointError;

#[derive(Debug, thiserror::Error)]
pub enum SftError {
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error("instruction {instruction_id}: {} of {} candidates failed", failed.len(), failed.len() + succeeded.len())]
    PartialCandidates {
        instruction_id: String,
        /// (candidate index, text)
        succeeded: Vec<(usize, String)>,
        /// (candidate index, error)
        failed: Vec<(usize, String)>,
    },
    #[error("instruction {0} has no candidates")]
    EmptyCandidates(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("response {index}: unknown difficulty label {value:?}")]
    InvalidLabel { index: usize, value: String },
    #[error("sample {0} has no difficulty label")]
    Unlabeled(String),
    #[error("invalid target distribution: {0}")]
    InvalidTarget(String),
    #[error("domain {domain}: requested {requested}, only {available} available")]
    Shortfall {
        domain: String,
        requested: usize,
        available: usize,
    },
    #[error("requested {requested} samples but the pool only has {available}")]
    InsufficientPool { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}
