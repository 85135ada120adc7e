//! Offline evaluation for data-mixing decisions: token-level NLL and
//! perplexity, normalized multiple-choice probabilities, ε-contaminated
//! mixtures with their perplexity bound, and validation-set construction.

mod bound;
mod fewshot;
mod metrics;
mod model;
mod valset;

pub use bound::{contamination_bound_check, corrupted_token_rate, BoundReport, CorruptionSample};
pub use fewshot::{evaluate_few_shot, Completion, FewShotItem, FewShotReport, FewShotTemplate, HttpCompletion};
pub use metrics::{
    nll, nll_with, normalized_choice_probs, perplexity, ChoiceScoreSet, NllOptions, NllReport,
    PerplexityReport,
};
pub use model::{
    mix, ConditionalTokenModel, LogProbProvider, MixtureDistribution, ModelSpec, NGramTableModel,
    NGramTableSpec, RemoteLogProbModel, UniformModel, Vocabulary,
};
pub use valset::{build_web_validation_set, DiscardRule, ValsetOptions, ValsetReport};

use crate::endpoint::EndpointError;

#[derive(Debug, thiserror::Error)]
pub enum MixEvalError {
    #[error("token {token:?} at position {position} has zero probability")]
    ZeroProbability { position: usize, token: String },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("need at least 2 choices, got {0}")]
    TooFewChoices(usize),
    #[error("choice score {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("models do not share a vocabulary")]
    VocabularyMismatch,
    #[error("epsilon {0} is outside the allowed range")]
    InvalidEpsilon(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("provider {provider} failed on sample {sample}: {source}")]
    Provider {
        provider: usize,
        sample: String,
        #[source]
        source: Box<MixEvalError>,
    },
    #[error("no providers given")]
    NoProviders,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
}
