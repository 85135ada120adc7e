//! Second-stage quality assessment: model scorers for prose and math,
//! static syntax checks for code, and the per-source gate combining them.

mod gate;
mod scorer;
mod syntax;

pub use gate::{gate, GatePolicy, QualityReport, SourceQuality, SourceRule};
pub use scorer::{
    score_remote, HashMockScorer, HttpScorer, QualityError, QualityScore, ScoreBackend,
    ScoreOutcome, Scorer, ScorerSpec,
};
pub use syntax::{
    check_code_syntax, check_with_external, CodeLanguage, Diagnostic, ExternalChecker, Severity,
    SyntaxVerdict,
};
