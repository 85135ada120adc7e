//! Rule-based first-pass filters for web text and source files, plus the
//! trailing-colon rule for mathematical web text.
//!
//! Every rule is evaluated (no short-circuit) so [`FilterVerdict::stats`]
//! is always complete. A rule with a `min` fails when the measured value is
//! strictly below it; a rule with a `max` fails when strictly above.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterTarget {
    Web,
    Code,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum FilterRule {
    MinWordCount { min: usize },
    MaxNonAlnumFraction { max: f64 },
    MaxDupLines { max: f64 },
    MinMeanWordLength { min: f64 },
    MaxEllipsisLines { max: f64 },
    LanguageWhitelist { languages: Vec<String> },
    MaxLineLength { max: usize },
    MaxFileSize { max_bytes: usize },
    MinAlphaFraction { min: f64 },
    AutogeneratedMarker { markers: Vec<String> },
}

impl FilterRule {
    pub fn id(&self) -> &'static str {
        match self {
            FilterRule::MinWordCount { .. } => "min_word_count",
            FilterRule::MaxNonAlnumFraction { .. } => "max_non_alnum_fraction",
            FilterRule::MaxDupLines { .. } => "max_dup_lines",
            FilterRule::MinMeanWordLength { .. } => "min_mean_word_length",
            FilterRule::MaxEllipsisLines { .. } => "max_ellipsis_lines",
            FilterRule::LanguageWhitelist { .. } => "language_whitelist",
            FilterRule::MaxLineLength { .. } => "max_line_length",
            FilterRule::MaxFileSize { .. } => "max_file_size",
            FilterRule::MinAlphaFraction { .. } => "min_alpha_fraction",
            FilterRule::AutogeneratedMarker { .. } => "autogenerated_marker",
        }
    }

    fn target(&self) -> FilterTarget {
        match self {
            FilterRule::MinWordCount { .. }
            | FilterRule::MaxNonAlnumFraction { .. }
            | FilterRule::MaxDupLines { .. }
            | FilterRule::MinMeanWordLength { .. }
            | FilterRule::MaxEllipsisLines { .. } => FilterTarget::Web,
            _ => FilterTarget::Code,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRuleSet {
    pub name: String,
    pub target: FilterTarget,
    pub rules: Vec<FilterRule>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("ruleset {name:?} targets {actual:?}, expected {expected:?}")]
    WrongTarget {
        name: String,
        expected: FilterTarget,
        actual: FilterTarget,
    },
    #[error("invalid ruleset: {0}")]
    Invalid(String),
    #[error("unknown ruleset {0:?}")]
    UnknownRuleset(String),
}

/// Outcome of running a ruleset on one document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub failed_rules: Vec<String>,
    pub stats: BTreeMap<String, f64>,
}

impl FilterVerdict {
    fn from_parts(failed_rules: Vec<String>, stats: BTreeMap<String, f64>) -> Self {
        FilterVerdict {
            keep: failed_rules.is_empty(),
            failed_rules,
            stats,
        }
    }

    /// Combines two verdicts; the result keeps only if both keep.
    pub fn merge(mut self, other: FilterVerdict) -> FilterVerdict {
        self.failed_rules.extend(other.failed_rules);
        self.stats.extend(other.stats);
        self.keep = self.failed_rules.is_empty();
        self
    }
}

pub const FINEWEB_LIKE_V1: &str = "fineweb-like-v1";
pub const CODE_RULES_V1: &str = "code-rules-v1";

pub const DEFAULT_LANGUAGES: [&str; 4] = ["python", "javascript", "java", "c"];

impl FilterRuleSet {
    pub fn fineweb_like_v1() -> Self {
        FilterRuleSet {
            name: FINEWEB_LIKE_V1.into(),
            target: FilterTarget::Web,
            rules: vec![
                FilterRule::MinWordCount { min: 50 },
                FilterRule::MaxNonAlnumFraction { max: 0.3 },
                FilterRule::MaxDupLines { max: 0.3 },
                FilterRule::MinMeanWordLength { min: 2.0 },
                FilterRule::MaxEllipsisLines { max: 0.3 },
            ],
        }
    }

    pub fn code_rules_v1() -> Self {
        FilterRuleSet {
            name: CODE_RULES_V1.into(),
            target: FilterTarget::Code,
            rules: vec![
                FilterRule::LanguageWhitelist {
                    languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
                },
                FilterRule::MaxLineLength { max: 1000 },
                FilterRule::MaxFileSize {
                    max_bytes: 1 << 20,
                },
                FilterRule::MinAlphaFraction { min: 0.25 },
                FilterRule::AutogeneratedMarker {
                    markers: vec![
                        "auto-generated".into(),
                        "autogenerated".into(),
                        "do not edit".into(),
                        "generated by".into(),
                    ],
                },
            ],
        }
    }

    pub fn named(name: &str) -> Result<Self, FilterError> {
        match name {
            FINEWEB_LIKE_V1 => Ok(Self::fineweb_like_v1()),
            CODE_RULES_V1 => Ok(Self::code_rules_v1()),
            other => Err(FilterError::UnknownRuleset(other.into())),
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let mut ids = HashSet::new();
        for rule in &self.rules {
            if !ids.insert(rule.id()) {
                return Err(FilterError::Invalid(format!("rule {} repeated", rule.id())));
            }
            if rule.target() != self.target {
                return Err(FilterError::Invalid(format!(
                    "rule {} does not apply to {:?} documents",
                    rule.id(),
                    self.target
                )));
            }
            let fraction_ok = |v: f64| (0.0..=1.0).contains(&v);
            let ok = match rule {
                FilterRule::MaxNonAlnumFraction { max }
                | FilterRule::MaxDupLines { max }
                | FilterRule::MaxEllipsisLines { max } => fraction_ok(*max),
                FilterRule::MinAlphaFraction { min } => fraction_ok(*min),
                FilterRule::MinMeanWordLength { min } => min.is_finite() && *min >= 0.0,
                _ => true,
            };
            if !ok {
                return Err(FilterError::Invalid(format!(
                    "parameter of {} out of range",
                    rule.id()
                )));
            }
        }
        Ok(())
    }

    fn expect_target(&self, expected: FilterTarget) -> Result<(), FilterError> {
        if self.target != expected {
            return Err(FilterError::WrongTarget {
                name: self.name.clone(),
                expected,
                actual: self.target,
            });
        }
        Ok(())
    }
}

struct LineStats {
    nonempty: usize,
    duplicates: usize,
    ellipsis: usize,
}

fn line_stats(text: &str) -> LineStats {
    let mut seen = HashSet::new();
    let mut s = LineStats {
        nonempty: 0,
        duplicates: 0,
        ellipsis: 0,
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        s.nonempty += 1;
        if !seen.insert(line) {
            s.duplicates += 1;
        }
        if line.ends_with("...") || line.ends_with('…') {
            s.ellipsis += 1;
        }
    }
    s
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn apply_web_filters(doc: &Document, rules: &FilterRuleSet) -> Result<FilterVerdict, FilterError> {
    rules.expect_target(FilterTarget::Web)?;
    let text = &doc.text;
    let words: Vec<&str> = text.split_whitespace().collect();
    let (mut visible, mut non_alnum) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        visible += 1;
        if !c.is_alphanumeric() {
            non_alnum += 1;
        }
    }
    let lines = line_stats(text);
    let word_chars: usize = words.iter().map(|w| w.chars().count()).sum();

    let mut stats = BTreeMap::new();
    let mut failed = Vec::new();
    for rule in &rules.rules {
        let (value, pass) = match rule {
            FilterRule::MinWordCount { min } => (words.len() as f64, words.len() >= *min),
            FilterRule::MaxNonAlnumFraction { max } => {
                let v = ratio(non_alnum, visible);
                (v, v <= *max)
            }
            FilterRule::MaxDupLines { max } => {
                let v = ratio(lines.duplicates, lines.nonempty);
                (v, v <= *max)
            }
            FilterRule::MinMeanWordLength { min } => {
                let v = ratio(word_chars, words.len());
                (v, v >= *min)
            }
            FilterRule::MaxEllipsisLines { max } => {
                let v = ratio(lines.ellipsis, lines.nonempty);
                (v, v <= *max)
            }
            _ => unreachable!("target checked"),
        };
        stats.insert(rule.id().to_string(), value);
        if !pass {
            failed.push(rule.id().to_string());
        }
    }
    Ok(FilterVerdict::from_parts(failed, stats))
}

/// Reads the language tag from `meta["language"]` (or `meta["lang"]`).
pub fn language_tag(doc: &Document) -> Option<String> {
    doc.meta
        .get("language")
        .or_else(|| doc.meta.get("lang"))
        .map(|l| l.trim().to_ascii_lowercase())
        .filter(|l| !l.is_empty())
}

pub fn apply_code_filters(doc: &Document, rules: &FilterRuleSet) -> Result<FilterVerdict, FilterError> {
    rules.expect_target(FilterTarget::Code)?;
    let text = &doc.text;
    let language = language_tag(doc);
    let max_line = text.lines().map(|l| l.chars().count()).max().unwrap_or(0);
    let total_chars = text.chars().count();
    let alpha = text.chars().filter(|c| c.is_alphabetic()).count();
    let lower = text.to_lowercase();

    let mut stats = BTreeMap::new();
    let mut failed = Vec::new();
    if language.is_none() {
        failed.push("unknown_language".to_string());
    }
    for rule in &rules.rules {
        let (value, pass) = match rule {
            FilterRule::LanguageWhitelist { languages } => {
                let hit = language
                    .as_deref()
                    .is_some_and(|l| languages.iter().any(|a| a.eq_ignore_ascii_case(l)));
                // A missing tag is already reported as unknown_language.
                (f64::from(u8::from(hit)), hit || language.is_none())
            }
            FilterRule::MaxLineLength { max } => (max_line as f64, max_line <= *max),
            FilterRule::MaxFileSize { max_bytes } => (text.len() as f64, text.len() <= *max_bytes),
            FilterRule::MinAlphaFraction { min } => {
                let v = ratio(alpha, total_chars);
                (v, v >= *min)
            }
            FilterRule::AutogeneratedMarker { markers } => {
                let hit = markers.iter().any(|m| lower.contains(&m.to_lowercase()));
                (f64::from(u8::from(hit)), !hit)
            }
            _ => unreachable!("target checked"),
        };
        stats.insert(rule.id().to_string(), value);
        if !pass {
            failed.push(rule.id().to_string());
        }
    }
    Ok(FilterVerdict::from_parts(failed, stats))
}

pub const COLON_RULE: &str = "colon_ending";

/// Rejects text whose last non-whitespace character is an ASCII or
/// full-width colon.
pub fn colon_ending_filter(doc: &Document) -> FilterVerdict {
    let last = doc.text.trim_end().chars().last();
    let colon = matches!(last, Some(':') | Some('：'));
    let mut stats = BTreeMap::new();
    stats.insert(COLON_RULE.to_string(), f64::from(u8::from(colon)));
    let failed = if colon { vec![COLON_RULE.to_string()] } else { vec![] };
    FilterVerdict::from_parts(failed, stats)
}

/// Which documents the colon rule is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColonScope {
    /// `source == math`, or web documents labelled `math`.
    #[default]
    Math,
    All,
    Off,
}

impl ColonScope {
    pub fn applies(self, doc: &Document) -> bool {
        match self {
            ColonScope::Off => false,
            ColonScope::All => true,
            ColonScope::Math => {
                doc.source == Source::Math
                    || (doc.source == Source::Web && doc.domain_label.as_deref() == Some("math"))
            }
        }
    }
}

/// The complete heuristic stage: code documents go through the code
/// ruleset, everything else through the web ruleset, and the colon rule is
/// added where its scope says so.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicFilter {
    #[serde(default = "FilterRuleSet::fineweb_like_v1")]
    pub web: FilterRuleSet,
    #[serde(default = "FilterRuleSet::code_rules_v1")]
    pub code: FilterRuleSet,
    #[serde(default)]
    pub colon: ColonScope,
}

impl Default for HeuristicFilter {
    fn default() -> Self {
        HeuristicFilter {
            web: FilterRuleSet::fineweb_like_v1(),
            code: FilterRuleSet::code_rules_v1(),
            colon: ColonScope::Math,
        }
    }
}

impl HeuristicFilter {
    pub fn validate(&self) -> Result<(), FilterError> {
        self.web.expect_target(FilterTarget::Web)?;
        self.code.expect_target(FilterTarget::Code)?;
        self.web.validate()?;
        self.code.validate()
    }

    pub fn evaluate(&self, doc: &Document) -> FilterVerdict {
        let base = if doc.source == Source::Code {
            apply_code_filters(doc, &self.code)
        } else {
            apply_web_filters(doc, &self.web)
        }
        .expect("targets validated");
        if self.colon.applies(doc) {
            base.merge(colon_ending_filter(doc))
        } else {
            base
        }
    }
}
