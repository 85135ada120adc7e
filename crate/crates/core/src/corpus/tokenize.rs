//! Deterministic tokenization used by n-gram matching, shingling and the
//! evaluation fixtures.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::hash;

/// An ordered token sequence `t_1 .. t_n`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSequence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence {
            tokens: iter.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "name")]
pub enum TokenizerKind {
    /// Maximal runs of non-whitespace characters.
    Whitespace,
    /// Maximal runs of alphanumeric characters (and `_`).
    UnicodeWord,
    /// A tokenizer registered at runtime with
    /// [`TokenizerSpec::register_external`].
    External(String),
}

/// Tokenizer kind plus normalization flags. The same spec applied to the
/// same string always yields the same [`TokenSequence`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub kind: TokenizerKind,
    #[serde(default)]
    pub lowercase: bool,
    #[serde(default)]
    pub strip_punctuation: bool,
    #[serde(default)]
    pub collapse_whitespace: bool,
}

type ExternalFn = Arc<dyn Fn(&str) -> Vec<String> + Send + Sync>;

fn registry() -> &'static RwLock<HashMap<String, ExternalFn>> {
    static REG: OnceLock<RwLock<HashMap<String, ExternalFn>>> = OnceLock::new();
    REG.get_or_init(Default::default)
}

impl Default for TokenizerSpec {
    /// Lowercase, punctuation stripped, whitespace split.
    fn default() -> Self {
        TokenizerSpec {
            kind: TokenizerKind::Whitespace,
            lowercase: true,
            strip_punctuation: true,
            collapse_whitespace: true,
        }
    }
}

impl TokenizerSpec {
    pub fn whitespace() -> Self {
        TokenizerSpec {
            kind: TokenizerKind::Whitespace,
            lowercase: false,
            strip_punctuation: false,
            collapse_whitespace: false,
        }
    }

    pub fn lowercase(mut self, on: bool) -> Self {
        self.lowercase = on;
        self
    }

    pub fn strip_punctuation(mut self, on: bool) -> Self {
        self.strip_punctuation = on;
        self
    }

    pub fn collapse_whitespace(mut self, on: bool) -> Self {
        self.collapse_whitespace = on;
        self
    }

    /// Registers a named external tokenizer. It receives the normalized text.
    pub fn register_external<F>(name: &str, f: F)
    where
        F: Fn(&str) -> Vec<String> + Send + Sync + 'static,
    {
        registry()
            .write()
            .expect("tokenizer registry poisoned")
            .insert(name.to_string(), Arc::new(f));
    }

    pub fn validate(&self) -> Result<(), String> {
        match &self.kind {
            TokenizerKind::External(name) => {
                if registry().read().unwrap().contains_key(name) {
                    Ok(())
                } else {
                    Err(format!("external tokenizer {name:?} is not registered"))
                }
            }
            _ => Ok(()),
        }
    }

    /// Stable 64-bit identity of this spec, stored in persisted indices so
    /// a mismatched tokenizer is detected at load time.
    pub fn fingerprint(&self) -> u64 {
        let kind = match &self.kind {
            TokenizerKind::Whitespace => "whitespace".to_string(),
            TokenizerKind::UnicodeWord => "unicode-word".to_string(),
            TokenizerKind::External(n) => format!("external:{n}"),
        };
        let canon = format!(
            "{kind}|lc={}|sp={}|cw={}",
            self.lowercase, self.strip_punctuation, self.collapse_whitespace
        );
        hash::hash_str(&canon, hash::DEFAULT_SEED)
    }

    fn normalize(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut last_space = false;
        for c in text.chars() {
            let c = if self.strip_punctuation && !c.is_alphanumeric() && !c.is_whitespace() {
                ' '
            } else {
                c
            };
            if c.is_whitespace() {
                let c = if self.collapse_whitespace { ' ' } else { c };
                if self.collapse_whitespace && last_space {
                    continue;
                }
                last_space = true;
                out.push(c);
                continue;
            }
            last_space = false;
            if self.lowercase {
                out.extend(c.to_lowercase());
            } else {
                out.push(c);
            }
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let norm = self.normalize(text);
        let tokens = match &self.kind {
            TokenizerKind::Whitespace => norm.split_whitespace().map(str::to_string).collect(),
            TokenizerKind::UnicodeWord => norm
                .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
            TokenizerKind::External(name) => {
                let f = registry()
                    .read()
                    .unwrap()
                    .get(name)
                    .cloned()
                    .unwrap_or_else(|| panic!("external tokenizer {name:?} is not registered"));
                f(&norm)
            }
        };
        TokenSequence { tokens }
    }
}

/// Tokenizes `text` under `spec`. Panics only for an unregistered external
/// tokenizer; call [`TokenizerSpec::validate`] first when specs come from
/// user input.
pub fn tokenize(text: &str, spec: &TokenizerSpec) -> TokenSequence {
    spec.tokenize(text)
}
