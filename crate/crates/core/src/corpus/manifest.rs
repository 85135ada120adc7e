//! Declarative run manifests.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Source, TokenizerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub path: PathBuf,
    pub source: Source,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// One pipeline stage. `params` is interpreted by the stage named in `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub name: String,
    pub kind: String,
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub stages: Vec<StageConfig>,
    #[serde(default)]
    pub sources: Vec<SourceEntry>,
    #[serde(default)]
    pub mixing_ratios: BTreeMap<Source, f64>,
    /// Size of the final mix. Defaults to the largest size every source
    /// can fill at the target ratios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_reorder: bool,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    /// Directory relative paths are resolved against; set by [`RunManifest::load`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

/// Every violated manifest invariant. Empty iff the manifest is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, code: &'static str, message: impl Into<String>) {
        self.violations.push(Violation {
            code,
            message: message.into(),
        });
    }
}

const RATIO_TOLERANCE: f64 = 1e-9;

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read manifest {}: {e}", path.display()))?;
        let mut m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid manifest {}: {e}", path.display()))?;
        m.base_dir = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_manifest(self)
    }
}

pub fn validate_manifest(m: &RunManifest) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !m.mixing_ratios.is_empty() {
        let sum: f64 = m.mixing_ratios.values().sum();
        if (sum - 1.0).abs() > RATIO_TOLERANCE {
            report.push("ratio_sum", format!("ratios sum to {sum}"));
        }
        for (src, r) in &m.mixing_ratios {
            if !(r.is_finite() && *r >= 0.0) {
                report.push("ratio_range", format!("ratio for {src} is {r}"));
            }
        }
    }

    for entry in &m.sources {
        if !(entry.weight.is_finite() && entry.weight >= 0.0) {
            report.push(
                "source_weight",
                format!("source {} has weight {}", entry.path.display(), entry.weight),
            );
        }
    }

    let mut names = HashSet::new();
    for stage in &m.stages {
        if !names.insert(stage.name.as_str()) {
            report.push(
                "duplicate_stage",
                format!("stage name {:?} is used more than once", stage.name),
            );
        }
    }

    if let Err(e) = m.tokenizer.validate() {
        report.push("tokenizer", e);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(ratios: &[(Source, f64)]) -> RunManifest {
        RunManifest {
            mixing_ratios: ratios.iter().copied().collect(),
            ..RunManifest::default()
        }
    }

    #[test]
    fn valid_ratios() {
        assert!(validate_manifest(&manifest(&[(Source::Web, 0.6), (Source::Code, 0.4)])).is_valid());
    }

    #[test]
    fn ratios_over_one() {
        let r = validate_manifest(&manifest(&[(Source::Web, 0.6), (Source::Code, 0.6)]));
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].message, "ratios sum to 1.2");
    }

    #[test]
    fn duplicate_stage_named() {
        let mut m = manifest(&[]);
        for _ in 0..2 {
            m.stages.push(StageConfig {
                name: "dedup".into(),
                kind: "dedup".into(),
                enabled: true,
                params: serde_json::Value::Null,
            });
        }
        let r = validate_manifest(&m);
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].message.contains("\"dedup\""));
    }

    #[test]
    fn negative_weight_reported() {
        let mut m = manifest(&[]);
        m.sources.push(SourceEntry {
            path: "a.jsonl".into(),
            source: Source::Web,
            weight: -1.0,
        });
        assert_eq!(validate_manifest(&m).violations[0].code, "source_weight");
    }

    #[test]
    fn parses_minimal_json() {
        let m: RunManifest = serde_json::from_str(
            r#"{"sources":[{"path":"a.jsonl","source":"math"}],"mixing_ratios":{"math":1.0},"seed":7}"#,
        )
        .unwrap();
        assert_eq!(m.sources[0].weight, 1.0);
        assert!(m.validate().is_valid());
    }
}
