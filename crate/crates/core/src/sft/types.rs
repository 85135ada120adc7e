use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageStep {
    pub stage: String,
    pub parent_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub id: String,
    pub instruction: String,
    #[serde(rename = "domain", default)]
    pub domain_label: String,
    /// Ancestors from the seed down to the direct parent. Empty for seeds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lineage: Vec<LineageStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<DifficultyLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl InstructionSample {
    pub fn seed(id: impl Into<String>, instruction: impl Into<String>, domain: impl Into<String>) -> Self {
        InstructionSample {
            id: id.into(),
            instruction: instruction.into(),
            domain_label: domain.into(),
            lineage: Vec::new(),
            difficulty: None,
            response: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_response(mut self, response: impl Into<String>) -> Self {
        self.response = Some(response.into());
        self
    }

    pub fn with_difficulty(mut self, d: DifficultyLabel) -> Self {
        self.difficulty = Some(d);
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// The seed this sample descends from (itself for seeds).
    pub fn root_id(&self) -> &str {
        self.lineage.first().map_or(&self.id, |s| &s.parent_id)
    }

    /// Instruction followed by the response, when there is one.
    pub fn scoring_text(&self) -> String {
        match &self.response {
            Some(r) => format!("{}\n\n{}", self.instruction, r),
            None => self.instruction.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub instruction_id: String,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyLabel {
    VeryEasy,
    Easy,
    Medium,
    Hard,
    VeryHard,
}

/// Coarse difficulty tiers used for compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyGroup {
    /// very easy and easy
    A,
    /// medium, hard and very hard
    B,
}

impl DifficultyLabel {
    pub const ALL: [DifficultyLabel; 5] = [
        DifficultyLabel::VeryEasy,
        DifficultyLabel::Easy,
        DifficultyLabel::Medium,
        DifficultyLabel::Hard,
        DifficultyLabel::VeryHard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyLabel::VeryEasy => "very_easy",
            DifficultyLabel::Easy => "easy",
            DifficultyLabel::Medium => "medium",
            DifficultyLabel::Hard => "hard",
            DifficultyLabel::VeryHard => "very_hard",
        }
    }

    pub fn group(self) -> DifficultyGroup {
        match self {
            DifficultyLabel::VeryEasy | DifficultyLabel::Easy => DifficultyGroup::A,
            _ => DifficultyGroup::B,
        }
    }
}

impl fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DifficultyLabel {
    type Err = String;

    /// Accepts `very_easy`, `very easy`, `Very-Easy` and so on.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        DifficultyLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == norm)
            .ok_or_else(|| format!("unknown difficulty {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difficulty_parsing() {
        assert_eq!("hard".parse::<DifficultyLabel>().unwrap(), DifficultyLabel::Hard);
        assert_eq!("Very Easy".parse::<DifficultyLabel>().unwrap(), DifficultyLabel::VeryEasy);
        assert_eq!("very-hard".parse::<DifficultyLabel>().unwrap(), DifficultyLabel::VeryHard);
        assert!("impossible".parse::<DifficultyLabel>().is_err());
        assert_eq!(DifficultyLabel::Medium.group(), DifficultyGroup::B);
        assert_eq!(DifficultyLabel::Easy.group(), DifficultyGroup::A);
    }

    #[test]
    fn sample_json_shape() {
        let s = InstructionSample::seed("s1", "Add two numbers", "math").with_difficulty(DifficultyLabel::Easy);
        let j = serde_json::to_value(&s).unwrap();
        assert_eq!(j["domain"], "math");
        assert_eq!(j["difficulty"], "easy");
        assert!(j.get("lineage").is_none());
        let back: InstructionSample = serde_json::from_value(j).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.root_id(), "s1");
    }
}
