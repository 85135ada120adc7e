//! Rule-based checks applied to instructions and kept responses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::InstructionSample;

const ANSWER_MARKERS: [&str; 6] = ["final answer", "the answer is", "answer:", "\\boxed", "####", "therefore"];

/// Splits text before the final answer into steps: non-empty lines, or
/// sentences when everything sits on one line.
fn steps_before_answer(response: &str) -> usize {
    let lower = response.to_ascii_lowercase();
    let cut = ANSWER_MARKERS
        .iter()
        .filter_map(|m| lower.rfind(m))
        .max();
    let body = match cut {
        Some(c) => &response[..c],
        None => {
            // No marker: the last line is taken as the answer.
            let trimmed = response.trim_end();
            trimmed.rfind('\n').map_or("", |nl| &trimmed[..nl])
        }
    };
    let lines: Vec<&str> = body.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() == 1 {
        lines[0]
            .split_terminator(['.', ';'])
            .filter(|s| s.trim().chars().any(char::is_alphanumeric))
            .count()
    } else {
        lines.len()
    }
}

/// At least two reasoning steps precede the final answer.
pub fn has_reasoning_steps(response: &str) -> bool {
    steps_before_answer(response) >= 2
}

/// Keeps one sample per `meta.problem_id`, preferring languages earlier in
/// `preference` (from `meta.language`), then the smallest id. Samples
/// without a problem id pass through. Input order is otherwise kept.
pub fn one_solution_per_problem(samples: Vec<InstructionSample>, preference: &[&str]) -> Vec<InstructionSample> {
    let rank = |s: &InstructionSample| {
        let lang = s.meta.get("language").map(|l| l.to_ascii_lowercase());
        let r = lang
            .as_deref()
            .and_then(|l| preference.iter().position(|p| p.eq_ignore_ascii_case(l)))
            .unwrap_or(preference.len());
        (r, s.id.clone())
    };
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if let Some(pid) = s.meta.get("problem_id") {
            match best.get(pid) {
                Some(&j) if rank(&samples[j]) <= rank(s) => {}
                _ => {
                    best.insert(pid.clone(), i);
                }
            }
        }
    }
    samples
        .into_iter()
        .enumerate()
        .filter(|(i, s)| match s.meta.get("problem_id") {
            Some(pid) => best[pid] == *i,
            None => true,
        })
        .map(|(_, s)| s)
        .collect()
}

pub const DEFAULT_LANGUAGE_PREFERENCE: [&str; 4] = ["python", "javascript", "java", "c"];

/// Length, script and format rules for instructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstructionRules {
    pub min_chars: usize,
    pub max_chars: usize,
    /// Minimum share of letters among non-whitespace characters.
    pub min_alpha_fraction: f64,
    /// Reject instructions whose letters are mostly outside ASCII.
    pub require_latin: bool,
}

impl Default for InstructionRules {
    fn default() -> Self {
        InstructionRules {
            min_chars: 10,
            max_chars: 8192,
            min_alpha_fraction: 0.3,
            require_latin: true,
        }
    }
}

/// Names of the rules the instruction fails; empty means keep.
pub fn instruction_failures(text: &str, rules: &InstructionRules) -> Vec<&'static str> {
    let mut failed = Vec::new();
    let t = text.trim();
    let chars = t.chars().count();
    if chars < rules.min_chars {
        failed.push("too_short");
    }
    if chars > rules.max_chars {
        failed.push("too_long");
    }
    let visible = t.chars().filter(|c| !c.is_whitespace()).count();
    let letters: Vec<char> = t.chars().filter(|c| c.is_alphabetic()).collect();
    if visible > 0 && (letters.len() as f64) < rules.min_alpha_fraction * visible as f64 {
        failed.push("low_alpha");
    }
    if rules.require_latin && !letters.is_empty() {
        let ascii = letters.iter().filter(|c| c.is_ascii()).count();
        if ascii * 2 < letters.len() {
            failed.push("non_latin");
        }
    }
    if t.matches("```").count() % 2 == 1 {
        failed.push("unbalanced_fence");
    }
    failed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reasoning_steps() {
        assert!(has_reasoning_steps("We have 3 apples.\nWe eat 1, leaving 2.\nAnswer: 2"));
        assert!(has_reasoning_steps("First add 2 and 3. Then double it. The answer is 10"));
        assert!(!has_reasoning_steps("Answer: 10"));
        assert!(!has_reasoning_steps("Just one step.\nThe answer is 4"));
        assert!(has_reasoning_steps("Step 1: x = 2\nStep 2: y = 2x = 4\n4"));
        assert!(!has_reasoning_steps("4"));
    }

    fn sol(id: &str, pid: &str, lang: &str) -> InstructionSample {
        InstructionSample::seed(id, "solve", "code")
            .with_meta("problem_id", pid)
            .with_meta("language", lang)
    }

    #[test]
    fn python_first() {
        let s = vec![
            sol("a", "p1", "java"),
            sol("b", "p1", "Python"),
            sol("c", "p2", "c"),
            sol("d", "p2", "rust"),
            sol("e", "p1", "python"),
            InstructionSample::seed("free", "x", "code"),
        ];
        let ids: Vec<_> = one_solution_per_problem(s, &DEFAULT_LANGUAGE_PREFERENCE)
            .into_iter()
            .map(|s| s.id)
            .collect();
        assert_eq!(ids, ["b", "c", "free"]);
    }

    #[test]
    fn instruction_rules() {
        let r = InstructionRules::default();
        assert!(instruction_failures("Write a function that reverses a list.", &r).is_empty());
        assert_eq!(instruction_failures("hi", &r), ["too_short"]);
        assert!(instruction_failures("1234567890 + 0987654321 = ?", &r).contains(&"low_alpha"));
        assert!(instruction_failures("Напишите функцию сортировки списка", &r).contains(&"non_latin"));
        assert!(instruction_failures("Fix this:\n```python\nprint(1)\n", &r).contains(&"unbalanced_fence"));
    }
}
