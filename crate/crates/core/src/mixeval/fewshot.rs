use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::MixEvalError;
use crate::endpoint::{with_retry, EndpointError, JsonEndpoint, RetryPolicy};

/// A text-completion endpoint.
pub trait Completion: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, EndpointError>;
}

impl<F> Completion for F
where
    F: Fn(&str) -> Result<String, EndpointError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, EndpointError> {
        self(prompt)
    }
}

/// `{"prompt": s}` → `{"text": s}`.
pub struct HttpCompletion {
    endpoint: JsonEndpoint,
    retry: RetryPolicy,
}

impl HttpCompletion {
    pub fn new(url: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        HttpCompletion {
            endpoint: JsonEndpoint::new(url, timeout),
            retry,
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

impl Completion for HttpCompletion {
    fn complete(&self, prompt: &str) -> Result<String, EndpointError> {
        let r: CompletionResponse =
            with_retry(&self.retry, || self.endpoint.post(&CompletionRequest { prompt }))?.value;
        Ok(r.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotItem {
    pub question: String,
    pub answer: String,
}

/// `shot` and `query` are filled with `{question}` and `{answer}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotTemplate {
    #[serde(default)]
    pub prefix: String,
    pub shot: String,
    pub query: String,
}

impl Default for FewShotTemplate {
    fn default() -> Self {
        FewShotTemplate {
            prefix: String::new(),
            shot: "Question: {question}\nAnswer: {answer}\n\n".into(),
            query: "Question: {question}\nAnswer:".into(),
        }
    }
}

impl FewShotTemplate {
    pub fn render(&self, shots: &[FewShotItem], question: &str) -> String {
        let mut out = self.prefix.clone();
        for s in shots {
            out.push_str(&self.shot.replace("{question}", &s.question).replace("{answer}", &s.answer));
        }
        out.push_str(&self.query.replace("{question}", question));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub predictions: Vec<String>,
}

fn first_line(s: &str) -> &str {
    s.trim_start().lines().next().unwrap_or("").trim()
}

/// Exact match of the completion's first non-blank line against the answer.
pub fn evaluate_few_shot(
    items: &[FewShotItem],
    shots: &[FewShotItem],
    template: &FewShotTemplate,
    model: &dyn Completion,
) -> Result<FewShotReport, MixEvalError> {
    let mut predictions = Vec::with_capacity(items.len());
    let mut correct = 0;
    for item in items {
        let out = model.complete(&template.render(shots, &item.question))?;
        let pred = first_line(&out).to_string();
        if pred == item.answer.trim() {
            correct += 1;
        }
        predictions.push(pred);
    }
    Ok(FewShotReport {
        n: items.len(),
        correct,
        accuracy: if items.is_empty() { 0.0 } else { correct as f64 / items.len() as f64 },
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(q: &str, a: &str) -> FewShotItem {
        FewShotItem {
            question: q.into(),
            answer: a.into(),
        }
    }

    #[test]
    fn render_and_score() {
        let t = FewShotTemplate::default();
        let shots = [item("1+1", "2")];
        assert_eq!(
            t.render(&shots, "2+2"),
            "Question: 1+1\nAnswer: 2\n\nQuestion: 2+2\nAnswer:"
        );
        // Answers by evaluating "a+b" in the last question.
        let model = |p: &str| -> Result<String, EndpointError> {
            let q = p.rsplit("Question: ").next().unwrap().lines().next().unwrap();
            let (a, b) = q.split_once('+').unwrap();
            let sum: i64 = a.parse::<i64>().unwrap() + b.parse::<i64>().unwrap();
            Ok(format!(" {}\nQuestion: junk", if sum == 7 { 0 } else { sum }))
        };
        let r = evaluate_few_shot(&[item("2+2", "4"), item("3+4", "7")], &shots, &t, &model).unwrap();
        assert_eq!((r.n, r.correct), (2, 1));
        assert_eq!(r.predictions, ["4", "0"]);
    }
}
