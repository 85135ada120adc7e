use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::endpoint::{EndpointError, JsonEndpoint};

/// Text generator: one prompt, `n` completions.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str, n: usize, seed: u64) -> Result<Vec<String>, EndpointError>;
}

impl<F> Generator for F
where
    F: Fn(&str, usize, u64) -> Result<Vec<String>, EndpointError> + Send + Sync,
{
    fn generate(&self, prompt: &str, n: usize, seed: u64) -> Result<Vec<String>, EndpointError> {
        self(prompt, n, seed)
    }
}

pub trait RewardModel: Send + Sync {
    fn rewards(&self, texts: &[&str]) -> Result<Vec<f64>, EndpointError>;
}

impl<F> RewardModel for F
where
    F: Fn(&[&str]) -> Result<Vec<f64>, EndpointError> + Send + Sync,
{
    fn rewards(&self, texts: &[&str]) -> Result<Vec<f64>, EndpointError> {
        self(texts)
    }
}

/// Returns one free-form label per text.
pub trait DifficultyScorer: Send + Sync {
    fn labels(&self, texts: &[&str]) -> Result<Vec<String>, EndpointError>;
}

impl<F> DifficultyScorer for F
where
    F: Fn(&[&str]) -> Result<Vec<String>, EndpointError> + Send + Sync,
{
    fn labels(&self, texts: &[&str]) -> Result<Vec<String>, EndpointError> {
        self(texts)
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    n: usize,
    seed: u64,
}

#[derive(Serialize)]
struct TextsRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct TextsResponse {
    texts: Vec<String>,
}

#[derive(Deserialize)]
struct RewardsResponse {
    rewards: Vec<f64>,
}

#[derive(Deserialize)]
struct LabelsResponse {
    labels: Vec<String>,
}

/// `{"prompt", "n", "seed"}` → `{"texts"}`.
pub struct HttpGenerator(JsonEndpoint);

impl HttpGenerator {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpGenerator(JsonEndpoint::new(url, timeout))
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, prompt: &str, n: usize, seed: u64) -> Result<Vec<String>, EndpointError> {
        let r: TextsResponse = self.0.post(&GenerateRequest { prompt, n, seed })?;
        Ok(r.texts)
    }
}

/// `{"texts"}` → `{"rewards"}`.
pub struct HttpRewardModel(JsonEndpoint);

impl HttpRewardModel {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpRewardModel(JsonEndpoint::new(url, timeout))
    }
}

impl RewardModel for HttpRewardModel {
    fn rewards(&self, texts: &[&str]) -> Result<Vec<f64>, EndpointError> {
        let r: RewardsResponse = self.0.post(&TextsRequest { texts })?;
        Ok(r.rewards)
    }
}

/// `{"texts"}` → `{"labels"}`.
pub struct HttpDifficultyScorer(JsonEndpoint);

impl HttpDifficultyScorer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpDifficultyScorer(JsonEndpoint::new(url, timeout))
    }
}

impl DifficultyScorer for HttpDifficultyScorer {
    fn labels(&self, texts: &[&str]) -> Result<Vec<String>, EndpointError> {
        let r: LabelsResponse = self.0.post(&TextsRequest { texts })?;
        Ok(r.labels)
    }
}
