//! Per-page detector scoring.
//!
//! Scores are opaque reals with one convention: lower means more LLM-like.
//! Two backends implement [`Scorer`]: a client for the HTTP scoring service
//! and a deterministic mock used for tests and synthetic experiments.
//!
//! Wire protocol (JSON, UTF-8):
//!
//! | request                | body                    | response                           |
//! |------------------------|-------------------------|------------------------------------|
//! | `POST /score`          | `{"texts": [string]}`   | `{"scores": [number]}`             |
//! | `POST /count_tokens`   | `{"texts": [string]}`   | `{"counts": [integer]}`            |
//! | `GET /health`          |                         | `{"status": "ok", "model": string}`|

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quality::{QualityError, TokenCounter};

/// Zero-width marker embedded by the synthetic site generator in LLM-like pages.
pub const LLM_MARKER: char = '\u{2062}';
/// Zero-width marker embedded in human-like pages.
pub const HUMAN_MARKER: char = '\u{2063}';

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("batch covering texts {first}..={last} failed after {attempts} attempts: {message}")]
    Batch {
        first: usize,
        last: usize,
        attempts: u32,
        message: String,
    },
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub texts: Vec<String>,
}

impl ScoreRequest {
    pub fn validate(&self) -> Result<(), ScorerError> {
        if self.texts.is_empty() {
            return Err(ScorerError::InvalidRequest("no texts".into()));
        }
        if let Some(i) = self.texts.iter().position(|t| t.is_empty()) {
            return Err(ScorerError::InvalidRequest(format!("text {i} is empty")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTokensRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTokensResponse {
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

pub trait Scorer: Send + Sync {
    /// One score per text, in request order.
    fn score(&self, texts: &[String]) -> Result<Vec<f64>, ScorerError>;
}

pub fn score_texts(scorer: &dyn Scorer, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
    req.validate()?;
    let scores = scorer.score(&req.texts)?;
    if scores.len() != req.texts.len() {
        return Err(ScorerError::Unavailable(format!(
            "scorer returned {} scores for {} texts",
            scores.len(),
            req.texts.len()
        )));
    }
    Ok(ScoreResponse { scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelHint {
    Human,
    Llm,
}

/// Class-conditional Gaussian score model for the mock scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockProfile {
    pub human_mean: f64,
    pub llm_mean: f64,
    pub noise_sd: f64,
    pub page_accuracy_target: f64,
}

impl MockProfile {
    /// Profile whose best single-threshold page accuracy is `accuracy`: with
    /// equal class sizes the optimal threshold is the midpoint, so accuracy
    /// is Phi((human - llm) / (2 sd)).
    pub fn with_page_accuracy(human_mean: f64, llm_mean: f64, accuracy: f64) -> Self {
        use statrs::distribution::{ContinuousCDF, Normal};
        let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(accuracy);
        MockProfile {
            human_mean,
            llm_mean,
            noise_sd: (human_mean - llm_mean) / (2.0 * z),
            page_accuracy_target: accuracy,
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        if !(self.llm_mean < self.human_mean) {
            return Err(ScorerError::InvalidRequest("llm_mean must be below human_mean".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(ScorerError::InvalidRequest("noise_sd must be non-negative".into()));
        }
        Ok(())
    }

    pub fn mean(&self, label: LabelHint) -> f64 {
        match label {
            LabelHint::Human => self.human_mean,
            LabelHint::Llm => self.llm_mean,
        }
    }
}

impl Default for MockProfile {
    fn default() -> Self {
        MockProfile::with_page_accuracy(0.96, 0.76, 0.93)
    }
}

/// Label carried by a synthetic page's marker, if any.
pub fn marker_label(text: &str) -> Option<LabelHint> {
    if text.contains(LLM_MARKER) {
        Some(LabelHint::Llm)
    } else if text.contains(HUMAN_MARKER) {
        Some(LabelHint::Human)
    } else {
        None
    }
}

/// Standard normal draw fixed by `(seed, text)`.
pub fn mock_noise(text: &str, seed: u64) -> f64 {
    let mut hasher = blake3::Hasher::new();
    hasher.update(&seed.to_le_bytes());
    hasher.update(text.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(*hasher.finalize().as_bytes());
    StandardNormal.sample(&mut rng)
}

pub fn mock_score(text: &str, seed: u64, profile: &MockProfile, label_hint: Option<LabelHint>) -> f64 {
    let label = label_hint
        .or_else(|| marker_label(text))
        .unwrap_or(LabelHint::Human);
    profile.mean(label) + profile.noise_sd * mock_noise(text, seed)
}

#[derive(Debug, Clone, Default)]
pub struct MockScorer {
    pub seed: u64,
    pub profile: MockProfile,
}

impl Scorer for MockScorer {
    fn score(&self, texts: &[String]) -> Result<Vec<f64>, ScorerError> {
        Ok(texts
            .iter()
            .map(|t| mock_score(t, self.seed, &self.profile, None))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_batch() -> usize {
    16
}
fn default_concurrency() -> usize {
    4
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_s() -> u64 {
    300
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            batch_size: default_batch(),
            concurrency: default_concurrency(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
        }
    }
}

/// Client for the scoring service. Batches are sent concurrently (at most
/// `concurrency` in flight), retried with exponential backoff, and
/// re-stitched by position.
pub struct RemoteScorer {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Result<Self, ScorerError> {
        if config.batch_size == 0 || config.concurrency == 0 || config.max_attempts == 0 {
            return Err(ScorerError::InvalidRequest(
                "batch_size, concurrency and max_attempts must be positive".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        Ok(RemoteScorer { config, client })
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.config.url.trim_end_matches('/'), path)
    }

    pub fn health(&self) -> Result<HealthResponse, ScorerError> {
        let resp = self
            .client
            .get(self.endpoint("health"))
            .send()
            .map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        let body = resp.text().map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| ScorerError::Unavailable(format!("bad health body: {e}")))
    }

    fn post_once<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, String> {
        let payload = serde_json::to_vec(body).map_err(|e| e.to_string())?;
        let resp = self
            .client
            .post(self.endpoint(path))
            .header("content-type", "application/json")
            .body(payload)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {text}"));
        }
        serde_json::from_str(&text).map_err(|e| format!("malformed response: {e}"))
    }

    fn with_retries<T>(&self, first: usize, last: usize, mut f: impl FnMut() -> Result<T, String>) -> Result<T, ScorerError> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut message = String::new();
        for attempt in 1..=self.config.max_attempts {
            match f() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("batch {first}..={last} attempt {attempt} failed: {e}");
                    message = e;
                    if attempt < self.config.max_attempts {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(ScorerError::Batch {
            first,
            last,
            attempts: self.config.max_attempts,
            message,
        })
    }

    /// Run `call` over batches of `items`, concurrently, and stitch results
    /// back in order.
    fn batched<T: Send>(
        &self,
        items: &[String],
        call: impl Fn(&[String]) -> Result<Vec<T>, String> + Sync,
    ) -> Result<Vec<T>, ScorerError> {
        let batches: Vec<(usize, &[String])> = items
            .chunks(self.config.batch_size)
            .enumerate()
            .map(|(i, b)| (i * self.config.batch_size, b))
            .collect();
        let slots: Vec<Mutex<Option<Result<Vec<T>, ScorerError>>>> =
            batches.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.concurrency.min(batches.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&(offset, batch)) = batches.get(i) else {
                        break;
                    };
                    let last = offset + batch.len() - 1;
                    let result = self.with_retries(offset, last, || {
                        let out = call(batch)?;
                        if out.len() != batch.len() {
                            return Err(format!("expected {} results, got {}", batch.len(), out.len()));
                        }
                        Ok(out)
                    });
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        let mut out = Vec::with_capacity(items.len());
        for slot in slots {
            out.extend(slot.into_inner().expect("slot lock").expect("every batch ran")?);
        }
        Ok(out)
    }

    pub fn count_tokens_batch(&self, texts: &[String]) -> Result<Vec<u64>, ScorerError> {
        self.batched(texts, |batch| {
            let resp: CountTokensResponse = self.post_once(
                "count_tokens",
                &CountTokensRequest {
                    texts: batch.to_vec(),
                },
            )?;
            Ok(resp.counts)
        })
    }
}

impl Scorer for RemoteScorer {
    fn score(&self, texts: &[String]) -> Result<Vec<f64>, ScorerError> {
        self.batched(texts, |batch| {
            let resp: ScoreResponse = self.post_once(
                "score",
                &ScoreRequest {
                    texts: batch.to_vec(),
                },
            )?;
            if let Some(i) = resp.scores.iter().position(|s| !s.is_finite()) {
                return Err(format!("non-finite score at batch position {i}"));
            }
            Ok(resp.scores)
        })
    }
}

impl TokenCounter for RemoteScorer {
    fn count_tokens(&self, text: &str) -> Result<u64, QualityError> {
        if text.is_empty() {
            return Ok(0);
        }
        let counts = self
            .count_tokens_batch(&[text.to_string()])
            .map_err(|e| QualityError::TokenCount(e.to_string()))?;
        Ok(counts[0])
    }
}

/// Scorer selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerBackend {
    Mock {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        profile: MockProfile,
    },
    Remote(RemoteConfig),
}

impl Default for ScorerBackend {
    fn default() -> Self {
        ScorerBackend::Mock {
            seed: 0,
            profile: MockProfile::default(),
        }
    }
}

impl ScorerBackend {
    pub fn build(&self) -> Result<Box<dyn Scorer>, ScorerError> {
        match self {
            ScorerBackend::Mock { seed, profile } => {
                profile.validate()?;
                Ok(Box::new(MockScorer {
                    seed: *seed,
                    profile: *profile,
                }))
            }
            ScorerBackend::Remote(cfg) => Ok(Box::new(RemoteScorer::new(cfg.clone())?)),
        }
    }
}
