//! Chat-completion and embedding access with caching, retries and bounded
//! parallelism.
//!
//! A [`Gateway`] wraps one [`Backend`]. Every completion is cached per
//! sample under `(model, prompt, temperature, n_samples, sample_index)`,
//! every embedding under `(model, text)`. Only the sample indices missing
//! from the cache reach the backend.

mod cache;
mod http;
mod scripted;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::Cache;
pub use http::HttpBackend;
pub use scripted::{hashed_bow, FixtureFile, ScriptedBackend};

/// Default completion budget.
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

/// Hex SHA-256 of `s`.
pub fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

/// Gateway failures.
#[derive(Debug, Error)]
pub enum GatewayError {
    /// The request violates its own invariants.
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// Backend configuration is unusable.
    #[error("backend configuration: {0}")]
    Config(String),
    /// Credentials missing or rejected.
    #[error("authentication failed: {0}")]
    Auth(String),
    /// HTTP 429.
    #[error("rate limited: {0}")]
    RateLimited(String),
    /// Non-success HTTP status other than 401/403/429.
    #[error("HTTP {status}: {body}")]
    Status {
        /// Status code.
        status: u16,
        /// Response body, truncated.
        body: String,
    },
    /// Connection-level failure.
    #[error("transport: {0}")]
    Transport(String),
    /// The response body does not have the expected shape.
    #[error("malformed response: {0}")]
    Malformed(String),
    /// The scripted backend has nothing registered for the prompt.
    #[error("no fixture for prompt {key}")]
    MissingFixture {
        /// SHA-256 of the prompt.
        key: String,
    },
    /// The scripted backend has no vector for the text.
    #[error("no embedding fixture for text {text:?}")]
    MissingEmbedding {
        /// The text.
        text: String,
    },
    /// A fixture key was registered twice.
    #[error("fixture key {0} registered twice")]
    DuplicateFixture(String),
    /// Reading fixtures or the cache failed.
    #[error("{0}")]
    Io(String),
    /// Retries exhausted.
    #[error("giving up after {attempts} attempts: {last}")]
    Exhausted {
        /// Attempts made.
        attempts: u32,
        /// Last error.
        last: Box<GatewayError>,
    },
}

impl GatewayError {
    /// Transport failures, 429 and 5xx are retried; nothing else is.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Transport(_) | GatewayError::RateLimited(_) => true,
            GatewayError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// One chat request, possibly sampled several times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Model name.
    pub model: String,
    /// Optional system message.
    pub system: Option<String>,
    /// Fully rendered user prompt.
    pub user: String,
    /// Sampling temperature in [0, 2].
    pub temperature: f64,
    /// Completion budget.
    pub max_tokens: u32,
    /// Number of samples.
    pub n_samples: usize,
}

impl ChatRequest {
    /// Single greedy sample with no system message.
    pub fn new(model: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            system: None,
            user: user.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            n_samples: 1,
        }
    }

    /// Sets the temperature.
    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    /// Sets the number of samples.
    pub fn samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    /// Sets the system message.
    pub fn system(mut self, s: impl Into<String>) -> Self {
        self.system = Some(s.into());
        self
    }

    /// Checks temperature, sample count and token budget.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.n_samples == 0 {
            return Err(GatewayError::InvalidRequest("n_samples must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// The prompt as one string: system message, blank line, user message.
    pub fn prompt(&self) -> String {
        match &self.system {
            Some(s) => format!("{s}\n\n{}", self.user),
            None => self.user.clone(),
        }
    }

    /// SHA-256 of [`ChatRequest::prompt`]; the scripted fixture key.
    pub fn prompt_hash(&self) -> String {
        sha256_hex(&self.prompt())
    }
}

/// One sampled completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    /// Answer text.
    pub text: String,
    /// Sample number in `0..n_samples`.
    pub sample_index: usize,
    /// Backend that produced it.
    pub backend_id: String,
    /// Whether it came from the cache.
    pub cached: bool,
}

/// One embedded text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    /// Components.
    pub values: Vec<f64>,
    /// Embedding model.
    pub model: String,
    /// SHA-256 of the embedded text.
    pub source_text_hash: String,
}

/// A completion/embedding provider.
pub trait Backend: Send + Sync {
    /// Stable identifier used in completions and logs.
    fn id(&self) -> &str;

    /// Returns one text per entry of `sample_indices`, in that order.
    fn chat(&self, request: &ChatRequest, sample_indices: &[usize]) -> Result<Vec<String>, GatewayError>;

    /// Returns one vector per text, in order.
    fn embed(&self, model: &str, texts: &[&str]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

/// Backend implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP endpoint.
    HttpOpenaiCompatible,
    /// Fixture-driven offline backend.
    Scripted,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" | "http_openai_compatible" => Ok(BackendKind::HttpOpenaiCompatible),
            "scripted" => Ok(BackendKind::Scripted),
            other => Err(format!("unknown backend kind `{other}` (expected http_openai_compatible or scripted)")),
        }
    }
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_parallel() -> usize {
    4
}
fn default_retry_base_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_model() -> String {
    "gpt-3.5-turbo".into()
}

/// Backend settings as written in the run configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// Implementation.
    pub kind: BackendKind,
    /// Model used for requests through this backend.
    #[serde(default = "default_model")]
    pub model: String,
    /// Endpoint root, required for HTTP.
    #[serde(default)]
    pub base_url: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Retries after the first attempt.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Concurrent requests allowed.
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    /// On-disk cache directory.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Fixture file for the scripted backend.
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    /// First backoff delay; doubles on every retry.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    /// Per-request HTTP timeout.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl BackendConfig {
    /// Scripted backend for `model` with default settings.
    pub fn scripted(model: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            model: model.into(),
            base_url: None,
            api_key_env: default_api_key_env(),
            max_retries: default_max_retries(),
            max_parallel: default_max_parallel(),
            cache_dir: None,
            fixtures: None,
            retry_base_ms: default_retry_base_ms(),
            timeout_secs: default_timeout_secs(),
        }
    }

    /// Checks the kind-specific requirements.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_parallel == 0 {
            return Err(GatewayError::Config("max_parallel must be at least 1".into()));
        }
        if self.kind == BackendKind::HttpOpenaiCompatible && self.base_url.is_none() {
            return Err(GatewayError::Config("http_openai_compatible backend needs base_url".into()));
        }
        Ok(())
    }
}

/// Counting semaphore.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// A backend behind a cache, a concurrency limit and a retry policy.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    model: String,
    cache: Cache,
    limiter: Limiter,
    max_parallel: usize,
    max_retries: u32,
    retry_base: Duration,
    backend_calls: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("model", &self.model)
            .field("max_parallel", &self.max_parallel)
            .finish()
    }
}

impl Gateway {
    /// Wraps `backend` with an in-memory cache, `max_parallel` = 4, no retries.
    pub fn new(backend: Arc<dyn Backend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            cache: Cache::memory(),
            limiter: Limiter::new(default_max_parallel()),
            max_parallel: default_max_parallel(),
            max_retries: 0,
            retry_base: Duration::ZERO,
            backend_calls: AtomicUsize::new(0),
        }
    }

    /// Replaces the cache.
    pub fn with_cache(mut self, cache: Cache) -> Self {
        self.cache = cache;
        self
    }

    /// Sets the concurrency bound.
    pub fn with_max_parallel(mut self, n: usize) -> Self {
        let n = n.max(1);
        self.limiter = Limiter::new(n);
        self.max_parallel = n;
        self
    }

    /// Sets the retry policy.
    pub fn with_retries(mut self, max_retries: u32, base: Duration) -> Self {
        self.max_retries = max_retries;
        self.retry_base = base;
        self
    }

    /// Builds the backend described by `config`.
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Arc<dyn Backend> = match config.kind {
            BackendKind::Scripted => {
                let backend = ScriptedBackend::new("scripted");
                if let Some(path) = &config.fixtures {
                    backend.load_fixture_file(path)?;
                }
                Arc::new(backend)
            }
            BackendKind::HttpOpenaiCompatible => Arc::new(HttpBackend::from_config(config)?),
        };
        let cache = match &config.cache_dir {
            Some(dir) => Cache::on_disk(dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?,
            None => Cache::memory(),
        };
        Ok(Self::new(backend, config.model.clone())
            .with_cache(cache)
            .with_max_parallel(config.max_parallel)
            .with_retries(config.max_retries, Duration::from_millis(config.retry_base_ms)))
    }

    /// Model used for requests through this gateway.
    pub fn model(&self) -> &str {
        &self.model
    }

    /// Concurrency bound.
    pub fn max_parallel(&self) -> usize {
        self.max_parallel
    }

    /// Requests that reached the backend so far.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    /// Backend identifier.
    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    fn call<T>(&self, f: impl Fn() -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.backend_calls.fetch_add(1, Ordering::SeqCst);
                f()
            };
            match result {
                Err(e) if e.is_transient() && attempt < self.max_retries => {
                    let delay = self.retry_base.saturating_mul(1 << attempt.min(16));
                    log::warn!("{}: {e}; retry {} in {delay:?}", self.backend.id(), attempt + 1);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) if e.is_transient() && self.max_retries > 0 => {
                    return Err(GatewayError::Exhausted { attempts: attempt + 1, last: Box::new(e) })
                }
                other => return other,
            }
        }
    }

    /// Draws `request.n_samples` completions; cached samples are not requested
    /// again.
    pub fn complete(&self, request: &ChatRequest) -> Result<Vec<Completion>, GatewayError> {
        request.validate()?;
        let prompt_hash = request.prompt_hash();
        let keys: Vec<String> = (0..request.n_samples)
            .map(|i| cache::chat_key(&request.model, &prompt_hash, request.temperature, request.n_samples, i))
            .collect();
        let mut texts: Vec<Option<String>> = keys.iter().map(|k| self.cache.get_chat(k)).collect();
        let missing: Vec<usize> = (0..request.n_samples).filter(|&i| texts[i].is_none()).collect();
        let cached: Vec<bool> = texts.iter().map(Option::is_some).collect();
        if !missing.is_empty() {
            let fresh = self.call(|| self.backend.chat(request, &missing))?;
            if fresh.len() != missing.len() {
                return Err(GatewayError::Malformed(format!(
                    "expected {} completions, got {}",
                    missing.len(),
                    fresh.len()
                )));
            }
            for (&i, text) in missing.iter().zip(fresh) {
                self.cache.put_chat(&keys[i], &text).map_err(|e| GatewayError::Io(e.to_string()))?;
                texts[i] = Some(text);
            }
        }
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Completion {
                text: text.unwrap_or_default(),
                sample_index: i,
                backend_id: self.backend.id().to_string(),
                cached: cached[i],
            })
            .collect())
    }

    /// Embeds `texts` with this gateway's model, in order.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("text {i} is empty")));
        }
        let hashes: Vec<String> = texts.iter().map(|t| sha256_hex(t)).collect();
        let keys: Vec<String> = hashes.iter().map(|h| cache::embed_key(&self.model, h)).collect();
        let mut vectors: Vec<Option<Vec<f64>>> = keys.iter().map(|k| self.cache.get_embedding(k)).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| vectors[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let fresh = self.call(|| self.backend.embed(&self.model, &batch))?;
            if fresh.len() != batch.len() {
                return Err(GatewayError::Malformed(format!(
                    "expected {} embeddings, got {}",
                    batch.len(),
                    fresh.len()
                )));
            }
            for (&i, v) in missing.iter().zip(fresh) {
                self.cache.put_embedding(&keys[i], &v).map_err(|e| GatewayError::Io(e.to_string()))?;
                vectors[i] = Some(v);
            }
        }
        let out: Vec<EmbeddingVector> = vectors
            .into_iter()
            .zip(hashes)
            .map(|(v, h)| EmbeddingVector { values: v.unwrap_or_default(), model: self.model.clone(), source_text_hash: h })
            .collect();
        if let Some(first) = out.first() {
            if let Some(bad) = out.iter().position(|v| v.values.len() != first.values.len()) {
                return Err(GatewayError::Malformed(format!(
                    "embedding {bad} has dimension {}, expected {}",
                    out[bad].values.len(),
                    first.values.len()
                )));
            }
        }
        Ok(out)
    }
}

/// The four gateways a pipeline run talks to.
#[derive(Debug, Clone)]
pub struct Gateways {
    /// Self-annotation completions.
    pub annotator: Arc<Gateway>,
    /// Ontology extraction and helpfulness scoring.
    pub discriminator: Arc<Gateway>,
    /// Final prediction.
    pub predictor: Arc<Gateway>,
    /// Sentence embeddings.
    pub embedder: Arc<Gateway>,
}

impl Gateways {
    /// One gateway for every role.
    pub fn shared(gateway: Arc<Gateway>) -> Self {
        Self {
            annotator: gateway.clone(),
            discriminator: gateway.clone(),
            predictor: gateway.clone(),
            embedder: gateway,
        }
    }

    /// Total backend calls over the distinct gateways.
    pub fn backend_calls(&self) -> usize {
        let all = [&self.annotator, &self.discriminator, &self.predictor, &self.embedder];
        let mut seen: Vec<*const Gateway> = Vec::new();
        let mut total = 0;
        for g in all {
            let p = Arc::as_ptr(g);
            if !seen.contains(&p) {
                seen.push(p);
                total += g.backend_calls();
            }
        }
        total
    }
}
