use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendConfig, ChatRequest, GatewayError};

/// OpenAI-compatible `/chat/completions` and `/embeddings` client.
#[derive(Debug)]
pub struct HttpBackend {
    id: String,
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl HttpBackend {
    /// Client for `base_url` authenticating with `api_key`.
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Result<Self, GatewayError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { id: format!("http:{base_url}"), base_url, api_key: api_key.into(), client })
    }

    /// Reads the key from `config.api_key_env`.
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        let base_url = config
            .base_url
            .clone()
            .ok_or_else(|| GatewayError::Config("http_openai_compatible backend needs base_url".into()))?;
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| GatewayError::Auth(format!("environment variable {} is not set", config.api_key_env)))?;
        Self::new(base_url, api_key, Duration::from_secs(config.timeout_secs))
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<String, GatewayError> {
        let response = self
            .client
            .post(format!("{}{path}", self.base_url))
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let snippet = || text.chars().take(500).collect::<String>();
        match status {
            200..=299 => Ok(text),
            401 | 403 => Err(GatewayError::Auth(format!("HTTP {status}: {}", snippet()))),
            429 => Err(GatewayError::RateLimited(snippet())),
            _ => Err(GatewayError::Status { status, body: snippet() }),
        }
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, request: &ChatRequest, sample_indices: &[usize]) -> Result<Vec<String>, GatewayError> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let body = json!({
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "n": sample_indices.len(),
            "max_tokens": request.max_tokens,
        });
        let raw = self.post("/chat/completions", &body)?;
        let parsed: ChatResponse = serde_json::from_str(&raw).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let mut choices: Vec<(usize, String)> = parsed
            .choices
            .into_iter()
            .enumerate()
            .map(|(pos, c)| (c.index.unwrap_or(pos), c.message.content.unwrap_or_default()))
            .collect();
        choices.sort_by_key(|c| c.0);
        if choices.len() != sample_indices.len() {
            return Err(GatewayError::Malformed(format!(
                "asked for {} choices, got {}",
                sample_indices.len(),
                choices.len()
            )));
        }
        Ok(choices.into_iter().map(|c| c.1).collect())
    }

    fn embed(&self, model: &str, texts: &[&str]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let raw = self.post("/embeddings", &json!({"model": model, "input": texts}))?;
        let parsed: EmbeddingResponse =
            serde_json::from_str(&raw).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let mut data: Vec<(usize, Vec<f64>)> =
            parsed.data.into_iter().enumerate().map(|(pos, d)| (d.index.unwrap_or(pos), d.embedding)).collect();
        data.sort_by_key(|d| d.0);
        if data.len() != texts.len() {
            return Err(GatewayError::Malformed(format!("sent {} texts, got {} vectors", texts.len(), data.len())));
        }
        Ok(data.into_iter().map(|d| d.1).collect())
    }
}
