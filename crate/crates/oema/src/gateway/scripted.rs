use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sha256_hex, Backend, ChatRequest, GatewayError};

/// On-disk fixture set: completions keyed by prompt hash (or literal
/// prompt), embeddings keyed by text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    /// Key → responses, cycled over sample indices.
    #[serde(default)]
    pub completions: BTreeMap<String, Vec<String>>,
    /// Text → vector.
    #[serde(default)]
    pub embeddings: BTreeMap<String, Vec<f64>>,
}

impl FixtureFile {
    /// Reads a fixture file.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let bytes = std::fs::read(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))
    }
}

/// Offline backend answering from registered fixtures.
///
/// A prompt is looked up by its SHA-256 first, then literally. Registered
/// responses are returned cyclically: sample `i` gets `responses[i % len]`.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    id: String,
    completions: RwLock<HashMap<String, Vec<String>>>,
    embeddings: RwLock<HashMap<String, Vec<f64>>>,
    delay: Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

struct InFlight<'a>(&'a ScriptedBackend);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

impl ScriptedBackend {
    /// Empty backend.
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), ..Self::default() }
    }

    /// Sleeps for `delay` inside every call, to make overlap observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Registers responses for a prompt hash or literal prompt. Keys may be
    /// registered only once.
    pub fn register_fixture(&self, key: impl Into<String>, responses: Vec<String>) -> Result<(), GatewayError> {
        let key = key.into();
        if responses.is_empty() {
            return Err(GatewayError::InvalidRequest(format!("fixture {key} has no responses")));
        }
        let mut map = self.completions.write().unwrap_or_else(|e| e.into_inner());
        if map.contains_key(&key) {
            return Err(GatewayError::DuplicateFixture(key));
        }
        map.insert(key, responses);
        Ok(())
    }

    /// Registers the vector returned for `text`.
    pub fn register_embedding(&self, text: impl Into<String>, vector: Vec<f64>) -> Result<(), GatewayError> {
        let text = text.into();
        let mut map = self.embeddings.write().unwrap_or_else(|e| e.into_inner());
        if map.contains_key(&text) {
            return Err(GatewayError::DuplicateFixture(text));
        }
        map.insert(text, vector);
        Ok(())
    }

    /// Registers everything in a fixture set.
    pub fn register_all(&self, fixtures: FixtureFile) -> Result<(), GatewayError> {
        for (key, responses) in fixtures.completions {
            self.register_fixture(key, responses)?;
        }
        for (text, vector) in fixtures.embeddings {
            self.register_embedding(text, vector)?;
        }
        Ok(())
    }

    /// Registers the fixtures stored at `path`.
    pub fn load_fixture_file(&self, path: &Path) -> Result<(), GatewayError> {
        self.register_all(FixtureFile::load(path)?)
    }

    /// Calls received so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Largest number of calls observed running at once.
    pub fn peak_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn enter(&self) -> InFlight<'_> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        InFlight(self)
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, request: &ChatRequest, sample_indices: &[usize]) -> Result<Vec<String>, GatewayError> {
        let _guard = self.enter();
        let prompt = request.prompt();
        let hash = sha256_hex(&prompt);
        let map = self.completions.read().unwrap_or_else(|e| e.into_inner());
        let responses = map.get(&hash).or_else(|| map.get(&prompt)).ok_or(GatewayError::MissingFixture { key: hash })?;
        Ok(sample_indices.iter().map(|i| responses[i % responses.len()].clone()).collect())
    }

    fn embed(&self, _model: &str, texts: &[&str]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let _guard = self.enter();
        let map = self.embeddings.read().unwrap_or_else(|e| e.into_inner());
        texts
            .iter()
            .map(|t| map.get(*t).cloned().ok_or_else(|| GatewayError::MissingEmbedding { text: t.to_string() }))
            .collect()
    }
}

/// Deterministic bag-of-words vector for offline fixtures: lowercased
/// alphanumeric tokens hashed into `dim` buckets, plus a constant last
/// component so that no text maps to the zero vector.
pub fn hashed_bow(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 2, "need at least two dimensions");
    let mut v = vec![0.0; dim];
    let lower = text.to_lowercase();
    for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let digest = Sha256::digest(token.as_bytes());
        let bucket = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as usize % (dim - 1);
        v[bucket] += 1.0;
    }
    v[dim - 1] = 0.5;
    v
}
