use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::sha256_hex;
use crate::corpus_io::write_atomic;

pub(crate) fn chat_key(model: &str, prompt_hash: &str, temperature: f64, n_samples: usize, sample: usize) -> String {
    sha256_hex(&format!("chat\n{model}\n{prompt_hash}\n{temperature:?}\n{n_samples}\n{sample}"))
}

pub(crate) fn embed_key(model: &str, text_hash: &str) -> String {
    sha256_hex(&format!("embed\n{model}\n{text_hash}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Chat { text: String },
    Embedding { vector: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct Record {
    key: String,
    #[serde(flatten)]
    entry: Entry,
}

/// Content-addressed response store: always in memory, optionally mirrored
/// to one JSON file per key under a directory.
#[derive(Debug, Default)]
pub struct Cache {
    memory: RwLock<HashMap<String, Entry>>,
    dir: Option<PathBuf>,
}

impl Cache {
    /// Process-local cache.
    pub fn memory() -> Self {
        Self::default()
    }

    /// Cache persisted under `dir`, created if needed.
    pub fn on_disk(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { memory: RwLock::default(), dir: Some(dir.to_path_buf()) })
    }

    /// Directory backing the cache, if any.
    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Number of entries held in memory.
    pub fn len(&self) -> usize {
        self.memory.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// True when nothing is held in memory.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    fn get(&self, key: &str) -> Option<Entry> {
        if let Some(e) = self.memory.read().unwrap_or_else(|e| e.into_inner()).get(key) {
            return Some(e.clone());
        }
        let path = self.path(key)?;
        let bytes = fs::read(&path).ok()?;
        let record: Record = match serde_json::from_slice(&bytes) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("ignoring unreadable cache record {}: {e}", path.display());
                return None;
            }
        };
        if record.key != key {
            return None;
        }
        self.memory.write().unwrap_or_else(|e| e.into_inner()).insert(key.to_string(), record.entry.clone());
        Some(record.entry)
    }

    fn put(&self, key: &str, entry: Entry) -> io::Result<()> {
        if let Some(path) = self.path(key) {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            let record = Record { key: key.to_string(), entry: entry.clone() };
            let bytes = serde_json::to_vec(&record).map_err(io::Error::other)?;
            write_atomic(&path, &bytes).map_err(io::Error::other)?;
        }
        self.memory.write().unwrap_or_else(|e| e.into_inner()).insert(key.to_string(), entry);
        Ok(())
    }

    pub(crate) fn get_chat(&self, key: &str) -> Option<String> {
        match self.get(key)? {
            Entry::Chat { text } => Some(text),
            Entry::Embedding { .. } => None,
        }
    }

    pub(crate) fn put_chat(&self, key: &str, text: &str) -> io::Result<()> {
        self.put(key, Entry::Chat { text: text.to_string() })
    }

    pub(crate) fn get_embedding(&self, key: &str) -> Option<Vec<f64>> {
        match self.get(key)? {
            Entry::Embedding { vector } => Some(vector),
            Entry::Chat { .. } => None,
        }
    }

    pub(crate) fn put_embedding(&self, key: &str, vector: &[f64]) -> io::Result<()> {
        self.put(key, Entry::Embedding { vector: vector.to_vec() })
    }
}
