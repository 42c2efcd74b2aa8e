//! JSONL persistence for corpora and vector indices.
//!
//! One JSON object per line, UTF-8, LF line endings:
//!
//! ```text
//! {"id": "s1", "text": "CT scan was negative.", "mentions": [{"surface": "CT scan", "start": 0, "end": 7, "label": "Test"}], "provenance": "gold"}
//! ```
//!
//! Offsets count Unicode scalar values. `vote_stats` is written only when
//! present.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use oema_core::corpus::{AnnotatedExample, Corpus, CorpusError, EntityMention, LabelSet, Provenance, Sentence, VoteStats};
use oema_core::retrieval::{SimilarityError, VectorIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while reading or writing JSONL files.
#[derive(Debug, Error)]
pub enum IoError {
    /// The file could not be read or written.
    #[error("{}: {source}", path.display())]
    Io {
        /// File involved.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: io::Error,
    },
    /// A line is not a valid record.
    #[error("{}:{line}: malformed record: {source}", path.display())]
    Malformed {
        /// File involved.
        path: PathBuf,
        /// 1-based line number.
        line: usize,
        /// Parser error.
        #[source]
        source: serde_json::Error,
    },
    /// A record violates a corpus invariant.
    #[error("{}:{line}: sentence `{id}`: {source}", path.display())]
    Invalid {
        /// File involved.
        path: PathBuf,
        /// 1-based line number.
        line: usize,
        /// Offending sentence id.
        id: String,
        /// Violated invariant.
        #[source]
        source: Box<CorpusError>,
    },
    /// An index line holds an unusable vector.
    #[error("{}:{line}: vector for `{id}`: {source}", path.display())]
    BadVector {
        /// File involved.
        path: PathBuf,
        /// 1-based line number.
        line: usize,
        /// Sentence id of the entry.
        id: String,
        /// Reason.
        #[source]
        source: SimilarityError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    #[serde(default)]
    mentions: Vec<EntityMention>,
    #[serde(default = "gold")]
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vote_stats: Option<VoteStats>,
}

fn gold() -> Provenance {
    Provenance::Gold
}

/// Corpus name derived from a file path: its stem.
pub fn corpus_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Parses JSONL text into a corpus. `origin` is only used in error messages.
/// Blank lines are skipped; `provenance` defaults to `gold` and `mentions`
/// to an empty list.
pub fn parse_corpus(
    content: &str,
    name: &str,
    label_set: &LabelSet,
    origin: &Path,
) -> Result<Corpus, IoError> {
    let mut examples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|source| IoError::Malformed {
            path: origin.to_path_buf(),
            line: i + 1,
            source,
        })?;
        let invalid = |id: &str, source| IoError::Invalid {
            path: origin.to_path_buf(),
            line: i + 1,
            id: id.to_string(),
            source: Box::new(source),
        };
        if !ids.insert(record.id.clone()) {
            return Err(invalid(&record.id, CorpusError::DuplicateId { id: record.id.clone() }));
        }
        let sentence = Sentence::new(record.id.clone(), record.text).map_err(|e| invalid(&record.id, e))?;
        let example = AnnotatedExample::new(sentence, record.mentions, record.provenance, record.vote_stats);
        example.validate(label_set).map_err(|e| invalid(&record.id, e))?;
        examples.push(example);
    }
    Ok(Corpus::new(name, label_set.clone(), examples).expect("records validated one by one"))
}

/// Loads a JSONL corpus; its name is the file stem.
pub fn load_corpus(path: &Path, label_set: &LabelSet) -> Result<Corpus, IoError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    parse_corpus(&content, &corpus_name(path), label_set, path)
}

/// Serializes a corpus to JSONL text.
pub fn render_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for ex in corpus.examples() {
        let record = Record {
            id: ex.sentence.id.clone(),
            text: ex.sentence.text.clone(),
            mentions: ex.mentions.clone(),
            provenance: ex.provenance,
            vote_stats: ex.vote_stats.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("corpus records serialize"));
        out.push('\n');
    }
    out
}

/// Writes a corpus as JSONL. The parent directory must exist.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), IoError> {
    write_atomic(path, render_corpus(corpus).as_bytes())
}

#[derive(Serialize, Deserialize)]
struct IndexRecord {
    id: String,
    model: String,
    vector: Vec<f64>,
}

/// Writes an index sidecar: one `{id, model, vector}` object per line.
pub fn save_index(index: &VectorIndex, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    for e in index.entries() {
        let record = IndexRecord { id: e.id.clone(), model: index.model().to_string(), vector: e.vector.clone() };
        out.push_str(&serde_json::to_string(&record).expect("index records serialize"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads an index sidecar written by [`save_index`]. `model` is used for an
/// empty file.
pub fn load_index(path: &Path, model: &str) -> Result<VectorIndex, IoError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    let mut index: Option<VectorIndex> = None;
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: IndexRecord = serde_json::from_str(line).map_err(|source| IoError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        let index = index.get_or_insert_with(|| VectorIndex::new(record.model.clone()));
        index.push(record.id.clone(), record.vector).map_err(|source| IoError::BadVector {
            path: path.to_path_buf(),
            line: i + 1,
            id: record.id,
            source,
        })?;
    }
    Ok(index.unwrap_or_else(|| VectorIndex::new(model)))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    static SEQ: AtomicU64 = AtomicU64::new(0);
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".{}.{}.tmp", std::process::id(), SEQ.fetch_add(1, Ordering::Relaxed)));
    let tmp = path.with_file_name(name);
    let write = || -> io::Result<()> {
        let mut file = BufWriter::new(fs::File::create(&tmp)?);
        file.write_all(bytes)?;
        file.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|source| {
        let _ = fs::remove_file(&tmp);
        IoError::Io { path: path.to_path_buf(), source }
    })
}

/// Appends JSON lines to a string buffer.
pub fn push_json_line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("trace records serialize"));
    out.push('\n');
}
