//! Sentences, mentions, label sets and annotated corpora.
//!
//! All character offsets are counted in Unicode scalar values, never bytes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entities::RawEntity;

/// Violations of the corpus data model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    /// Sentence text was empty or whitespace only.
    #[error("sentence `{id}` has empty text")]
    EmptyText {
        /// Offending sentence id.
        id: String,
    },
    /// Two sentences share an id.
    #[error("duplicate sentence id `{id}`")]
    DuplicateId {
        /// The repeated id.
        id: String,
    },
    /// A label set with no labels.
    #[error("label set `{name}` has no labels")]
    EmptyLabelSet {
        /// Label set name.
        name: String,
    },
    /// A label listed twice.
    #[error("label set `{name}` lists `{label}` twice")]
    DuplicateLabel {
        /// Label set name.
        name: String,
        /// The repeated label.
        label: String,
    },
    /// A description for a label that is not in the set.
    #[error("label set `{name}` describes unknown label `{label}`")]
    UnknownDescription {
        /// Label set name.
        name: String,
        /// The undeclared label.
        label: String,
    },
    /// A mention span outside the sentence or empty.
    #[error("sentence `{id}`: span [{start}, {end}) is out of bounds for text of length {len}")]
    SpanOutOfBounds {
        /// Sentence id.
        id: String,
        /// Span start.
        start: usize,
        /// Span end.
        end: usize,
        /// Text length in chars.
        len: usize,
    },
    /// The text under a span differs from the mention surface.
    #[error("sentence `{id}`: text at [{start}, {end}) is `{found}`, mention says `{surface}`")]
    SurfaceMismatch {
        /// Sentence id.
        id: String,
        /// Span start.
        start: usize,
        /// Span end.
        end: usize,
        /// Declared surface.
        surface: String,
        /// Text actually under the span.
        found: String,
    },
    /// A mention label that the label set does not declare.
    #[error("sentence `{id}`: label `{label}` is not in the label set")]
    UnknownLabel {
        /// Sentence id.
        id: String,
        /// The label.
        label: String,
    },
    /// Two mentions with identical span and label.
    #[error("sentence `{id}`: duplicate mention [{start}, {end}) `{label}`")]
    DuplicateMention {
        /// Sentence id.
        id: String,
        /// Span start.
        start: usize,
        /// Span end.
        end: usize,
        /// Label.
        label: String,
    },
    /// A self-annotated example without voting metadata.
    #[error("sentence `{id}`: self-annotated example has no vote statistics")]
    MissingVoteStats {
        /// Sentence id.
        id: String,
    },
}

/// A unit of clinical text with a stable id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// Identifier, unique within a corpus.
    pub id: String,
    /// UTF-8 text.
    pub text: String,
}

impl Sentence {
    /// Builds a sentence, rejecting blank text.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, CorpusError> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { id });
        }
        Ok(Self { id, text })
    }

    /// Length of the text in chars.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Text between two char offsets, if the range is valid.
    pub fn slice(&self, start: usize, end: usize) -> Option<&str> {
        char_slice(&self.text, start, end)
    }
}

/// Returns `text[start..end]` with char offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut bounds = text.char_indices().map(|(b, _)| b).chain(core::iter::once(text.len()));
    let begin = bounds.nth(start)?;
    let finish = if end == start { begin } else { bounds.nth(end - start - 1)? };
    Some(&text[begin..finish])
}

/// An entity span with its type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    /// Text exactly as it appears in the sentence.
    pub surface: String,
    /// Inclusive start, in chars.
    pub start: usize,
    /// Exclusive end, in chars.
    pub end: usize,
    /// Entity type.
    pub label: String,
}

impl EntityMention {
    /// Convenience constructor.
    pub fn new(surface: impl Into<String>, start: usize, end: usize, label: impl Into<String>) -> Self {
        Self { surface: surface.into(), start, end, label: label.into() }
    }

    fn sort_key(&self) -> (usize, usize, &str) {
        (self.start, self.end, &self.label)
    }
}

/// The entity types of a dataset, in prompt order, with optional prose descriptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    name: String,
    labels: Vec<String>,
    #[serde(default)]
    descriptions: BTreeMap<String, String>,
}

impl LabelSet {
    /// Validates and builds a label set.
    pub fn new(
        name: impl Into<String>,
        labels: Vec<String>,
        descriptions: BTreeMap<String, String>,
    ) -> Result<Self, CorpusError> {
        let name = name.into();
        if labels.is_empty() {
            return Err(CorpusError::EmptyLabelSet { name });
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(CorpusError::DuplicateLabel { name, label: label.clone() });
            }
        }
        if let Some(label) = descriptions.keys().find(|k| !seen.contains(k.as_str())) {
            return Err(CorpusError::UnknownDescription { name, label: label.clone() });
        }
        Ok(Self { name, labels, descriptions })
    }

    /// Label set without descriptions.
    pub fn from_labels<I, S>(name: impl Into<String>, labels: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(name, labels.into_iter().map(Into::into).collect(), BTreeMap::new())
    }

    /// The medical problem / treatment / test label set.
    pub fn mtsamples() -> Self {
        Self::from_labels("mtsamples", ["Medical problem", "Treatment", "Test"])
            .expect("static label set is valid")
    }

    /// The vaccine adverse event label set.
    pub fn vaers() -> Self {
        Self::from_labels(
            "vaers",
            ["Investigation", "Nervous adverse event", "Other adverse event", "Procedure"],
        )
        .expect("static label set is valid")
    }

    /// Dataset name.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Labels in declaration order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Type descriptions keyed by label.
    pub fn descriptions(&self) -> &BTreeMap<String, String> {
        &self.descriptions
    }

    /// Replaces the descriptions.
    pub fn with_descriptions(self, descriptions: BTreeMap<String, String>) -> Result<Self, CorpusError> {
        Self::new(self.name, self.labels, descriptions)
    }

    /// Whether `label` is declared verbatim.
    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    /// Index of `label` in declaration order.
    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Maps a label as an LLM may have spelled it onto the declared label:
    /// exact match first, then case- and whitespace-insensitive.
    pub fn canonical(&self, label: &str) -> Option<&str> {
        if let Some(i) = self.position(label) {
            return Some(&self.labels[i]);
        }
        let wanted = crate::voting::normalize_surface(label);
        self.labels
            .iter()
            .find(|l| crate::voting::normalize_surface(l) == wanted)
            .map(String::as_str)
    }
}

/// Where an example's mentions came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Human annotation.
    Gold,
    /// Produced by the self-annotator with voting.
    SelfAnnotated,
    /// Produced by the final predictor.
    Predicted,
}

/// Votes for one surface key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceVotes {
    /// Number of sampled responses that proposed the surface.
    pub mention_count: u32,
    /// Label → number of proposing responses that used it.
    pub type_histogram: BTreeMap<String, u32>,
}

/// Surface key → votes.
pub type VoteStats = BTreeMap<String, SurfaceVotes>;

/// A sentence with its mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedExample {
    /// The sentence.
    pub sentence: Sentence,
    /// Mentions sorted by (start, end, label).
    pub mentions: Vec<EntityMention>,
    /// Annotation source.
    pub provenance: Provenance,
    /// Voting metadata, present for self-annotated examples.
    pub vote_stats: Option<VoteStats>,
}

impl AnnotatedExample {
    /// Builds an example, sorting mentions into canonical order.
    pub fn new(
        sentence: Sentence,
        mut mentions: Vec<EntityMention>,
        provenance: Provenance,
        vote_stats: Option<VoteStats>,
    ) -> Self {
        mentions.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Self { sentence, mentions, provenance, vote_stats }
    }

    /// An example with no mentions.
    pub fn unlabeled(sentence: Sentence) -> Self {
        Self::new(sentence, Vec::new(), Provenance::Gold, None)
    }

    /// Checks every mention against the sentence and the label set.
    pub fn validate(&self, label_set: &LabelSet) -> Result<(), CorpusError> {
        let id = &self.sentence.id;
        if self.sentence.text.trim().is_empty() {
            return Err(CorpusError::EmptyText { id: id.clone() });
        }
        if self.provenance == Provenance::SelfAnnotated && self.vote_stats.is_none() {
            return Err(CorpusError::MissingVoteStats { id: id.clone() });
        }
        let len = self.sentence.char_len();
        let mut seen = BTreeSet::new();
        for m in &self.mentions {
            if m.start >= m.end || m.end > len {
                return Err(CorpusError::SpanOutOfBounds {
                    id: id.clone(),
                    start: m.start,
                    end: m.end,
                    len,
                });
            }
            let found = self.sentence.slice(m.start, m.end).unwrap_or_default();
            if found != m.surface {
                return Err(CorpusError::SurfaceMismatch {
                    id: id.clone(),
                    start: m.start,
                    end: m.end,
                    surface: m.surface.clone(),
                    found: found.to_string(),
                });
            }
            if !label_set.contains(&m.label) {
                return Err(CorpusError::UnknownLabel { id: id.clone(), label: m.label.clone() });
            }
            if !seen.insert(m.sort_key()) {
                return Err(CorpusError::DuplicateMention {
                    id: id.clone(),
                    start: m.start,
                    end: m.end,
                    label: m.label.clone(),
                });
            }
        }
        Ok(())
    }
}

/// An ordered, validated collection of annotated examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    label_set: LabelSet,
    examples: Vec<AnnotatedExample>,
}

impl Corpus {
    /// Validates every example and the uniqueness of sentence ids.
    pub fn new(
        name: impl Into<String>,
        label_set: LabelSet,
        examples: Vec<AnnotatedExample>,
    ) -> Result<Self, CorpusError> {
        let mut ids = BTreeSet::new();
        for ex in &examples {
            if !ids.insert(ex.sentence.id.as_str()) {
                return Err(CorpusError::DuplicateId { id: ex.sentence.id.clone() });
            }
            ex.validate(&label_set)?;
        }
        Ok(Self { name: name.into(), label_set, examples })
    }

    /// Corpus name.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Active label set.
    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    /// Examples in order.
    pub fn examples(&self) -> &[AnnotatedExample] {
        &self.examples
    }

    /// Number of examples.
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    /// True when there are no examples.
    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Looks up an example by sentence id.
    pub fn get(&self, id: &str) -> Option<&AnnotatedExample> {
        self.examples.iter().find(|e| e.sentence.id == id)
    }

    /// The first `n` examples in their original order (all of them if there
    /// are fewer). `n == 0` yields an empty corpus.
    pub fn take_head(&self, n: usize) -> Corpus {
        Corpus {
            name: self.name.clone(),
            label_set: self.label_set.clone(),
            examples: self.examples.iter().take(n).cloned().collect(),
        }
    }

    /// Renames the corpus.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Consumes the corpus, returning its examples.
    pub fn into_examples(self) -> Vec<AnnotatedExample> {
        self.examples
    }
}

/// Why a raw (surface, label) pair could not be grounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// The label is not in the active label set.
    UnknownLabel,
    /// The surface was blank.
    EmptySurface,
    /// No (further) occurrence of the surface in the sentence.
    NotFound,
    /// Grounded onto a span already produced with the same label.
    Duplicate,
}

/// A raw pair that was not turned into a mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingDrop {
    /// Surface as emitted.
    pub surface: String,
    /// Label as emitted.
    pub label: String,
    /// Reason.
    pub reason: DropReason,
}

/// Result of grounding a list of raw pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Grounding {
    /// Grounded mentions sorted by (start, end, label).
    pub mentions: Vec<EntityMention>,
    /// Pairs that were dropped, in input order.
    pub drops: Vec<GroundingDrop>,
}

/// Maps LLM-emitted (surface, label) pairs onto character spans of `sentence`.
///
/// Each pair takes the leftmost occurrence of its surface that starts at or
/// after the end of the previous grounding of the identical surface string.
/// Exact matching is tried first, then a char-wise case-insensitive match;
/// in the fallback case the stored surface is the sentence's own spelling.
/// Labels are mapped onto the label set via [`LabelSet::canonical`].
pub fn ground_mentions(sentence: &Sentence, raw: &[RawEntity], label_set: &LabelSet) -> Grounding {
    let text: Vec<char> = sentence.text.chars().collect();
    let mut resume: BTreeMap<&str, usize> = BTreeMap::new();
    let mut taken: BTreeSet<(usize, usize, String)> = BTreeSet::new();
    let mut out = Grounding::default();

    for pair in raw {
        let drop = |reason| GroundingDrop {
            surface: pair.surface.clone(),
            label: pair.label.clone(),
            reason,
        };
        let Some(label) = label_set.canonical(&pair.label) else {
            out.drops.push(drop(DropReason::UnknownLabel));
            continue;
        };
        let surface = pair.surface.trim();
        if surface.is_empty() {
            out.drops.push(drop(DropReason::EmptySurface));
            continue;
        }
        let needle: Vec<char> = surface.chars().collect();
        let from = resume.get(surface).copied().unwrap_or(0);
        let found = find_from(&text, &needle, from, |a, b| a == b)
            .or_else(|| find_from(&text, &needle, from, chars_eq_ignore_case));
        let Some(start) = found else {
            out.drops.push(drop(DropReason::NotFound));
            continue;
        };
        let end = start + needle.len();
        resume.insert(surface, end);
        if !taken.insert((start, end, label.to_string())) {
            out.drops.push(drop(DropReason::Duplicate));
            continue;
        }
        let stored: String = text[start..end].iter().collect();
        out.mentions.push(EntityMention::new(stored, start, end, label));
    }
    out.mentions.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

fn find_from(hay: &[char], needle: &[char], from: usize, eq: impl Fn(char, char) -> bool) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len())
        .find(|&i| hay[i..i + needle.len()].iter().zip(needle).all(|(&a, &b)| eq(a, b)))
}

fn chars_eq_ignore_case(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}
