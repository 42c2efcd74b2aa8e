//! Two-stage majority voting over sampled NER responses.
//!
//! Stage 1 keeps a mention iff strictly more than half of the responses
//! propose it (under any label). Stage 2 gives each kept mention the label
//! proposed most often by the responses that proposed it.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, SurfaceVotes, VoteStats};
use crate::entities::RawEntity;

/// Surface key used for vote counting: trimmed, inner whitespace collapsed
/// to single spaces, lowercased.
pub fn normalize_surface(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// A mention that survived stage 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainedMention {
    /// Normalized surface key.
    pub key: String,
    /// Most frequent raw spelling among the proposing responses.
    pub surface: String,
    /// Stage-2 winner.
    pub label: String,
    /// Number of responses proposing the key.
    pub mention_count: u32,
    /// Label → number of proposing responses using it.
    pub type_histogram: BTreeMap<String, u32>,
}

/// Result of voting, both lists sorted by key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    /// Mentions proposed by more than half of the responses.
    pub retained: Vec<RetainedMention>,
    /// (key, count) of mentions that did not reach the threshold.
    pub discarded: Vec<(String, u32)>,
}

impl VoteOutcome {
    /// Retained mentions as raw pairs ready for grounding.
    pub fn winners(&self) -> Vec<RawEntity> {
        self.retained.iter().map(|r| RawEntity::new(r.surface.clone(), r.label.clone())).collect()
    }

    /// Per-key statistics of the retained mentions.
    pub fn vote_stats(&self) -> VoteStats {
        self.retained
            .iter()
            .map(|r| {
                let votes = SurfaceVotes {
                    mention_count: r.mention_count,
                    type_histogram: r.type_histogram.clone(),
                };
                (r.key.clone(), votes)
            })
            .collect()
    }
}

#[derive(Default)]
struct Tally<'a> {
    count: u32,
    labels: BTreeMap<&'a str, u32>,
    spellings: BTreeMap<&'a str, u32>,
}

/// Aggregates `n_samples` parsed responses.
///
/// Within one response a surface key counts once; its label and spelling
/// are those of its first occurrence there. Label ties go to the label that
/// comes first in `label_set`; labels outside the set rank after every
/// declared label, then by string order. Spelling ties go to the smallest
/// string, so the outcome does not depend on the order of the responses.
///
/// # Panics
///
/// If `responses.len() != n_samples`.
pub fn two_stage_vote(responses: &[Vec<RawEntity>], n_samples: usize, label_set: &LabelSet) -> VoteOutcome {
    assert_eq!(responses.len(), n_samples, "one parsed response per sample");
    let mut tallies: BTreeMap<String, Tally<'_>> = BTreeMap::new();
    for response in responses {
        let mut seen = BTreeMap::new();
        for e in response {
            let key = normalize_surface(&e.surface);
            if key.is_empty() || seen.contains_key(&key) {
                continue;
            }
            seen.insert(key, e);
        }
        for (key, e) in seen {
            let tally = tallies.entry(key).or_default();
            tally.count += 1;
            *tally.labels.entry(e.label.as_str()).or_default() += 1;
            *tally.spellings.entry(e.surface.trim()).or_default() += 1;
        }
    }

    let label_rank = |label: &str| label_set.position(label).unwrap_or(usize::MAX);
    let mut outcome = VoteOutcome::default();
    for (key, tally) in tallies {
        if 2 * tally.count as usize <= n_samples {
            outcome.discarded.push((key, tally.count));
            continue;
        }
        let label = tally
            .labels
            .iter()
            .min_by(|a, b| b.1.cmp(a.1).then(label_rank(a.0).cmp(&label_rank(b.0))).then(a.0.cmp(b.0)))
            .map(|(l, _)| String::from(*l))
            .unwrap_or_default();
        let surface = tally
            .spellings
            .iter()
            .min_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)))
            .map(|(s, _)| String::from(*s))
            .unwrap_or_default();
        outcome.retained.push(RetainedMention {
            key,
            surface,
            label,
            mention_count: tally.count,
            type_histogram: tally.labels.into_iter().map(|(l, c)| (String::from(l), c)).collect(),
        });
    }
    outcome
}
