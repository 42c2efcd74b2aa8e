//! Helpfulness scores and top-k example selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedExample;
use crate::lenient::{self, Loose};
use crate::ontology::OntologyExtraction;

/// Score given to candidates the scorer did not (validly) rate.
pub const DEFAULT_SCORE: u8 = 1;

/// One `{idx, score, reason}` record from a scoring answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    /// Candidate index as written by the model.
    pub idx: i64,
    /// Raw numeric score.
    pub score: f64,
    /// Free-text justification.
    pub reason: String,
}

/// Parses a scoring answer. `None` when no array can be found at all;
/// records without a usable `idx` or `score` are skipped.
pub fn parse_scores(raw: &str) -> Option<Vec<ScoreEntry>> {
    let Loose::Array(items) = lenient::extract(raw, '[')? else {
        return None;
    };
    let entries = items
        .iter()
        .filter_map(|item| {
            let idx = item.get("idx")?.as_number()?;
            let score = item.get("score")?.as_number()?;
            if !idx.is_finite() || (idx as i64) as f64 != idx || !score.is_finite() {
                return None;
            }
            let reason = item.get("reason").and_then(Loose::as_str).unwrap_or_default();
            Some(ScoreEntry { idx: idx as i64, score, reason: reason.into() })
        })
        .collect();
    Some(entries)
}

/// Rounds half up, then clamps into 1..=5.
pub fn normalize_score(score: f64) -> u8 {
    // After clamping the value is positive, so truncation is floor.
    (score + 0.5).clamp(1.0, 5.0) as u8
}

/// Assigns `(helpfulness, reason, answered)` to each candidate index, in the
/// given order. The first record for an index wins; unanswered candidates get
/// [`DEFAULT_SCORE`] and an empty reason.
pub fn apply_scores(indices: &[i64], entries: &[ScoreEntry]) -> Vec<(u8, String, bool)> {
    let mut by_idx: BTreeMap<i64, &ScoreEntry> = BTreeMap::new();
    for e in entries {
        by_idx.entry(e.idx).or_insert(e);
    }
    indices
        .iter()
        .map(|i| match by_idx.get(i) {
            Some(e) => (normalize_score(e.score), e.reason.clone(), true),
            None => (DEFAULT_SCORE, String::new(), false),
        })
        .collect()
}

/// A retrieved example with its ontology and helpfulness.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    /// The self-annotated example.
    pub example: AnnotatedExample,
    /// Position of the example in the corpus.
    pub corpus_position: usize,
    /// Cosine similarity to the target.
    pub similarity: f64,
    /// 1 = nearest.
    pub similarity_rank: usize,
    /// Ontology extracted from the example sentence.
    pub ontology: OntologyExtraction,
    /// 1..=5.
    pub helpfulness: u8,
    /// Scorer's justification.
    pub reason: String,
    /// Whether the scorer rated this candidate explicitly.
    pub answered: bool,
}

/// Orders by helpfulness (high first), then similarity rank, then corpus
/// position, and keeps the first `min(k, len)` candidates.
pub fn select_examples(scored: &[ScoredCandidate], k: usize) -> Vec<&ScoredCandidate> {
    let mut order: Vec<&ScoredCandidate> = scored.iter().collect();
    order.sort_by(|a, b| {
        b.helpfulness
            .cmp(&a.helpfulness)
            .then(a.similarity_rank.cmp(&b.similarity_rank))
            .then(a.corpus_position.cmp(&b.corpus_position))
    });
    order.truncate(k);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use alloc::format;
    use alloc::vec;

    fn cand(rank: usize, score: u8) -> ScoredCandidate {
        let sentence = Sentence::new(format!("s{rank}"), "text").unwrap();
        ScoredCandidate {
            example: AnnotatedExample::unlabeled(sentence),
            corpus_position: 100 - rank,
            similarity: 1.0 - rank as f64 / 10.0,
            similarity_rank: rank,
            ontology: OntologyExtraction::default(),
            helpfulness: score,
            reason: String::new(),
            answered: true,
        }
    }

    #[test]
    fn scores_echo_in_candidate_order() {
        let entries = parse_scores(
            r#"[{"idx": 1, "score": 5, "reason": "a"}, {"idx": 2, "score": "3", "reason": "b"}, {"idx": 3, "score": 1}]"#,
        )
        .unwrap();
        let applied = apply_scores(&[1, 2, 3], &entries);
        assert_eq!(applied.iter().map(|a| a.0).collect::<Vec<_>>(), [5, 3, 1]);
        assert_eq!(applied[0].1, "a");
    }

    #[test]
    fn out_of_range_and_fractional_scores() {
        assert_eq!(normalize_score(7.0), 5);
        assert_eq!(normalize_score(0.0), 1);
        assert_eq!(normalize_score(-3.0), 1);
        assert_eq!(normalize_score(4.5), 5);
        assert_eq!(normalize_score(3.5), 4);
        assert_eq!(normalize_score(2.49), 2);
    }

    #[test]
    fn missing_candidate_gets_default() {
        // Rule table: idx 1 → 4, idx 2 absent → default 1, idx 3 → 2.
        let entries = parse_scores(r#"[{"idx": 1, "score": 4}, {"idx": 3, "score": 2}]"#).unwrap();
        let applied = apply_scores(&[1, 2, 3], &entries);
        assert_eq!(applied.iter().map(|a| (a.0, a.2)).collect::<Vec<_>>(), [(4, true), (1, false), (2, true)]);
    }

    #[test]
    fn unparseable_answer() {
        assert_eq!(parse_scores("All of them are helpful."), None);
        assert_eq!(parse_scores("[]"), Some(vec![]));
        let entries = parse_scores(r#"[{"idx": "two", "score": 4}, {"idx": 1.5, "score": 4}]"#).unwrap();
        assert!(entries.is_empty());
    }

    #[test]
    fn first_record_per_index_wins() {
        let entries = parse_scores(r#"[{"idx": 1, "score": 2}, {"idx": 1, "score": 5}]"#).unwrap();
        assert_eq!(apply_scores(&[1], &entries)[0].0, 2);
    }

    #[test]
    fn selection_orders_by_score_then_rank() {
        let scored = vec![cand(1, 3), cand(2, 5), cand(3, 1)];
        let ranks: Vec<_> = select_examples(&scored, 3).iter().map(|c| c.similarity_rank).collect();
        assert_eq!(ranks, [2, 1, 3]);
        assert_eq!(select_examples(&scored, 1)[0].similarity_rank, 2);
        assert_eq!(select_examples(&scored, 10).len(), 3);
    }

    #[test]
    fn equal_scores_degenerate_to_nearest() {
        let scored = vec![cand(3, 2), cand(1, 2), cand(2, 2), cand(4, 2)];
        let ranks: Vec<_> = select_examples(&scored, 2).iter().map(|c| c.similarity_rank).collect();
        assert_eq!(ranks, [1, 2]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn selection_size_and_monotone_scores(
                scores in proptest::collection::vec(1u8..=5, 0..15),
                k in 1usize..8,
            ) {
                let scored: Vec<_> = scores.iter().enumerate().map(|(i, &s)| cand(i + 1, s)).collect();
                let picked = select_examples(&scored, k);
                prop_assert_eq!(picked.len(), k.min(scored.len()));
                for w in picked.windows(2) {
                    prop_assert!(w[0].helpfulness >= w[1].helpfulness);
                }
            }

            #[test]
            fn every_candidate_gets_exactly_one_score(
                raw in any::<String>(),
                n in 1usize..13,
            ) {
                let indices: Vec<i64> = (1..=n as i64).collect();
                let entries = parse_scores(&raw).unwrap_or_default();
                let applied = apply_scores(&indices, &entries);
                prop_assert_eq!(applied.len(), n);
                prop_assert!(applied.iter().all(|a| (1..=5).contains(&a.0)));
            }
        }
    }
}
