//! Exact and relaxed precision / recall / F1.
//!
//! Each gold and each predicted mention is credited at most once. Within a
//! sentence the pairing is a maximum one-to-one matching under the regime's
//! predicate: gold mentions are visited by position, predictions are tried
//! by position, and augmenting paths repair greedy choices that would
//! otherwise block a later pair.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, EntityMention};

/// Gold and predicted corpora disagree on their sentences.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    /// Sentence id sets differ.
    #[error("sentence ids differ: {missing} missing from predictions (e.g. `{example}`), {extra} unexpected")]
    IdMismatch {
        /// Gold ids with no prediction.
        missing: usize,
        /// Predicted ids not in gold.
        extra: usize,
        /// One offending id.
        example: String,
    },
}

/// Matching regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Identical boundaries and type.
    Exact,
    /// Same type and overlapping spans.
    Relaxed,
}

impl Regime {
    /// Both regimes.
    pub const BOTH: [Regime; 2] = [Regime::Exact, Regime::Relaxed];

    /// Lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            Regime::Exact => "exact",
            Regime::Relaxed => "relaxed",
        }
    }

    /// Whether `pred` may be credited for `gold`.
    pub fn matches(self, gold: &EntityMention, pred: &EntityMention) -> bool {
        match self {
            Regime::Exact => match_exact(gold, pred),
            Regime::Relaxed => match_relaxed(gold, pred),
        }
    }
}

/// Same boundaries and same label.
pub fn match_exact(gold: &EntityMention, pred: &EntityMention) -> bool {
    gold.start == pred.start && gold.end == pred.end && gold.label == pred.label
}

/// Same label and overlapping half-open spans.
pub fn match_relaxed(gold: &EntityMention, pred: &EntityMention) -> bool {
    gold.label == pred.label && gold.start.max(pred.start) < gold.end.min(pred.end)
}

fn by_position(mentions: &[EntityMention]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mentions.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&mentions[a], &mentions[b]);
        (x.start, x.end, &x.label).cmp(&(y.start, y.end, &y.label))
    });
    order
}

/// Maximum one-to-one matching; returns (gold index, pred index) pairs
/// sorted by gold index.
pub fn match_mentions(gold: &[EntityMention], pred: &[EntityMention], regime: Regime) -> Vec<(usize, usize)> {
    let pred_order = by_position(pred);
    let edges: Vec<Vec<usize>> = gold
        .iter()
        .map(|g| pred_order.iter().copied().filter(|&p| regime.matches(g, &pred[p])).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; pred.len()];
    for g in by_position(gold) {
        let mut visited = vec![false; pred.len()];
        augment(g, &edges, &mut owner, &mut visited);
    }
    let mut pairs: Vec<(usize, usize)> =
        owner.iter().enumerate().filter_map(|(p, g)| g.map(|g| (g, p))).collect();
    pairs.sort_unstable();
    pairs
}

fn augment(g: usize, edges: &[Vec<usize>], owner: &mut [Option<usize>], visited: &mut [bool]) -> bool {
    for &p in &edges[g] {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        if owner[p].is_none_or(|other| augment(other, edges, owner, visited)) {
            owner[p] = Some(g);
            return true;
        }
    }
    false
}

/// P, R, F1 with their counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// matched / predicted, 0 without predictions.
    pub precision: f64,
    /// matched / gold, 0 without gold.
    pub recall: f64,
    /// Harmonic mean, 0 when P + R = 0.
    pub f1: f64,
    /// Gold mentions.
    pub gold_count: usize,
    /// Predicted mentions.
    pub pred_count: usize,
    /// Credited pairs.
    pub matched_count: usize,
}

impl Metrics {
    /// Derives the ratios from counts.
    pub fn from_counts(gold_count: usize, pred_count: usize, matched_count: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(matched_count, pred_count);
        let recall = ratio(matched_count, gold_count);
        Self { precision, recall, f1: f1(precision, recall), gold_count, pred_count, matched_count }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Metrics for one entity type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    /// Entity type.
    pub label: String,
    /// Its metrics.
    pub metrics: Metrics,
}

/// Unweighted mean over entity types.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    /// Mean precision.
    pub precision: f64,
    /// Mean recall.
    pub recall: f64,
    /// Mean F1.
    pub f1: f64,
}

/// Evaluation of one prediction corpus under one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Matching regime.
    pub regime: Regime,
    /// Pooled over all sentences and types.
    pub micro: Metrics,
    /// Mean over the types listed in `per_type`.
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    /// Label-set types first, in declaration order, then any other
    /// label seen, in string order.
    pub per_type: Vec<TypeMetrics>,
}

/// Scores `pred` against `gold`. Both must hold the same sentence ids, except
/// that an empty `pred` counts as no predictions for every gold sentence.
pub fn evaluate(gold: &Corpus, pred: &Corpus, regime: Regime) -> Result<EvalReport, EvalError> {
    let gold_ids: BTreeSet<&str> = gold.examples().iter().map(|e| e.sentence.id.as_str()).collect();
    let pred_by_id: BTreeMap<&str, &[EntityMention]> = if pred.is_empty() {
        gold_ids.iter().map(|id| (*id, &[][..])).collect()
    } else {
        pred.examples().iter().map(|e| (e.sentence.id.as_str(), e.mentions.as_slice())).collect()
    };
    let missing: Vec<&&str> = gold_ids.iter().filter(|id| !pred_by_id.contains_key(**id)).collect();
    let extra: Vec<&&str> = pred_by_id.keys().filter(|id| !gold_ids.contains(**id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let example = missing.first().or(extra.first()).map(|s| String::from(**s)).unwrap_or_default();
        return Err(EvalError::IdMismatch { missing: missing.len(), extra: extra.len(), example });
    }

    // label → (gold, pred, matched)
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for ex in gold.examples() {
        let predicted = pred_by_id[ex.sentence.id.as_str()];
        for m in &ex.mentions {
            counts.entry(m.label.clone()).or_default().0 += 1;
        }
        for m in predicted {
            counts.entry(m.label.clone()).or_default().1 += 1;
        }
        for (g, _) in match_mentions(&ex.mentions, predicted, regime) {
            counts.entry(ex.mentions[g].label.clone()).or_default().2 += 1;
        }
    }

    let label_set = gold.label_set();
    let mut labels: Vec<String> = label_set.labels().to_vec();
    labels.extend(counts.keys().filter(|l| !label_set.contains(l)).cloned());
    let per_type: Vec<TypeMetrics> = labels
        .into_iter()
        .map(|label| {
            let (g, p, m) = counts.get(&label).copied().unwrap_or_default();
            TypeMetrics { label, metrics: Metrics::from_counts(g, p, m) }
        })
        .collect();

    let (g, p, m) = counts.values().fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let n = per_type.len() as f64;
    let macro_avg = MacroMetrics {
        precision: per_type.iter().map(|t| t.metrics.precision).sum::<f64>() / n,
        recall: per_type.iter().map(|t| t.metrics.recall).sum::<f64>() / n,
        f1: per_type.iter().map(|t| t.metrics.f1).sum::<f64>() / n,
    };
    Ok(EvalReport { regime, micro: Metrics::from_counts(g, p, m), macro_avg, per_type })
}
