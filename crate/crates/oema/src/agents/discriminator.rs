//! Ontology-guided example selection: retrieve K neighbours by cosine
//! similarity, extract ontology pairs for them and for the target, score
//! their helpfulness in one batch prompt and keep the top k.

use oema_core::corpus::{AnnotatedExample, Corpus, LabelSet, Sentence};
use oema_core::ontology::{parse_ontology_answer, OntologyExtraction};
use oema_core::prompt::PromptForge;
use oema_core::retrieval::VectorIndex;
use oema_core::selection::{apply_scores, parse_scores, select_examples, ScoredCandidate};
use serde::{Deserialize, Serialize};

use super::{par_map, AgentError};
use crate::gateway::{ChatRequest, Gateway};

/// Sentences embedded per request while indexing.
pub const EMBED_BATCH: usize = 64;

fn default_big_k() -> usize {
    12
}
fn default_k() -> usize {
    3
}

/// Retrieval and selection sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Candidates retrieved.
    #[serde(rename = "K", default = "default_big_k")]
    pub retrieve: usize,
    /// Examples kept.
    #[serde(rename = "k", default = "default_k")]
    pub select: usize,
    /// Temperature of the ontology and scoring calls.
    #[serde(default)]
    pub temperature: f64,
    /// Candidates per scoring prompt; all in one prompt when absent.
    #[serde(default)]
    pub score_batch_size: Option<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { retrieve: default_big_k(), select: default_k(), temperature: 0.0, score_batch_size: None }
    }
}

impl DiscriminatorConfig {
    /// `1 ≤ k ≤ K`.
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.select == 0 {
            return Err(AgentError::Config("discriminator.k must be at least 1".into()));
        }
        if self.select > self.retrieve {
            return Err(AgentError::Config(format!(
                "discriminator.k = {} exceeds discriminator.K = {}",
                self.select, self.retrieve
            )));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(AgentError::Config("discriminator.temperature must lie in [0, 2]".into()));
        }
        if self.score_batch_size == Some(0) {
            return Err(AgentError::Config("discriminator.score_batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Embeds every sentence of `corpus`, in corpus order.
pub fn build_index(corpus: &Corpus, embedder: &Gateway) -> Result<VectorIndex, AgentError> {
    if corpus.is_empty() {
        return Err(AgentError::Empty("corpus to index"));
    }
    let mut index = VectorIndex::new(embedder.model());
    for chunk in corpus.examples().chunks(EMBED_BATCH) {
        let texts: Vec<&str> = chunk.iter().map(|e| e.sentence.text.as_str()).collect();
        let vectors = embedder.embed(&texts).map_err(AgentError::gateway(&chunk[0].sentence.id))?;
        for (ex, v) in chunk.iter().zip(vectors) {
            index
                .push(ex.sentence.id.clone(), v.values)
                .map_err(|source| AgentError::Similarity { id: ex.sentence.id.clone(), source })?;
        }
    }
    Ok(index)
}

/// Checks that `index` holds one entry per corpus sentence, in order.
pub fn check_alignment(corpus: &Corpus, index: &VectorIndex) -> Result<(), AgentError> {
    if corpus.len() != index.len() {
        return Err(AgentError::Misaligned(format!("{} sentences, {} vectors", corpus.len(), index.len())));
    }
    for (ex, entry) in corpus.examples().iter().zip(index.entries()) {
        if ex.sentence.id != entry.id {
            return Err(AgentError::Misaligned(format!("expected `{}`, found `{}`", ex.sentence.id, entry.id)));
        }
    }
    Ok(())
}

/// Extracts ontology pairs from one text with a single completion.
pub fn extract_ontology(
    text: &str,
    gateway: &Gateway,
    forge: &PromptForge,
    temperature: f64,
) -> Result<OntologyExtraction, crate::gateway::GatewayError> {
    let prompt = forge.render_ontology_extraction(&[], text);
    let request = ChatRequest::new(gateway.model(), prompt).temperature(temperature);
    let completion = gateway.complete(&request)?.remove(0);
    Ok(parse_ontology_answer(&completion.text))
}

/// A retrieved example awaiting its score.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// The example.
    pub example: AnnotatedExample,
    /// Position in the self-annotated corpus.
    pub corpus_position: usize,
    /// Cosine similarity to the target.
    pub similarity: f64,
    /// 1 = nearest.
    pub rank: usize,
    /// Ontology of the example sentence.
    pub ontology: OntologyExtraction,
}

/// Result of scoring a candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct Scoring {
    /// One entry per candidate, in candidate order.
    pub scored: Vec<ScoredCandidate>,
    /// Raw scorer answers, one per batch.
    pub raw: Vec<String>,
    /// Whether some batch answer held no parseable array.
    pub unparseable: bool,
}

fn batches(n: usize, size: Option<usize>) -> Vec<std::ops::Range<usize>> {
    let count = match size {
        Some(b) if b < n => n.div_ceil(b),
        _ => 1,
    };
    (0..count).map(|j| j * n / count..(j + 1) * n / count).collect()
}

/// Scores candidates for `target`. Candidates are shown to the scorer with
/// their similarity rank as index. Candidates the answer leaves out get the
/// default score.
pub fn score_candidates(
    target: &Sentence,
    target_ontology: &OntologyExtraction,
    candidates: &[Candidate],
    label_set: &LabelSet,
    gateway: &Gateway,
    forge: &PromptForge,
    config: &DiscriminatorConfig,
) -> Result<Scoring, AgentError> {
    if candidates.is_empty() {
        return Err(AgentError::Empty("candidate list"));
    }
    let target_answer = target_ontology.answer_string();
    let mut scored = Vec::with_capacity(candidates.len());
    let mut raw = Vec::new();
    let mut unparseable = false;
    for range in batches(candidates.len(), config.score_batch_size) {
        let batch = &candidates[range];
        let answers: Vec<String> = batch.iter().map(|c| c.ontology.answer_string()).collect();
        let lines: Vec<(i64, &str, &str)> = batch
            .iter()
            .zip(&answers)
            .map(|(c, a)| (c.rank as i64, c.example.sentence.text.as_str(), a.as_str()))
            .collect();
        let prompt = forge
            .render_example_scoring(label_set, (&target.text, &target_answer), &lines)
            .map_err(|source| AgentError::Template { id: target.id.clone(), source })?;
        let request = ChatRequest::new(gateway.model(), prompt).temperature(config.temperature);
        let answer = gateway.complete(&request).map_err(AgentError::gateway(&target.id))?.remove(0).text;
        let entries = parse_scores(&answer).unwrap_or_else(|| {
            log::warn!("{}: unparseable scoring answer, default scores assigned", target.id);
            unparseable = true;
            Vec::new()
        });
        let indices: Vec<i64> = lines.iter().map(|l| l.0).collect();
        for (c, (helpfulness, reason, answered)) in batch.iter().zip(apply_scores(&indices, &entries)) {
            scored.push(ScoredCandidate {
                example: c.example.clone(),
                corpus_position: c.corpus_position,
                similarity: c.similarity,
                similarity_rank: c.rank,
                ontology: c.ontology.clone(),
                helpfulness,
                reason,
                answered,
            });
        }
        raw.push(answer);
    }
    Ok(Scoring { scored, raw, unparseable })
}

/// Per-candidate line of a selection trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    /// Sentence id.
    pub id: String,
    /// Cosine similarity.
    pub similarity: f64,
    /// Similarity rank.
    pub rank: usize,
    /// Raw ontology answer.
    pub ontology: String,
    /// Helpfulness 1..=5.
    pub score: u8,
    /// Scorer's reason.
    pub reason: String,
    /// Whether the scorer rated it.
    pub answered: bool,
}

/// Audit record of one selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    /// Raw ontology answer for the target.
    pub target_ontology: String,
    /// Candidates in similarity order.
    pub candidates: Vec<CandidateTrace>,
    /// Raw scoring answers.
    pub scoring_raw: Vec<String>,
    /// Whether scoring fell back to defaults.
    pub scoring_unparseable: bool,
    /// Selected ids, prompt order.
    pub selected: Vec<String>,
}

/// Selected examples with their audit record.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrimination {
    /// Examples in prompt order, best first.
    pub selected: Vec<AnnotatedExample>,
    /// Audit record.
    pub trace: SelectionTrace,
}

/// Retrieves `K` candidates for `target`, extracts ontologies for the
/// candidates and the target, scores the candidates and keeps the best `k`.
#[allow(clippy::too_many_arguments)]
pub fn discriminate(
    target: &Sentence,
    corpus: &Corpus,
    index: &VectorIndex,
    config: &DiscriminatorConfig,
    label_set: &LabelSet,
    embedder: &Gateway,
    scorer: &Gateway,
    forge: &PromptForge,
) -> Result<Discrimination, AgentError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(AgentError::Empty("self-annotated corpus"));
    }
    check_alignment(corpus, index)?;
    let query = embedder.embed(&[&target.text]).map_err(AgentError::gateway(&target.id))?.remove(0);
    let neighbors = index
        .retrieve_knn(&query.values, config.retrieve)
        .map_err(|source| AgentError::Similarity { id: target.id.clone(), source })?;

    let mut texts: Vec<&str> = neighbors.iter().map(|n| corpus.examples()[n.position].sentence.text.as_str()).collect();
    texts.push(&target.text);
    let ontologies = par_map(&texts, scorer.max_parallel(), |t| {
        extract_ontology(t, scorer, forge, config.temperature)
    });
    let mut ontologies = ontologies
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(AgentError::gateway(&target.id))?;
    let target_ontology = ontologies.pop().expect("target ontology present");

    let candidates: Vec<Candidate> = neighbors
        .iter()
        .zip(ontologies)
        .map(|(n, ontology)| Candidate {
            example: corpus.examples()[n.position].clone(),
            corpus_position: n.position,
            similarity: n.similarity,
            rank: n.rank,
            ontology,
        })
        .collect();
    let scoring = score_candidates(target, &target_ontology, &candidates, label_set, scorer, forge, config)?;
    let selected: Vec<AnnotatedExample> =
        select_examples(&scoring.scored, config.select).into_iter().map(|c| c.example.clone()).collect();

    let trace = SelectionTrace {
        target_ontology: target_ontology.raw,
        candidates: scoring
            .scored
            .iter()
            .map(|c| CandidateTrace {
                id: c.example.sentence.id.clone(),
                similarity: c.similarity,
                rank: c.similarity_rank,
                ontology: c.ontology.raw.clone(),
                score: c.helpfulness,
                reason: c.reason.clone(),
                answered: c.answered,
            })
            .collect(),
        scoring_raw: scoring.raw,
        scoring_unparseable: scoring.unparseable,
        selected: selected.iter().map(|e| e.sentence.id.clone()).collect(),
    };
    Ok(Discrimination { selected, trace })
}
