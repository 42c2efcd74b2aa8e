//! Self-annotation: sampled zero-shot completions aggregated by two-stage
//! majority voting, then grounded onto the sentence.

use oema_core::corpus::{ground_mentions, AnnotatedExample, Corpus, GroundingDrop, LabelSet, Provenance, Sentence};
use oema_core::entities::parse_llm_entities;
use oema_core::prompt::PromptForge;
use oema_core::voting::{two_stage_vote, RetainedMention};
use serde::{Deserialize, Serialize};

use super::{par_map, AgentError};
use crate::gateway::{sha256_hex, ChatRequest, Gateway};

fn default_n_samples() -> usize {
    5
}
fn default_temperature() -> f64 {
    0.7
}
fn default_pool_size() -> usize {
    500
}

/// Sampling settings of the self-annotator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorConfig {
    /// Completions per sentence.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Sampling temperature.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Leading sentences of the unlabeled corpus to annotate.
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self { n_samples: default_n_samples(), temperature: default_temperature(), pool_size: default_pool_size() }
    }
}

impl AnnotatorConfig {
    /// Range checks.
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.n_samples == 0 {
            return Err(AgentError::Config("annotator.n_samples must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(AgentError::Config("annotator.temperature must lie in [0, 2]".into()));
        }
        if self.pool_size == 0 {
            return Err(AgentError::Config("annotator.pool_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Audit record of one annotated sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTrace {
    /// Sentence id.
    pub id: String,
    /// SHA-256 of the prompt.
    pub prompt_sha256: String,
    /// Raw completions in sample order.
    pub completions: Vec<String>,
    /// Mentions that passed stage 1.
    pub retained: Vec<RetainedMention>,
    /// (key, count) of mentions that did not.
    pub discarded: Vec<(String, u32)>,
    /// Retained pairs that could not be grounded.
    pub drops: Vec<GroundingDrop>,
}

/// Annotates one sentence with `config.n_samples` voted completions.
pub fn annotate_sentence(
    sentence: &Sentence,
    label_set: &LabelSet,
    config: &AnnotatorConfig,
    gateway: &Gateway,
    forge: &PromptForge,
) -> Result<(AnnotatedExample, AnnotationTrace), AgentError> {
    let prompt = forge.render_self_annotation(label_set, &sentence.text);
    let request = ChatRequest::new(gateway.model(), prompt.as_str())
        .temperature(config.temperature)
        .samples(config.n_samples);
    let completions = gateway.complete(&request).map_err(AgentError::gateway(&sentence.id))?;
    let responses: Vec<_> = completions.iter().map(|c| parse_llm_entities(&c.text)).collect();
    let outcome = two_stage_vote(&responses, config.n_samples, label_set);
    let grounding = ground_mentions(sentence, &outcome.winners(), label_set);
    for d in &grounding.drops {
        log::debug!("{}: dropped {:?} ({:?}): {:?}", sentence.id, d.surface, d.label, d.reason);
    }
    let example = AnnotatedExample::new(
        sentence.clone(),
        grounding.mentions,
        Provenance::SelfAnnotated,
        Some(outcome.vote_stats()),
    );
    let trace = AnnotationTrace {
        id: sentence.id.clone(),
        prompt_sha256: sha256_hex(&prompt),
        completions: completions.into_iter().map(|c| c.text).collect(),
        retained: outcome.retained,
        discarded: outcome.discarded,
        drops: grounding.drops,
    };
    Ok((example, trace))
}

/// Annotates the first `config.pool_size` sentences of `unlabeled`, in
/// order. Sentences run concurrently up to the gateway's parallelism; the
/// first failure in input order aborts the run.
pub fn build_self_annotated_corpus(
    unlabeled: &Corpus,
    label_set: &LabelSet,
    config: &AnnotatorConfig,
    gateway: &Gateway,
    forge: &PromptForge,
) -> Result<(Corpus, Vec<AnnotationTrace>), AgentError> {
    config.validate()?;
    let pool = unlabeled.take_head(config.pool_size);
    let results = par_map(pool.examples(), gateway.max_parallel(), |ex| {
        annotate_sentence(&ex.sentence, label_set, config, gateway, forge)
    });
    let mut examples = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let (ex, trace) = r?;
        examples.push(ex);
        traces.push(trace);
    }
    let corpus = Corpus::new("self_annotated", label_set.clone(), examples)
        .map_err(|e| AgentError::Config(format!("self-annotated corpus is invalid: {e}")))?;
    Ok((corpus, traces))
}
