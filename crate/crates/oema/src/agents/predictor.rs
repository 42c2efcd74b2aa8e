//! Final prediction from type descriptions and selected examples.

use oema_core::corpus::{ground_mentions, AnnotatedExample, GroundingDrop, LabelSet, Provenance, Sentence};
use oema_core::entities::{parse_llm_entities, RawEntity};
use oema_core::prompt::{AblationFlags, PromptForge};
use oema_core::voting::two_stage_vote;
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::gateway::{sha256_hex, ChatRequest, Gateway};

fn default_n_samples() -> usize {
    1
}
fn yes() -> bool {
    true
}

/// Decoding and ablation settings of the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    /// Sampling temperature.
    #[serde(default)]
    pub temperature: f64,
    /// Completions per sentence; more than one enables voting.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Include the entity type description block.
    #[serde(default = "yes")]
    pub include_type_descriptions: bool,
    /// Include the selected examples.
    #[serde(default = "yes")]
    pub include_examples: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self { temperature: 0.0, n_samples: 1, include_type_descriptions: true, include_examples: true }
    }
}

impl PredictorConfig {
    /// Prompt composition flags.
    pub fn flags(&self) -> AblationFlags {
        AblationFlags {
            include_type_descriptions: self.include_type_descriptions,
            include_examples: self.include_examples,
        }
    }

    /// Range checks.
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.n_samples == 0 {
            return Err(AgentError::Config("predictor.n_samples must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(AgentError::Config("predictor.temperature must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

/// Audit record of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    /// Full prompt.
    pub prompt: String,
    /// Its SHA-256.
    pub prompt_sha256: String,
    /// Raw completions in sample order.
    pub completions: Vec<String>,
    /// Pairs handed to grounding.
    pub parsed: Vec<RawEntity>,
    /// Pairs that could not be grounded.
    pub drops: Vec<GroundingDrop>,
    /// Whether voting aggregated several samples.
    pub voted: bool,
}

/// Predicts the mentions of `target`. `examples` are shown in the given
/// order.
pub fn predict(
    target: &Sentence,
    examples: &[AnnotatedExample],
    label_set: &LabelSet,
    config: &PredictorConfig,
    gateway: &Gateway,
    forge: &PromptForge,
) -> Result<(AnnotatedExample, PredictionTrace), AgentError> {
    config.validate()?;
    let prompt = forge.render_final_prediction(label_set, examples, &target.text, config.flags());
    let request = ChatRequest::new(gateway.model(), prompt.as_str())
        .temperature(config.temperature)
        .samples(config.n_samples);
    let completions = gateway.complete(&request).map_err(AgentError::gateway(&target.id))?;
    let voted = config.n_samples > 1;
    let (parsed, vote_stats) = if voted {
        let responses: Vec<_> = completions.iter().map(|c| parse_llm_entities(&c.text)).collect();
        let outcome = two_stage_vote(&responses, config.n_samples, label_set);
        (outcome.winners(), Some(outcome.vote_stats()))
    } else {
        (parse_llm_entities(&completions[0].text), None)
    };
    let grounding = ground_mentions(target, &parsed, label_set);
    for d in &grounding.drops {
        log::info!("{}: dropped {:?} ({:?}): {:?}", target.id, d.surface, d.label, d.reason);
    }
    let example = AnnotatedExample::new(target.clone(), grounding.mentions, Provenance::Predicted, vote_stats);
    let trace = PredictionTrace {
        prompt_sha256: sha256_hex(&prompt),
        prompt,
        completions: completions.into_iter().map(|c| c.text).collect(),
        parsed,
        drops: grounding.drops,
        voted,
    };
    Ok((example, trace))
}
