//! The three agents: self-annotator, discriminator and predictor.

pub mod annotator;
pub mod discriminator;
pub mod predictor;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use oema_core::prompt::TemplateError;
use oema_core::retrieval::SimilarityError;
use thiserror::Error;

use crate::gateway::GatewayError;

pub use annotator::{annotate_sentence, build_self_annotated_corpus, AnnotationTrace, AnnotatorConfig};
pub use discriminator::{
    build_index, discriminate, extract_ontology, score_candidates, Candidate, Discrimination, DiscriminatorConfig,
    Scoring, SelectionTrace,
};
pub use predictor::{predict, PredictionTrace, PredictorConfig};

/// Agent failures, tagged with the sentence being processed.
#[derive(Debug, Error)]
pub enum AgentError {
    /// A gateway call failed.
    #[error("sentence `{id}`: {source}")]
    Gateway {
        /// Sentence id.
        id: String,
        /// Cause.
        #[source]
        source: GatewayError,
    },
    /// A vector could not be indexed or queried.
    #[error("sentence `{id}`: {source}")]
    Similarity {
        /// Sentence id.
        id: String,
        /// Cause.
        #[source]
        source: SimilarityError,
    },
    /// A prompt could not be rendered.
    #[error("sentence `{id}`: {source}")]
    Template {
        /// Sentence id.
        id: String,
        /// Cause.
        #[source]
        source: TemplateError,
    },
    /// An input that must be non-empty is empty.
    #[error("{0} is empty")]
    Empty(&'static str),
    /// Index entries do not follow the corpus.
    #[error("index does not match corpus: {0}")]
    Misaligned(String),
    /// An agent configuration value is out of range.
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl AgentError {
    pub(crate) fn gateway(id: &str) -> impl FnOnce(GatewayError) -> AgentError + '_ {
        move |source| AgentError::Gateway { id: id.to_string(), source }
    }
}

/// Applies `f` to every item on up to `workers` threads; results keep the
/// input order.
pub(crate) fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
