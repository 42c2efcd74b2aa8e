//! Allocation-only core of the OEMA zero-shot clinical NER pipeline.
//!
//! Everything in this crate is pure: the data model for sentences and
//! mentions, grounding of LLM-emitted strings onto character spans,
//! self-consistency voting, lenient parsing of LLM answers, prompt
//! rendering, cosine retrieval, helpfulness-based example selection and
//! the exact/relaxed NER evaluator. Network access, caching, file formats
//! and the CLI live in the `oema` crate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![warn(missing_docs)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod entities;
pub mod eval;
pub mod lenient;
pub mod ontology;
pub mod prompt;
pub mod retrieval;
pub mod selection;
pub mod voting;

pub use corpus::{
    ground_mentions, AnnotatedExample, Corpus, CorpusError, DropReason, EntityMention, Grounding,
    GroundingDrop, LabelSet, Provenance, Sentence, SurfaceVotes, VoteStats,
};
pub use entities::{parse_llm_entities, RawEntity};
pub use eval::{evaluate, match_exact, match_relaxed, EvalError, EvalReport, Regime};
pub use ontology::{parse_ontology_answer, OntologyExtraction, OntologyPair};
pub use prompt::{AblationFlags, PromptForge, PromptTemplate, TemplateError, TemplateKind};
pub use retrieval::{cosine_similarity, Neighbor, SimilarityError, VectorIndex};
pub use selection::{apply_scores, parse_scores, select_examples, ScoreEntry, ScoredCandidate};
pub use voting::{normalize_surface, two_stage_vote, RetainedMention, VoteOutcome};
