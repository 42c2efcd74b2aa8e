//! The four prompt templates: self-annotation, ontology extraction, example
//! scoring and final prediction.
//!
//! Templates are plain text with `{{name}}` placeholders. Substitution is a
//! single pass, so placeholder-like text inside substituted values is left
//! alone. The final-prediction template with both ablation blocks empty
//! renders byte-identically to the self-annotation template.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedExample, LabelSet};
use crate::entities::{to_answer_json, RawEntity};

/// Template or rendering input problems.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    /// A placeholder this kind of template cannot fill.
    #[error("{kind} template: unknown placeholder `{{{{{name}}}}}`")]
    UnknownPlaceholder {
        /// Template kind.
        kind: TemplateKind,
        /// Placeholder name.
        name: String,
    },
    /// A placeholder this kind of template must contain.
    #[error("{kind} template: missing placeholder `{{{{{name}}}}}`")]
    MissingPlaceholder {
        /// Template kind.
        kind: TemplateKind,
        /// Placeholder name.
        name: &'static str,
    },
    /// Scoring prompt without candidates.
    #[error("scoring prompt needs at least one candidate")]
    NoCandidates,
    /// Two candidates with one index.
    #[error("duplicate candidate index {0}")]
    DuplicateIndex(i64),
    /// Category list lacking a required top-level category.
    #[error("category list must include `{0}`")]
    MissingCategory(&'static str),
}

/// Which prompt a template renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Zero-shot annotation of unlabeled text.
    SelfAnnotation,
    /// Top-level ontology concept extraction.
    OntologyExtraction,
    /// Helpfulness scoring of candidate examples.
    ExampleScoring,
    /// Few-shot prediction with type descriptions.
    FinalPrediction,
}

impl core::fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            TemplateKind::SelfAnnotation => "self_annotation",
            TemplateKind::OntologyExtraction => "ontology_extraction",
            TemplateKind::ExampleScoring => "example_scoring",
            TemplateKind::FinalPrediction => "final_prediction",
        })
    }
}

impl TemplateKind {
    /// All kinds.
    pub const ALL: [TemplateKind; 4] = [
        TemplateKind::SelfAnnotation,
        TemplateKind::OntologyExtraction,
        TemplateKind::ExampleScoring,
        TemplateKind::FinalPrediction,
    ];

    /// Placeholders a template of this kind must contain; no others are allowed.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateKind::SelfAnnotation => &["labels", "text"],
            TemplateKind::OntologyExtraction => &["categories", "exemplars", "text"],
            TemplateKind::ExampleScoring => &["labels", "target_sentence", "target_ontology", "candidates"],
            TemplateKind::FinalPrediction => &["type_descriptions", "labels", "examples", "text"],
        }
    }

    /// Built-in template text.
    pub fn default_body(self) -> &'static str {
        match self {
            TemplateKind::SelfAnnotation => SELF_ANNOTATION,
            TemplateKind::OntologyExtraction => ONTOLOGY_EXTRACTION,
            TemplateKind::ExampleScoring => EXAMPLE_SCORING,
            TemplateKind::FinalPrediction => FINAL_PREDICTION,
        }
    }
}

/// Persona line opening the NER prompts.
pub const PERSONA: &str =
    "You are an expert in medical named entity recognition. You're very good at extracting information.";

const SELF_ANNOTATION: &str = "You are an expert in medical named entity recognition. You're very good at extracting information.
Given entity label set: {{labels}}

Please recognize the named entities in the given text. Based on the given entity label set, provide answer in the following JSON format: [{'Entity Name': 'Entity Label'}]. If there is no entity in the text, return the following empty list: []. Only return answer, not explanations.

Text: \"{{text}}\"
Answer:";

const FINAL_PREDICTION: &str = "You are an expert in medical named entity recognition. You're very good at extracting information.
{{type_descriptions}}Given entity label set: {{labels}}

Please recognize the named entities in the given text. Based on the given entity label set, provide answer in the following JSON format: [{'Entity Name': 'Entity Label'}]. If there is no entity in the text, return the following empty list: []. Only return answer, not explanations.

{{examples}}Text: \"{{text}}\"
Answer:";

const ONTOLOGY_EXTRACTION: &str = "Please refer to the 18 top-level categories defined in the Concept Hierarchy of SNOMED CT, and explicitly extract the clinical medical ontologies mentioned in the text in the order of their appearance.
Top-level categories: {{categories}}

Provide answer in the format: {\"(top-level category, ontology)\": \"original text fragment\", ...}. Only a dictionary string should be returned, without any Markdown formatting, code blocks, or additional content.

Text: \"She started off with a little pimple on the buttock.\"
Answer: {\"(Clinical finding, Pustule)\": \"pimple\", \"(Body structure, Buttock)\": \"buttock\"}

{{exemplars}}Text: \"{{text}}\"
Answer:";

const EXAMPLE_SCORING: &str = "### Example Scoring for Entity Recognition Tasks
Given entity label set: {{labels}} and target sentence: {
'sentence': '{{target_sentence}}',
'ontology': '{{target_ontology}}'
}

### Scoring Guidelines
Based on the target sentence has learned SNOMED CT medical ontology and may involve entity type, please predict the helpfulness scores and give reasons of each sentence, which indicates the degree to which providing the current sentence can aid in extracting named entities from the target_sentence. The score ranges from 1 to 5, with 1 being the least helpful and 5 being the most helpful.

Provide answer in the following JSON format: [{\"idx\": \"sentence identifier\", \"score\": \"be strict and reflect the differences in scores, not all 1 or all 5\", \"reason\": \"combined with the characteristics of the target sentence\"}, ...]
Make sure that the output is a complete string, do not use newline characters, Markdown format, ```json, or any additional instructions, and only return formatted string results.

### Sentences
{{candidates}}";

/// The SNOMED CT top-level hierarchies offered to the ontology extractor.
pub const SNOMED_TOP_LEVEL: [&str; 18] = [
    "Body structure",
    "Clinical finding",
    "Environment or geographical location",
    "Event",
    "Observable entity",
    "Organism",
    "Pharmaceutical / biologic product",
    "Physical force",
    "Physical object",
    "Procedure",
    "Qualifier value",
    "Record artifact",
    "Situation with explicit context",
    "Social context",
    "Special concept",
    "Specimen",
    "Staging and scales",
    "Substance",
];

const REQUIRED_CATEGORIES: [&str; 2] = ["Clinical finding", "Body structure"];

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_slot_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) if is_slot_name(&after[..close]) => {
                out.push(Piece::Text(&rest[..open]));
                out.push(Piece::Slot(&after[..close]));
                rest = &after[close + 2..];
            }
            _ => {
                out.push(Piece::Text(&rest[..open + 2]));
                rest = after;
            }
        }
    }
    out.push(Piece::Text(rest));
    out
}

/// A validated template body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: TemplateKind,
    body: String,
}

impl PromptTemplate {
    /// Checks that `body` uses exactly the placeholders of `kind`.
    pub fn new(kind: TemplateKind, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let allowed = kind.placeholders();
        let mut used = BTreeSet::new();
        for piece in pieces(&body) {
            if let Piece::Slot(name) = piece {
                if !allowed.contains(&name) {
                    return Err(TemplateError::UnknownPlaceholder { kind, name: name.to_string() });
                }
                used.insert(name);
            }
        }
        if let Some(name) = allowed.iter().find(|n| !used.contains(*n)) {
            return Err(TemplateError::MissingPlaceholder { kind, name });
        }
        Ok(Self { kind, body })
    }

    /// The built-in template of `kind`.
    pub fn builtin(kind: TemplateKind) -> Self {
        Self { kind, body: kind.default_body().to_string() }
    }

    /// Kind.
    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    /// Raw body.
    pub fn body(&self) -> &str {
        &self.body
    }

    /// Substitutes `bindings` (name, value). Every placeholder of the kind
    /// must be bound; validated templates therefore never leave one behind.
    pub fn render(&self, bindings: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.body.len() + 256);
        for piece in pieces(&self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = bindings.iter().find(|(n, _)| *n == name).map(|(_, v)| *v);
                    debug_assert!(value.is_some(), "unbound placeholder {name}");
                    out.push_str(value.unwrap_or_default());
                }
            }
        }
        out
    }
}

/// Switches for the prediction-prompt ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Render the entity type description block.
    pub include_type_descriptions: bool,
    /// Render the selected examples.
    pub include_examples: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self { include_type_descriptions: true, include_examples: true }
    }
}

/// `['A', 'B', 'C']` in label-set order.
pub fn label_list(label_set: &LabelSet) -> String {
    let quoted: Vec<String> = label_set.labels().iter().map(|l| format!("'{l}'")).collect();
    format!("[{}]", quoted.join(", "))
}

/// The type description block, empty when the label set has no descriptions.
pub fn description_block(label_set: &LabelSet) -> String {
    let lines: Vec<String> = label_set
        .labels()
        .iter()
        .filter_map(|l| label_set.descriptions().get(l).map(|d| format!("- {l}: {d}\n")))
        .collect();
    if lines.is_empty() {
        String::new()
    } else {
        format!("Entity type descriptions:\n{}\n", lines.concat())
    }
}

/// Demonstrations as consecutive `Text:` / `Answer:` pairs.
pub fn example_block(examples: &[AnnotatedExample]) -> String {
    examples
        .iter()
        .map(|ex| {
            let pairs: Vec<RawEntity> =
                ex.mentions.iter().map(|m| RawEntity::new(m.surface.clone(), m.label.clone())).collect();
            format!("Text: \"{}\"\nAnswer: {}\n\n", ex.sentence.text, to_answer_json(&pairs))
        })
        .collect()
}

/// Renders all four prompts from (possibly overridden) templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptForge {
    self_annotation: PromptTemplate,
    ontology_extraction: PromptTemplate,
    example_scoring: PromptTemplate,
    final_prediction: PromptTemplate,
    categories: Vec<String>,
    ontology_exemplars: Vec<(String, String)>,
}

impl Default for PromptForge {
    fn default() -> Self {
        Self {
            self_annotation: PromptTemplate::builtin(TemplateKind::SelfAnnotation),
            ontology_extraction: PromptTemplate::builtin(TemplateKind::OntologyExtraction),
            example_scoring: PromptTemplate::builtin(TemplateKind::ExampleScoring),
            final_prediction: PromptTemplate::builtin(TemplateKind::FinalPrediction),
            categories: SNOMED_TOP_LEVEL.iter().map(|c| c.to_string()).collect(),
            ontology_exemplars: Vec::new(),
        }
    }
}

impl PromptForge {
    /// Replaces the template of `template.kind()`.
    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        match template.kind() {
            TemplateKind::SelfAnnotation => self.self_annotation = template,
            TemplateKind::OntologyExtraction => self.ontology_extraction = template,
            TemplateKind::ExampleScoring => self.example_scoring = template,
            TemplateKind::FinalPrediction => self.final_prediction = template,
        }
        self
    }

    /// Replaces the top-level category list.
    pub fn with_categories(mut self, categories: Vec<String>) -> Result<Self, TemplateError> {
        if let Some(missing) = REQUIRED_CATEGORIES.iter().find(|r| !categories.iter().any(|c| c == *r)) {
            return Err(TemplateError::MissingCategory(missing));
        }
        self.categories = categories;
        Ok(self)
    }

    /// Fixed (text, answer) demonstrations appended after the built-in one.
    pub fn with_ontology_exemplars(mut self, exemplars: Vec<(String, String)>) -> Self {
        self.ontology_exemplars = exemplars;
        self
    }

    /// Template of `kind`.
    pub fn template(&self, kind: TemplateKind) -> &PromptTemplate {
        match kind {
            TemplateKind::SelfAnnotation => &self.self_annotation,
            TemplateKind::OntologyExtraction => &self.ontology_extraction,
            TemplateKind::ExampleScoring => &self.example_scoring,
            TemplateKind::FinalPrediction => &self.final_prediction,
        }
    }

    /// Configured ontology demonstrations.
    pub fn ontology_exemplars(&self) -> &[(String, String)] {
        &self.ontology_exemplars
    }

    /// Zero-shot annotation prompt.
    pub fn render_self_annotation(&self, label_set: &LabelSet, text: &str) -> String {
        self.self_annotation.render(&[("labels", &label_list(label_set)), ("text", text)])
    }

    /// Ontology extraction prompt. `exemplars` follow the configured ones.
    pub fn render_ontology_extraction(&self, exemplars: &[(String, String)], text: &str) -> String {
        let block: String = self
            .ontology_exemplars
            .iter()
            .chain(exemplars)
            .map(|(t, a)| format!("Text: \"{t}\"\nAnswer: {a}\n\n"))
            .collect();
        self.ontology_extraction.render(&[
            ("categories", &self.categories.join("; ")),
            ("exemplars", &block),
            ("text", text),
        ])
    }

    /// Batch scoring prompt. `candidates` are (index, sentence, ontology answer).
    pub fn render_example_scoring(
        &self,
        label_set: &LabelSet,
        target: (&str, &str),
        candidates: &[(i64, &str, &str)],
    ) -> Result<String, TemplateError> {
        if candidates.is_empty() {
            return Err(TemplateError::NoCandidates);
        }
        let mut seen = BTreeSet::new();
        if let Some((dup, _, _)) = candidates.iter().find(|(i, _, _)| !seen.insert(*i)) {
            return Err(TemplateError::DuplicateIndex(*dup));
        }
        let lines: Vec<String> = candidates
            .iter()
            .map(|(i, s, o)| format!("{{'idx': {i}, 'sentence': '{s}', 'ontology': '{o}'}}"))
            .collect();
        Ok(self.example_scoring.render(&[
            ("labels", &label_list(label_set)),
            ("target_sentence", target.0),
            ("target_ontology", target.1),
            ("candidates", &lines.join("\n")),
        ]))
    }

    /// Final few-shot prediction prompt.
    pub fn render_final_prediction(
        &self,
        label_set: &LabelSet,
        examples: &[AnnotatedExample],
        text: &str,
        flags: AblationFlags,
    ) -> String {
        let descriptions =
            if flags.include_type_descriptions { description_block(label_set) } else { String::new() };
        let shots = if flags.include_examples { example_block(examples) } else { String::new() };
        self.final_prediction.render(&[
            ("type_descriptions", &descriptions),
            ("labels", &label_list(label_set)),
            ("examples", &shots),
            ("text", text),
        ])
    }
}
