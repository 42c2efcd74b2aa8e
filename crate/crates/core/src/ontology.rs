//! Ontology extraction answers: `{"(top-level category, concept)": "fragment", ...}`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::lenient::{self, Loose};

/// One extracted concept with the text fragment it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyPair {
    /// Top-level hierarchy name, e.g. `Clinical finding`.
    pub category: String,
    /// Concept name, e.g. `Pustule`.
    pub concept: String,
    /// Source fragment in the sentence.
    pub fragment: String,
}

/// Parsed ontology answer for one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyExtraction {
    /// Pairs in order of appearance in `raw`.
    pub pairs: Vec<OntologyPair>,
    /// The answer as returned by the model.
    pub raw: String,
}

impl OntologyExtraction {
    /// Answer string rebuilt from the parsed pairs, used when the extraction
    /// is shown to the scoring prompt.
    pub fn answer_string(&self) -> String {
        let mut out = String::from("{");
        for (i, p) in self.pairs.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let key = if p.category.is_empty() {
                p.concept.clone()
            } else {
                alloc::format!("({}, {})", p.category, p.concept)
            };
            out.push_str(&lenient::quote(&key));
            out.push_str(": ");
            out.push_str(&lenient::quote(&p.fragment));
        }
        out.push('}');
        out
    }
}

/// Splits `(category, concept)` at its first comma. Keys without a comma are
/// kept as a concept with an empty category.
fn split_key(key: &str) -> (String, String) {
    let inner = key.trim();
    let inner = inner.strip_prefix('(').unwrap_or(inner);
    let inner = inner.strip_suffix(')').unwrap_or(inner);
    match inner.split_once(',') {
        Some((cat, concept)) => (cat.trim().into(), concept.trim().into()),
        None => (String::new(), inner.trim().into()),
    }
}

/// Leniently parses an ontology answer. Unparseable answers give an empty
/// pair list; `raw` is always kept.
pub fn parse_ontology_answer(raw: &str) -> OntologyExtraction {
    let mut pairs = Vec::new();
    if let Some(Loose::Object(entries)) = lenient::extract(raw, '{') {
        for (key, value) in entries {
            let Some(fragment) = value.as_str() else { continue };
            let (category, concept) = split_key(&key);
            if concept.is_empty() && category.is_empty() {
                continue;
            }
            pairs.push(OntologyPair { category, concept, fragment: fragment.trim().into() });
        }
    }
    OntologyExtraction { pairs, raw: raw.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(c: &str, k: &str, f: &str) -> OntologyPair {
        OntologyPair { category: c.into(), concept: k.into(), fragment: f.into() }
    }

    #[test]
    fn demonstration_answer() {
        let raw = r#"{"(Clinical finding, Pustule)": "pimple", "(Body structure, Buttock)": "buttock"}"#;
        let o = parse_ontology_answer(raw);
        assert_eq!(
            o.pairs,
            [pair("Clinical finding", "Pustule", "pimple"), pair("Body structure", "Buttock", "buttock")]
        );
        assert_eq!(o.raw, raw);
        assert_eq!(o.answer_string(), raw);
    }

    #[test]
    fn prose_without_braces() {
        let o = parse_ontology_answer("I could not find any concepts.");
        assert!(o.pairs.is_empty());
        assert_eq!(o.raw, "I could not find any concepts.");
        assert_eq!(o.answer_string(), "{}");
    }

    #[test]
    fn single_quoted_keys() {
        // Hand-normalized: replace ' with " and parse as JSON, giving the same two pairs.
        let o = parse_ontology_answer("{'(Clinical finding, Pustule)': 'pimple', '(Body structure, Buttock)': 'buttock'}");
        assert_eq!(
            o.pairs,
            [pair("Clinical finding", "Pustule", "pimple"), pair("Body structure", "Buttock", "buttock")]
        );
    }

    #[test]
    fn concept_with_comma_and_missing_category() {
        let o = parse_ontology_answer(r#"{"(Clinical finding, Pain, acute)": "acute pain", "Fever": "fever", "(x)": 3}"#);
        assert_eq!(o.pairs, [pair("Clinical finding", "Pain, acute", "acute pain"), pair("", "Fever", "fever")]);
    }
}
