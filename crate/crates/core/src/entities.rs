//! Parsing of NER answers of the shape `[{"entity": "label"}, ...]`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::lenient::{self, Loose};

/// An entity as emitted by a model: surface string and label, no offsets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawEntity {
    /// Mention text as the model wrote it.
    pub surface: String,
    /// Entity type as the model wrote it.
    pub label: String,
}

impl RawEntity {
    /// Convenience constructor.
    pub fn new(surface: impl Into<String>, label: impl Into<String>) -> Self {
        Self { surface: surface.into(), label: label.into() }
    }
}

/// Extracts (surface, label) pairs from a model answer.
///
/// Total: never fails, returns an empty list when nothing usable is found.
/// Objects with several entries are flattened in entry order; entries whose
/// value is not a string, or whose key or value is blank, are skipped. A bare
/// object with no surrounding array is read as a one-element array.
pub fn parse_llm_entities(raw: &str) -> Vec<RawEntity> {
    let items = match lenient::extract(raw, '[') {
        Some(Loose::Array(items)) => items,
        _ => match lenient::extract(raw, '{') {
            Some(obj @ Loose::Object(_)) => alloc::vec![obj],
            _ => return Vec::new(),
        },
    };
    let mut out = Vec::new();
    for item in items {
        let Loose::Object(entries) = item else { continue };
        for (key, value) in entries {
            let Some(label) = value.as_str() else { continue };
            let (surface, label) = (key.trim(), label.trim());
            if !surface.is_empty() && !label.is_empty() {
                out.push(RawEntity::new(surface, label));
            }
        }
    }
    out
}

/// Serializes pairs in the answer shape the prompts ask for, as strict JSON.
pub fn to_answer_json(entities: &[RawEntity]) -> String {
    let mut out = String::from("[");
    for (i, e) in entities.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('{');
        out.push_str(&lenient::quote(&e.surface));
        out.push_str(": ");
        out.push_str(&lenient::quote(&e.label));
        out.push('}');
    }
    out.push(']');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn canonical_answer() {
        assert_eq!(
            parse_llm_entities(r#"[{"abdominal pain": "Medical problem"}]"#),
            vec![RawEntity::new("abdominal pain", "Medical problem")]
        );
    }

    #[test]
    fn empty_list() {
        assert!(parse_llm_entities("[]").is_empty());
    }

    #[test]
    fn fenced_single_quoted_with_trailing_prose() {
        assert_eq!(
            parse_llm_entities("```json\n[{'CT scan': 'Test'}]\n``` Sure!"),
            vec![RawEntity::new("CT scan", "Test")]
        );
    }

    #[test]
    fn merged_objects_flatten_in_key_order() {
        assert_eq!(
            parse_llm_entities(r#"[{"fever": "Medical problem", "aspirin": "Treatment"}]"#),
            vec![RawEntity::new("fever", "Medical problem"), RawEntity::new("aspirin", "Treatment")]
        );
    }

    #[test]
    fn answer_json_reparses() {
        let pairs = vec![RawEntity::new("a \"b\"", "Test"), RawEntity::new("c", "Treatment")];
        assert_eq!(to_answer_json(&pairs), r#"[{"a \"b\"": "Test"}, {"c": "Treatment"}]"#);
        assert_eq!(parse_llm_entities(&to_answer_json(&pairs)), pairs);
        assert_eq!(to_answer_json(&[]), "[]");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn entity() -> impl Strategy<Value = RawEntity> {
            ("[!-~]([ -~]{0,12}[!-~])?", "[A-Za-z][A-Za-z ]{0,10}[A-Za-z]")
                .prop_map(|(s, l)| RawEntity::new(s, l))
        }

        proptest! {
            #[test]
            fn total_on_arbitrary_input(input in any::<String>()) {
                let first = parse_llm_entities(&input);
                prop_assert_eq!(first, parse_llm_entities(&input));
            }

            #[test]
            fn canonical_serialization_round_trips(pairs in proptest::collection::vec(entity(), 0..6)) {
                prop_assert_eq!(parse_llm_entities(&to_answer_json(&pairs)), pairs);
            }
        }
    }
}
