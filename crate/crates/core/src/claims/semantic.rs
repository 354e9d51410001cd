//! Structured-prompt semantic claim extraction.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::relaxed_json::{extract_json_object, repair_json};
use super::{AtomicClaim, ClaimCategory};

/// Bump when the prompt text changes; it is part of every cache key.
pub const EXTRACTION_PROMPT_VERSION: &str = "v1";

/// Extraction prompt with a `{{DESCRIPTION}}` slot for the response text.
pub const EXTRACTION_PROMPT_TEMPLATE: &str = include_str!("../../resources/semantic_extraction_prompt.txt");

const DESCRIPTION_SLOT: &str = "{{DESCRIPTION}}";

/// Marker the extractor puts in front of counting questions.
pub const MULTI_MARKER: &str = "<multi>";

/// Words that flag a hedged question.
pub const HEDGE_WORDS: &[&str] = &[
    "some", "several", "possibly", "appears", "seems", "might", "perhaps", "maybe", "could", "likely",
];

const SECTION_KEYS: &[(&str, ClaimCategory)] = &[
    ("knowledge_and_functionality", ClaimCategory::Knowledge),
    ("object_quantity", ClaimCategory::Quantity),
    ("object_relation", ClaimCategory::Relation),
    ("object_attributes", ClaimCategory::Attribute),
    ("object_action", ClaimCategory::Action),
    ("reasoning", ClaimCategory::Reasoning),
    ("others", ClaimCategory::Other),
    // the prompt prose names this category "actions"
    ("actions", ClaimCategory::Action),
];

fn category_for_key(key: &str) -> Option<ClaimCategory> {
    SECTION_KEYS.iter().find(|(k, _)| *k == key).map(|(_, c)| *c)
}

/// Fills the extraction prompt with `response_text`.
pub fn build_semantic_extraction_prompt(response_text: &str) -> String {
    assert!(!response_text.is_empty(), "response text must be non-empty");
    EXTRACTION_PROMPT_TEMPLATE.replacen(DESCRIPTION_SLOT, response_text, 1)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticError {
    #[error("no valid JSON object in extractor output: {0}")]
    Parse(String),
    #[error("extractor output does not match the claim schema: {0}")]
    Schema(String),
    #[error("<multi> marker outside object_quantity in {section}: {question:?}")]
    MultiPlacement { section: String, question: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    SourceNotSubstring,
    VagueLanguage,
    DuplicateQuestion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticWarning {
    pub claim_index: usize,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticExtractionResult {
    pub claims: Vec<AtomicClaim>,
    pub warnings: Vec<SemanticWarning>,
}

/// One `{"text": ..., "question": [...]}` item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimEntry {
    pub text: String,
    pub question: Vec<String>,
}

/// Parsed extractor reply: sections in their original order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionDocument {
    pub sections: Vec<(String, Vec<ClaimEntry>)>,
}

impl ExtractionDocument {
    pub fn to_value(&self) -> Value {
        let map: Map<String, Value> = self
            .sections
            .iter()
            .map(|(k, entries)| (k.clone(), serde_json::to_value(entries).expect("entries serialise")))
            .collect();
        Value::Object(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("document serialises")
    }
}

/// Section key for a category; existence claims have none.
pub fn section_key(category: ClaimCategory) -> Option<&'static str> {
    SECTION_KEYS.iter().find(|(_, c)| *c == category).map(|(k, _)| *k)
}

/// Inverse of [`claims_from_document`]: one entry per claim, sections in
/// first-use order, `<multi>` restored on marked questions.
pub fn document_from_claims(claims: &[AtomicClaim]) -> Result<ExtractionDocument, SemanticError> {
    let mut doc = ExtractionDocument::default();
    for c in claims {
        let key = section_key(c.category)
            .ok_or_else(|| SemanticError::Schema(format!("{:?} claims have no section", c.category)))?;
        let question = if c.multi_marked { format!("{MULTI_MARKER}{}", c.question) } else { c.question.clone() };
        let entry = ClaimEntry { text: c.source_text.clone(), question: vec![question] };
        match doc.sections.iter_mut().find(|(k, _)| k == key) {
            Some((_, entries)) => entries.push(entry),
            None => doc.sections.push((key.to_string(), vec![entry])),
        }
    }
    Ok(doc)
}

/// Locates, repairs and schema-checks the JSON object in `model_output`.
pub fn parse_semantic_document(model_output: &str) -> Result<ExtractionDocument, SemanticError> {
    let raw = extract_json_object(model_output)
        .ok_or_else(|| SemanticError::Parse("no JSON object found".into()))?;
    let value: Value = match serde_json::from_str(raw) {
        Ok(v) => v,
        Err(first) => serde_json::from_str(&repair_json(raw))
            .map_err(|e| SemanticError::Parse(format!("{first}; after repair: {e}")))?,
    };
    let Value::Object(map) = value else {
        return Err(SemanticError::Schema("top level is not an object".into()));
    };
    let mut sections = Vec::with_capacity(map.len());
    for (key, val) in map {
        if category_for_key(&key).is_none() {
            return Err(SemanticError::Schema(format!("unknown section {key:?}")));
        }
        let entries: Vec<ClaimEntry> = serde_json::from_value(val)
            .map_err(|e| SemanticError::Schema(format!("section {key:?}: {e}")))?;
        sections.push((key, entries));
    }
    Ok(ExtractionDocument { sections })
}

fn has_hedge(question: &str) -> bool {
    question
        .split(|c: char| !c.is_alphabetic())
        .any(|w| HEDGE_WORDS.iter().any(|h| w.eq_ignore_ascii_case(h)))
}

/// Converts an extraction document into claims, checking them against the
/// response they were extracted from.
pub fn claims_from_document(
    doc: &ExtractionDocument,
    source_response: &str,
) -> Result<SemanticExtractionResult, SemanticError> {
    let mut result = SemanticExtractionResult::default();
    let mut seen: Vec<&str> = Vec::new();
    for (key, entries) in &doc.sections {
        let category = category_for_key(key).expect("keys validated at parse time");
        for entry in entries {
            if entry.text.is_empty() {
                return Err(SemanticError::Schema(format!("empty text in section {key:?}")));
            }
            for raw_q in &entry.question {
                let stripped = raw_q.trim_start();
                let (multi, question) = match stripped.strip_prefix(MULTI_MARKER) {
                    Some(rest) => (true, rest.trim_start()),
                    None => (false, raw_q.as_str()),
                };
                if (multi || question.contains(MULTI_MARKER)) && category != ClaimCategory::Quantity {
                    return Err(SemanticError::MultiPlacement { section: key.clone(), question: raw_q.clone() });
                }
                if question.contains(MULTI_MARKER) {
                    return Err(SemanticError::Schema(format!("{MULTI_MARKER} must prefix the question: {raw_q:?}")));
                }
                if !question.trim_end().ends_with('?') {
                    return Err(SemanticError::Schema(format!("not a question: {raw_q:?}")));
                }
                let index = result.claims.len();
                if !source_response.contains(entry.text.as_str()) {
                    result.warnings.push(SemanticWarning { claim_index: index, kind: WarningKind::SourceNotSubstring });
                }
                if has_hedge(question) {
                    result.warnings.push(SemanticWarning { claim_index: index, kind: WarningKind::VagueLanguage });
                }
                if seen.contains(&question.trim()) {
                    result.warnings.push(SemanticWarning { claim_index: index, kind: WarningKind::DuplicateQuestion });
                }
                seen.push(question.trim());
                result.claims.push(AtomicClaim {
                    source_text: entry.text.clone(),
                    category,
                    question: question.to_string(),
                    multi_marked: multi,
                });
            }
        }
    }
    Ok(result)
}

/// Parses an extractor reply into claims and warnings.
pub fn parse_semantic_claims(
    model_output: &str,
    source_response: &str,
) -> Result<SemanticExtractionResult, SemanticError> {
    claims_from_document(&parse_semantic_document(model_output)?, source_response)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_contains_instructions_and_input() {
        let p = build_semantic_extraction_prompt("A red bus parked by two trees.");
        assert!(p.contains("structure the output in JSON format"));
        assert!(p.contains("object_quantity"));
        assert!(p.contains("object_relation"));
        assert!(p.contains("**Input**:\"A red bus parked by two trees.\""));
        assert!(!p.contains(DESCRIPTION_SLOT));
        assert!(p.starts_with(&EXTRACTION_PROMPT_TEMPLATE[..60]));
    }

    #[test]
    fn empty_schema_in_fences() {
        let r = parse_semantic_claims("```json\n{\"others\":[]}\n```", "anything").unwrap();
        assert!(r.claims.is_empty());
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn prose_without_json_is_parse_error() {
        assert!(matches!(
            parse_semantic_claims("I cannot extract anything.", "x"),
            Err(SemanticError::Parse(_))
        ));
        assert!(matches!(parse_semantic_claims("{\"others\": [", "x"), Err(SemanticError::Parse(_))));
    }

    #[test]
    fn schema_violations() {
        let bad = [
            r#"{"colors": []}"#,
            r#"{"others": {"text": "a", "question": []}}"#,
            r#"{"others": [{"text": "a", "question": "Is it?"}]}"#,
            r#"{"others": [{"text": "a", "question": ["Is it?"], "extra": 1}]}"#,
            r#"{"others": [{"text": "", "question": ["Is it?"]}]}"#,
            r#"{"others": [{"text": "a", "question": ["It is."]}]}"#,
            r#"["not", "object"]"#,
        ];
        for b in bad {
            assert!(parse_semantic_claims(b, "a").is_err(), "{b}");
        }
        assert!(matches!(
            parse_semantic_claims(r#"["x"]"#, "a"),
            Err(SemanticError::Parse(_))
        ));
    }

    #[test]
    fn multi_outside_quantity_rejected() {
        let out = r#"{"object_relation": [{"text": "two cats", "question": ["<multi>Are there two cats?"]}]}"#;
        assert!(matches!(
            parse_semantic_claims(out, "two cats"),
            Err(SemanticError::MultiPlacement { .. })
        ));
    }

    #[test]
    fn multi_marker_stripped_and_flagged() {
        let out = r#"{"object_quantity": [{"text": "two cats", "question": ["<multi> Are there two cats?", "Is there a cat?"]}]}"#;
        let r = parse_semantic_claims(out, "I see two cats").unwrap();
        assert_eq!(r.claims[0].question, "Are there two cats?");
        assert!(r.claims[0].multi_marked);
        assert!(!r.claims[1].multi_marked);
        assert!(r.claims.iter().all(AtomicClaim::is_well_formed));
    }

    #[test]
    fn warnings() {
        let out = r#"{"object_attributes": [
            {"text": "a shiny red car", "question": ["Is the car red?", "Could the car be new?"]},
            {"text": "the car is red", "question": ["Is the car red?"]}]}"#;
        let r = parse_semantic_claims(out, "There is a shiny red car.").unwrap();
        assert_eq!(
            r.warnings,
            vec![
                SemanticWarning { claim_index: 1, kind: WarningKind::VagueLanguage },
                SemanticWarning { claim_index: 2, kind: WarningKind::SourceNotSubstring },
                SemanticWarning { claim_index: 2, kind: WarningKind::DuplicateQuestion },
            ]
        );
    }

    #[test]
    fn action_section_accepted() {
        let out = r#"{"object_action": [{"text": "a man runs", "question": ["Is the man running?"]}]}"#;
        let r = parse_semantic_claims(out, "a man runs").unwrap();
        assert_eq!(r.claims[0].category, ClaimCategory::Action);
    }

    #[test]
    fn document_serialisation_preserves_order() {
        let out = r#"{"reasoning": [{"text": "t", "question": ["A?"]}], "others": [], "object_relation": []}"#;
        let doc = parse_semantic_document(out).unwrap();
        let keys: Vec<_> = doc.sections.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["reasoning", "others", "object_relation"]);
        assert_eq!(parse_semantic_document(&doc.to_json()).unwrap(), doc);
    }

    #[test]
    fn actions_alias_maps_to_action() {
        let out = r#"{"actions": [{"text": "a man runs", "question": ["Is the man running?"]}]}"#;
        let r = parse_semantic_claims(out, "a man runs").unwrap();
        assert_eq!(r.claims[0].category, ClaimCategory::Action);
        assert!(document_from_claims(&r.claims).unwrap().to_json().contains("object_action"));
    }
}
