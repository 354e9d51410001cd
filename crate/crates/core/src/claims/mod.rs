//! Atomic claim extraction.
//!
//! Captions yield object-existence claims through a noun lexicon; longer
//! answers yield semantic claims through a structured extraction prompt whose
//! JSON reply is parsed here.

mod lexicon;
mod objects;
mod relaxed_json;
mod semantic;

use serde::{Deserialize, Serialize};

pub use lexicon::{LexiconError, ObjectLexicon, DEFAULT_PLURAL_EXCEPTIONS};
pub use objects::{
    extract_object_claims, extract_object_mentions, existence_claims, singularize,
    template_existence_question, ObjectMention,
};
pub use relaxed_json::{extract_json_object, repair_json};
pub use semantic::{
    build_semantic_extraction_prompt, claims_from_document, document_from_claims, parse_semantic_claims,
    parse_semantic_document, section_key, ClaimEntry,
    ExtractionDocument, SemanticError, SemanticExtractionResult, SemanticWarning, WarningKind,
    EXTRACTION_PROMPT_TEMPLATE, EXTRACTION_PROMPT_VERSION, HEDGE_WORDS, MULTI_MARKER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimCategory {
    Existence,
    Knowledge,
    Quantity,
    Relation,
    Attribute,
    Action,
    Reasoning,
    Other,
}

impl ClaimCategory {
    pub const ALL: [ClaimCategory; 8] = [
        ClaimCategory::Existence,
        ClaimCategory::Knowledge,
        ClaimCategory::Quantity,
        ClaimCategory::Relation,
        ClaimCategory::Attribute,
        ClaimCategory::Action,
        ClaimCategory::Reasoning,
        ClaimCategory::Other,
    ];
}

/// A minimal factual assertion and the yes/no question that checks it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicClaim {
    pub source_text: String,
    pub category: ClaimCategory,
    pub question: String,
    /// Set when the extractor marked the question with `<multi>`.
    #[serde(default)]
    pub multi_marked: bool,
}

impl AtomicClaim {
    pub fn is_well_formed(&self) -> bool {
        !self.source_text.is_empty()
            && self.question.trim_end().ends_with('?')
            && (!self.multi_marked || self.category == ClaimCategory::Quantity)
    }
}

/// Removes claims whose question repeats an earlier one, then keeps at most
/// `cap` claims. Returns the number of claims dropped.
pub fn dedup_and_cap(claims: &mut Vec<AtomicClaim>, cap: usize) -> usize {
    let before = claims.len();
    let mut seen = std::collections::HashSet::new();
    claims.retain(|c| seen.insert(c.question.trim().to_string()));
    claims.truncate(cap);
    before - claims.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claim(q: &str) -> AtomicClaim {
        AtomicClaim {
            source_text: "x".into(),
            category: ClaimCategory::Existence,
            question: q.into(),
            multi_marked: false,
        }
    }

    #[test]
    fn dedup_keeps_first_and_caps() {
        let mut v = vec![claim("A?"), claim("B?"), claim("A?"), claim("C?"), claim(" B?")];
        assert_eq!(dedup_and_cap(&mut v, 2), 3);
        let qs: Vec<_> = v.iter().map(|c| c.question.as_str()).collect();
        assert_eq!(qs, ["A?", "B?"]);
    }

    #[test]
    fn well_formedness() {
        assert!(claim("Is there a dog?").is_well_formed());
        assert!(!claim("Is there a dog").is_well_formed());
        let mut c = claim("Are there two women?");
        c.multi_marked = true;
        assert!(!c.is_well_formed());
        c.category = ClaimCategory::Quantity;
        assert!(c.is_well_formed());
    }
}
