use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Plural-looking nouns that must not be singularised.
pub const DEFAULT_PLURAL_EXCEPTIONS: &[&str] = &[
    "glasses", "scissors", "pants", "jeans", "shorts", "trousers", "binoculars", "tongs", "pliers",
    "goggles", "sunglasses", "bus", "grass", "glass", "dress", "cross", "class", "lens", "news",
    "species", "series", "skis",
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("invalid canonical object {0:?}: must be non-empty, lowercase and trimmed")]
    BadCanonical(String),
    #[error("synonym {alias:?} maps to unknown object {target:?}")]
    DanglingSynonym { alias: String, target: String },
    #[error("lexicon JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize, Serialize)]
struct LexiconFile {
    objects: Vec<String>,
    #[serde(default)]
    synonyms: BTreeMap<String, String>,
    #[serde(default)]
    plural_exceptions: Option<Vec<String>>,
}

/// Vocabulary of canonical object names with alias mapping.
///
/// File format: `{"objects": [...], "synonyms": {"alias": "canonical"},
/// "plural_exceptions": [...]}`; the last key is optional and replaces the
/// built-in exception list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectLexicon {
    canonical: BTreeSet<String>,
    synonyms: BTreeMap<String, String>,
    plural_exceptions: BTreeSet<String>,
    max_words: usize,
}

fn is_canonical_form(s: &str) -> bool {
    !s.is_empty() && s.trim() == s && s.to_lowercase() == s
}

impl ObjectLexicon {
    pub fn new<I, S>(objects: I, synonyms: impl IntoIterator<Item = (S, S)>) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_exceptions(
            objects,
            synonyms,
            DEFAULT_PLURAL_EXCEPTIONS.iter().map(|s| s.to_string()),
        )
    }

    pub fn with_exceptions<I, S>(
        objects: I,
        synonyms: impl IntoIterator<Item = (S, S)>,
        exceptions: impl IntoIterator<Item = String>,
    ) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let canonical: BTreeSet<String> = objects.into_iter().map(Into::into).collect();
        if let Some(bad) = canonical.iter().find(|o| !is_canonical_form(o)) {
            return Err(LexiconError::BadCanonical(bad.clone()));
        }
        let mut map = BTreeMap::new();
        for (alias, target) in synonyms {
            let (alias, target) = (alias.into().trim().to_lowercase(), target.into());
            if !canonical.contains(&target) {
                return Err(LexiconError::DanglingSynonym { alias, target });
            }
            map.insert(alias, target);
        }
        let max_words = canonical
            .iter()
            .chain(map.keys())
            .map(|s| s.split_whitespace().count())
            .max()
            .unwrap_or(1);
        Ok(Self {
            canonical,
            synonyms: map,
            plural_exceptions: exceptions.into_iter().map(|s| s.to_lowercase()).collect(),
            max_words,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = serde_json::from_str(text)?;
        let exceptions = file
            .plural_exceptions
            .unwrap_or_else(|| DEFAULT_PLURAL_EXCEPTIONS.iter().map(|s| s.to_string()).collect());
        Self::with_exceptions(file.objects, file.synonyms, exceptions)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The bundled COCO-category lexicon.
    pub fn coco() -> Self {
        Self::from_json(include_str!("../../resources/coco_lexicon.json")).expect("bundled lexicon is valid")
    }

    pub fn to_json(&self) -> String {
        let file = LexiconFile {
            objects: self.canonical.iter().cloned().collect(),
            synonyms: self.synonyms.clone(),
            plural_exceptions: Some(self.plural_exceptions.iter().cloned().collect()),
        };
        serde_json::to_string_pretty(&file).expect("lexicon serialises")
    }

    pub fn canonical_objects(&self) -> &BTreeSet<String> {
        &self.canonical
    }

    pub fn contains(&self, object: &str) -> bool {
        self.canonical.contains(object)
    }

    pub fn is_plural_exception(&self, word: &str) -> bool {
        self.plural_exceptions.contains(word)
    }

    /// Longest phrase (in words) that can match.
    pub fn max_words(&self) -> usize {
        self.max_words
    }

    /// Resolves a lowercase phrase to its canonical object.
    pub fn resolve(&self, phrase: &str) -> Option<&str> {
        if let Some(c) = self.canonical.get(phrase) {
            return Some(c.as_str());
        }
        self.synonyms.get(phrase).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_canonical_objects() {
        assert!(matches!(
            ObjectLexicon::new(["Dog"], Vec::<(&str, &str)>::new()),
            Err(LexiconError::BadCanonical(_))
        ));
        assert!(ObjectLexicon::new([" dog"], Vec::<(&str, &str)>::new()).is_err());
        assert!(ObjectLexicon::new([""], Vec::<(&str, &str)>::new()).is_err());
    }

    #[test]
    fn rejects_dangling_synonym() {
        let err = ObjectLexicon::new(["dog"], [("puppy", "cat")]).unwrap_err();
        assert!(matches!(err, LexiconError::DanglingSynonym { .. }));
    }

    #[test]
    fn json_roundtrip() {
        let lex = ObjectLexicon::from_json(
            r#"{"objects": ["dog", "potted plant"], "synonyms": {"Puppy": "dog"}}"#,
        )
        .unwrap();
        assert_eq!(lex.resolve("puppy"), Some("dog"));
        assert_eq!(lex.max_words(), 2);
        assert!(lex.is_plural_exception("glasses"));
        let again = ObjectLexicon::from_json(&lex.to_json()).unwrap();
        assert_eq!(lex, again);
    }

    #[test]
    fn bundled_lexicon_loads() {
        let lex = ObjectLexicon::coco();
        assert!(lex.contains("potted plant"));
        assert!(lex.contains("knife"));
        assert_eq!(lex.resolve("man"), Some("person"));
    }
}
