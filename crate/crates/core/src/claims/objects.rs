//! Lexicon-based object-existence claims for captions.

use super::{AtomicClaim, ClaimCategory, ObjectLexicon};

/// One lexicon hit inside a text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectMention {
    pub object: String,
    /// Verbatim span from the input.
    pub span: String,
    pub start: usize,
}

const IRREGULAR: &[(&str, &str)] = &[
    ("people", "person"),
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("teeth", "tooth"),
    ("feet", "foot"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("shelves", "shelf"),
    ("loaves", "loaf"),
    ("wolves", "wolf"),
    ("halves", "half"),
    ("scarves", "scarf"),
    ("calves", "calf"),
    ("sheep", "sheep"),
];

/// Candidate singular forms of a lowercase word, most specific first.
///
/// Words on the lexicon's exception list are never changed.
pub fn singularize(word: &str, lexicon: &ObjectLexicon) -> Vec<String> {
    if lexicon.is_plural_exception(word) {
        return Vec::new();
    }
    if let Some((_, s)) = IRREGULAR.iter().find(|(p, _)| *p == word) {
        return vec![(*s).to_string()];
    }
    let mut out = Vec::new();
    if let Some(stem) = word.strip_suffix("ies").filter(|s| s.len() >= 2) {
        out.push(format!("{stem}y"));
    }
    if let Some(stem) = word.strip_suffix("es").filter(|s| !s.is_empty()) {
        out.push(stem.to_string());
    }
    if let Some(stem) = word.strip_suffix('s') {
        if !stem.is_empty() && !stem.ends_with('s') && !word.ends_with("us") && !word.ends_with("is") {
            out.push(stem.to_string());
        }
    }
    out
}

struct Token<'a> {
    lower: String,
    raw: &'a str,
    start: usize,
    /// Only whitespace separates this token from the next one.
    joins_next: bool,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens: Vec<Token<'_>> = Vec::new();
    let mut start = None;
    let mut gap_is_space = true;
    for (i, ch) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        let alpha = i < text.len() && ch.is_alphabetic();
        match (alpha, start) {
            (true, None) => {
                if let Some(prev) = tokens.last_mut() {
                    prev.joins_next = gap_is_space;
                }
                start = Some(i);
            }
            (false, Some(s)) => {
                let raw = &text[s..i];
                tokens.push(Token { lower: raw.to_lowercase(), raw, start: s, joins_next: false });
                start = None;
                gap_is_space = ch.is_whitespace();
            }
            (false, None) => gap_is_space &= ch.is_whitespace(),
            (true, Some(_)) => {}
        }
    }
    tokens
}

fn lookup<'l>(phrase_prefix: &str, last: &str, lexicon: &'l ObjectLexicon) -> Option<&'l str> {
    let join = |w: &str| {
        if phrase_prefix.is_empty() {
            w.to_string()
        } else {
            format!("{phrase_prefix} {w}")
        }
    };
    if let Some(hit) = lexicon.resolve(&join(last)) {
        return Some(hit);
    }
    singularize(last, lexicon).into_iter().find_map(|s| lexicon.resolve(&join(&s)))
}

/// Every lexicon hit in `text`, in order of appearance.
///
/// Text is split on non-alphabetic characters and lowercased. Bigrams (two
/// words separated only by whitespace) take precedence over unigrams; the
/// last word of a phrase may be plural.
pub fn extract_object_mentions(text: &str, lexicon: &ObjectLexicon) -> Vec<ObjectMention> {
    let tokens = tokenize(text);
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        if lexicon.max_words() >= 2 && tok.joins_next && i + 1 < tokens.len() {
            let next = &tokens[i + 1];
            if let Some(obj) = lookup(&tok.lower, &next.lower, lexicon) {
                let end = next.start + next.raw.len();
                mentions.push(ObjectMention {
                    object: obj.to_string(),
                    span: text[tok.start..end].to_string(),
                    start: tok.start,
                });
                i += 2;
                continue;
            }
        }
        if let Some(obj) = lookup("", &tok.lower, lexicon) {
            mentions.push(ObjectMention { object: obj.to_string(), span: tok.raw.to_string(), start: tok.start });
        }
        i += 1;
    }
    mentions
}

/// Distinct canonical objects mentioned in `text`, in first-occurrence order.
pub fn extract_object_claims(text: &str, lexicon: &ObjectLexicon) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in extract_object_mentions(text, lexicon) {
        if !out.contains(&m.object) {
            out.push(m.object);
        }
    }
    out
}

/// `"Is there a/an {object} in the image?"`
pub fn template_existence_question(object: &str) -> String {
    assert!(!object.is_empty(), "object name must be non-empty");
    let article = match object.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    };
    format!("Is there {article} {object} in the image?")
}

/// Existence claims for every distinct object in `text`; the source text of
/// each claim is its first verbatim mention.
pub fn existence_claims(text: &str, lexicon: &ObjectLexicon) -> Vec<AtomicClaim> {
    let mut claims: Vec<AtomicClaim> = Vec::new();
    let mut seen = Vec::new();
    for m in extract_object_mentions(text, lexicon) {
        if seen.contains(&m.object) {
            continue;
        }
        claims.push(AtomicClaim {
            source_text: m.span,
            category: ClaimCategory::Existence,
            question: template_existence_question(&m.object),
            multi_marked: false,
        });
        seen.push(m.object);
    }
    claims
}
