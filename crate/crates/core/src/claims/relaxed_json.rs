//! Tolerant extraction of a JSON object from model output.
//!
//! Extraction models wrap JSON in code fences, add prose, drop commas between
//! adjacent array elements, and leave trailing commas. These helpers locate
//! the first balanced object and repair those two punctuation slips without
//! touching string contents.

/// Returns the first balanced `{...}` block in `text`, ignoring braces inside
/// string literals.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut start = None;
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in text.char_indices() {
        if in_str {
            match (escaped, ch) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' if start.is_some() => in_str = true,
            '{' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    return start.map(|s| &text[s..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops trailing commas before `}`/`]` and inserts missing commas between
/// adjacent values. String literals are copied verbatim.
pub fn repair_json(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    // Whether the last significant character ended a value.
    let mut after_value = false;
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '"' => {
                if after_value {
                    out.push(',');
                }
                out.push('"');
                let mut escaped = false;
                for c in chars.by_ref() {
                    out.push(c);
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == '"' {
                        break;
                    }
                }
                after_value = true;
            }
            '{' | '[' => {
                if after_value {
                    out.push(',');
                }
                out.push(ch);
                after_value = false;
            }
            '}' | ']' => {
                strip_trailing_comma(&mut out);
                out.push(ch);
                after_value = true;
            }
            ',' | ':' => {
                out.push(ch);
                after_value = false;
            }
            c if c.is_whitespace() => out.push(c),
            c => {
                // Bare literal (number, true, false, null).
                if after_value && !out.ends_with(|p: char| p.is_alphanumeric() || p == '.' || p == '-') {
                    out.push(',');
                }
                out.push(c);
                after_value = true;
            }
        }
    }
    out
}

fn strip_trailing_comma(out: &mut String) {
    let trimmed_len = out.trim_end().len();
    if out[..trimmed_len].ends_with(',') {
        let tail = out[trimmed_len..].to_string();
        out.truncate(trimmed_len - 1);
        out.push_str(&tail);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};

    fn parse(s: &str) -> Value {
        serde_json::from_str(&repair_json(s)).unwrap()
    }

    #[test]
    fn finds_object_in_prose_and_fences() {
        assert_eq!(extract_json_object("```json\n{\"a\": 1}\n```"), Some("{\"a\": 1}"));
        assert_eq!(extract_json_object("Here: {\"a\": {\"b\": \"}\"}} done"), Some("{\"a\": {\"b\": \"}\"}}"));
        assert_eq!(extract_json_object("no json"), None);
        assert_eq!(extract_json_object("{ unbalanced"), None);
    }

    #[test]
    fn repairs_missing_and_trailing_commas() {
        assert_eq!(parse(r#"{"q": ["a" "b"  "c",], }"#), json!({"q": ["a", "b", "c"]}));
        assert_eq!(parse(r#"[{"x": 1} {"x": 2},]"#), json!([{"x": 1}, {"x": 2}]));
        assert_eq!(parse("[1 2 -3.5 true null]"), json!([1, 2, -3.5, true, null]));
    }

    #[test]
    fn leaves_valid_json_and_strings_alone() {
        let s = r#"{"t": "a, ] \" b", "n": [1, 2]}"#;
        assert_eq!(repair_json(s), s);
    }
}
