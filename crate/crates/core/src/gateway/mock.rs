//! Deterministic scripted model for offline runs and tests.
//!
//! Script file (JSON):
//!
//! ```json
//! {
//!   "default": "Yes",
//!   "fingerprints": {"<request fingerprint>": "reply"},
//!   "entries": [
//!     {"image": "img1", "prompt": "Describe the image in detail.", "seed": 0, "response": "A dog."},
//!     {"image": "img1", "prompt": "Is there a knife in the image?", "response": "No"},
//!     {"prompt_contains": "fire hydrant", "response": "{\"others\": []}"}
//!   ]
//! }
//! ```
//!
//! A request first looks up its exact [`ChatRequest::fingerprint`]. Otherwise
//! the matching entry with the most constrained fields wins (earlier entries
//! break ties), and finally `default` is returned. `prompt` and
//! `prompt_contains` are matched against the last user turn.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{BackendError, ChatBackend, ChatRequest};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub response: String,
}

impl MockEntry {
    fn specificity(&self, request: &ChatRequest) -> Option<usize> {
        let mut score = 0;
        if let Some(image) = &self.image {
            if request.image.as_ref().map(|i| i.as_str()) != Some(image.as_str()) {
                return None;
            }
            score += 1;
        }
        let last = request.last_user_text().unwrap_or_default();
        if let Some(prompt) = &self.prompt {
            if last != prompt {
                return None;
            }
            score += 2;
        }
        if let Some(fragment) = &self.prompt_contains {
            if !last.contains(fragment.as_str()) {
                return None;
            }
            score += 1;
        }
        if let Some(seed) = self.seed {
            if request.sampling.seed != Some(seed) {
                return None;
            }
            score += 1;
        }
        Some(score)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub fingerprints: BTreeMap<String, String>,
    #[serde(default)]
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn reply(&self, request: &ChatRequest) -> Option<&str> {
        if let Some(text) = self.fingerprints.get(&request.fingerprint()) {
            return Some(text);
        }
        let mut best: Option<(usize, &MockEntry)> = None;
        for entry in &self.entries {
            if let Some(score) = entry.specificity(request) {
                if best.is_none_or(|(s, _)| score > s) {
                    best = Some((score, entry));
                }
            }
        }
        best.map(|(_, e)| e.response.as_str()).or(self.default.as_deref())
    }
}

/// Backend that answers from a [`MockScript`]. Counts every call.
#[derive(Debug)]
pub struct MockModel {
    script: MockScript,
    name: String,
    calls: AtomicU64,
}

impl MockModel {
    pub fn new(script: MockScript) -> Self {
        Self { script, name: "mock".into(), calls: AtomicU64::new(0) }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatBackend for MockModel {
    fn endpoint_id(&self) -> String {
        format!("mock#{}", self.name)
    }

    fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.script
            .reply(request)
            .map(str::to_owned)
            .ok_or_else(|| BackendError::Fatal("mock script has no reply for request".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, ImageRef, RetryPolicy, SamplingParams, Turn};

    fn caption_request(seed: u64) -> ChatRequest {
        ChatRequest::with_image(
            ImageRef::new("img1"),
            vec![Turn::user("Describe the image in detail.")],
            SamplingParams { seed: Some(seed), ..SamplingParams::default() },
        )
    }

    #[test]
    fn scripted_fingerprint_reply() {
        let req = caption_request(0);
        let mut script = MockScript::default();
        script.fingerprints.insert(req.fingerprint(), "A dog.".into());
        let g = Gateway::new(MockModel::new(script), RetryPolicy::no_retries(), 1);
        assert_eq!(g.complete(&req).unwrap(), "A dog.");
    }

    #[test]
    fn identical_requests_identical_output() {
        let script = MockScript::from_json(
            r#"{"default": "Yes", "entries": [{"image": "img1", "seed": 7, "response": "A cat on a mat."}]}"#,
        )
        .unwrap();
        let g = Gateway::new(MockModel::new(script), RetryPolicy::no_retries(), 1);
        let a = g.complete(&caption_request(7)).unwrap();
        let b = g.complete(&caption_request(7)).unwrap();
        assert_eq!(a.as_bytes(), b.as_bytes());
        assert_eq!(a, "A cat on a mat.");
        assert_eq!(g.complete(&caption_request(8)).unwrap(), "Yes");
    }

    #[test]
    fn binary_probe_scripted_answer() {
        let script = MockScript::from_json(
            r#"{"default": "Yes", "entries": [
                {"image": "img1", "prompt": "Is there a knife in the image?", "response": "No"}]}"#,
        )
        .unwrap();
        let g = Gateway::new(MockModel::new(script), RetryPolicy::no_retries(), 1);
        let img = ImageRef::new("img1");
        assert_eq!(g.complete_binary(&img, "Is there a knife in the image?").unwrap(), "No");
        assert_eq!(g.complete_binary(&img, "Is there a fork in the image?").unwrap(), "Yes");
    }

    #[test]
    fn most_specific_entry_wins() {
        let script = MockScript::from_json(
            r#"{"entries": [
                {"prompt": "Describe the image in detail.", "response": "generic"},
                {"image": "img1", "prompt": "Describe the image in detail.", "seed": 3, "response": "specific"}]}"#,
        )
        .unwrap();
        assert_eq!(script.reply(&caption_request(3)), Some("specific"));
        assert_eq!(script.reply(&caption_request(4)), Some("generic"));
    }

    #[test]
    fn missing_reply_without_default_is_error() {
        let m = MockModel::new(MockScript::default());
        assert!(matches!(m.send(&caption_request(0)), Err(BackendError::Fatal(_))));
        assert_eq!(m.calls(), 1);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(MockScript::from_json(r#"{"entries": [{"response": "x", "temp": 1}]}"#).is_err());
    }
}
