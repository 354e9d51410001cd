//! OpenAI-compatible chat-completion client.
//!
//! Request body:
//!
//! ```json
//! {"model": "<model_id>",
//!  "messages": [{"role": "user", "content": [
//!      {"type": "text", "text": "..."},
//!      {"type": "image_url", "image_url": {"url": "<url or data URI>"}}]},
//!    {"role": "assistant", "content": "..."}],
//!  "temperature": 0.7, "top_p": 1.0, "max_tokens": 512, "seed": 3}
//! ```
//!
//! The image is attached to the first user turn. Local paths are inlined as
//! base64 `data:` URIs. The reply text is `choices[0].message.content`.

use std::path::Path;
use std::time::Duration;

use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, GatewayError, ImageRef, ModelEndpointConfig, Role};

pub struct HttpBackend {
    client: Client,
    url: String,
    model_id: String,
    endpoint_id: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &ModelEndpointConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            Some(std::env::var(&config.api_key_env).map_err(|_| {
                GatewayError::Config(format!("environment variable {} is not set", config.api_key_env))
            })?)
        };
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model_id: config.model_id.clone(),
            endpoint_id: config.endpoint_id(),
            api_key,
        })
    }
}

fn image_url(image: &ImageRef) -> Result<String, BackendError> {
    let s = image.as_str();
    if s.starts_with("http://") || s.starts_with("https://") || s.starts_with("data:") {
        return Ok(s.to_owned());
    }
    let path = Path::new(s);
    let bytes = std::fs::read(path)
        .map_err(|e| BackendError::Fatal(format!("cannot read image {s}: {e}")))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    };
    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{b64}"))
}

/// Builds the JSON body for `request`.
pub(crate) fn request_body(model_id: &str, request: &ChatRequest) -> Result<Value, BackendError> {
    let mut image = request.image.as_ref().map(image_url).transpose()?;
    let messages: Vec<Value> = request
        .turns
        .iter()
        .map(|turn| {
            let role = match turn.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            match (turn.role, image.take()) {
                (Role::User, Some(url)) => json!({
                    "role": role,
                    "content": [
                        {"type": "text", "text": turn.text},
                        {"type": "image_url", "image_url": {"url": url}}
                    ]
                }),
                (_, pending) => {
                    image = pending;
                    json!({"role": role, "content": turn.text})
                }
            }
        })
        .collect();
    let s = &request.sampling;
    let mut body = json!({
        "model": model_id,
        "messages": messages,
        "temperature": s.temperature,
        "top_p": s.top_p,
        "max_tokens": s.max_tokens,
    });
    if let Some(seed) = s.seed {
        body["seed"] = json!(seed);
    }
    Ok(body)
}

/// Extracts the reply text from a response body.
pub(crate) fn response_text(body: &Value) -> Result<String, BackendError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        // Some servers return content parts even for text replies.
        Value::Array(parts) => {
            let text: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if text.is_empty() {
                Err(BackendError::Malformed("content array has no text parts".into()))
            } else {
                Ok(text.concat())
            }
        }
        other => Err(BackendError::Malformed(format!("unexpected content type: {other}"))),
    }
}

impl ChatBackend for HttpBackend {
    fn endpoint_id(&self) -> String {
        self.endpoint_id.clone()
    }

    fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = request_body(&self.model_id, request)?;
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::RateLimited(status.to_string()));
        }
        if status.is_server_error() || status == StatusCode::REQUEST_TIMEOUT {
            return Err(BackendError::Transient(status.to_string()));
        }
        let text = resp.text().map_err(|e| BackendError::Transient(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("{status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Malformed(format!("invalid JSON body: {e}")))?;
        response_text(&value)
    }
}
