//! Chat-completions transport and provider configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use persuade_core::captioner::{ChatRequest, ChatResponse, ProtocolConfig, RefusalPolicy, RetryPolicy, Transport, TransportError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4-vision-preview";
pub const DEFAULT_CREDENTIAL_ENV: &str = "OPENAI_API_KEY";

/// Provider settings. Holds the *name* of the credential variable, never
/// its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub credential_env: String,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub timeout_secs: u64,
    /// Shared request budget; 0 disables the limiter.
    pub requests_per_minute: f64,
    pub refusal_patterns: Option<Vec<String>>,
    pub retry: RetryPolicy,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            model: DEFAULT_MODEL.into(),
            credential_env: DEFAULT_CREDENTIAL_ENV.into(),
            temperature: None,
            max_tokens: Some(512),
            timeout_secs: 120,
            requests_per_minute: 60.0,
            refusal_patterns: None,
            retry: RetryPolicy::default(),
        }
    }
}

/// Command-line overrides; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct ProviderOverrides {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub credential_env: Option<String>,
    pub temperature: Option<f64>,
    pub requests_per_minute: Option<f64>,
}

impl ProviderConfig {
    /// Resolve with precedence flags > config file > environment > defaults.
    /// Environment: `PERSUADE_ENDPOINT`, `PERSUADE_MODEL`, `PERSUADE_CREDENTIAL_ENV`.
    pub fn resolve(
        file: Option<&str>,
        flags: &ProviderOverrides,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, toml::de::Error> {
        let mut cfg = Self::default();
        if let Some(v) = env("PERSUADE_ENDPOINT") {
            cfg.endpoint = v;
        }
        if let Some(v) = env("PERSUADE_MODEL") {
            cfg.model = v;
        }
        if let Some(v) = env("PERSUADE_CREDENTIAL_ENV") {
            cfg.credential_env = v;
        }
        if let Some(text) = file {
            let table: toml::Table = toml::from_str(text)?;
            let mut merged = toml::Table::try_from(&cfg).expect("config serializes to a table");
            merged.extend(table);
            cfg = merged.try_into()?;
        }
        if let Some(v) = &flags.endpoint {
            cfg.endpoint = v.clone();
        }
        if let Some(v) = &flags.model {
            cfg.model = v.clone();
        }
        if let Some(v) = &flags.credential_env {
            cfg.credential_env = v.clone();
        }
        if flags.temperature.is_some() {
            cfg.temperature = flags.temperature;
        }
        if let Some(r) = flags.requests_per_minute {
            cfg.requests_per_minute = r;
        }
        Ok(cfg)
    }

    pub fn protocol(&self) -> ProtocolConfig {
        let mut refusal = RefusalPolicy::default();
        if let Some(p) = &self.refusal_patterns {
            refusal.patterns = p.clone();
        }
        ProtocolConfig {
            model: self.model.clone(),
            temperature: self.temperature,
            refusal,
            retry: self.retry,
        }
    }
}

/// A credential value that never prints.
#[derive(Clone)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: String) -> Self {
        Self(value)
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

#[derive(Debug)]
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    credential: Option<Secret>,
    max_tokens: Option<u32>,
    image_root: PathBuf,
}

impl HttpTransport {
    /// Local image paths are resolved against `image_root`.
    pub fn new(cfg: &ProviderConfig, credential: Option<Secret>, image_root: &Path) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: cfg.endpoint.clone(),
            credential,
            max_tokens: cfg.max_tokens,
            image_root: image_root.to_path_buf(),
        }
    }

    fn image_url(&self, image: &str) -> Result<String, TransportError> {
        if ["http://", "https://", "data:"].iter().any(|p| image.starts_with(p)) {
            return Ok(image.to_string());
        }
        let path = self.image_root.join(image);
        let bytes = std::fs::read(&path)
            .map_err(|e| TransportError::fatal(format!("cannot read image {}: {e}", path.display())))?;
        let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => "image/png",
            Some("jpg" | "jpeg") => "image/jpeg",
            Some("gif") => "image/gif",
            Some("webp") => "image/webp",
            _ => "application/octet-stream",
        };
        Ok(format!(
            "data:{mime};base64,{}",
            base64::engine::general_purpose::STANDARD.encode(bytes)
        ))
    }
}

/// Request body: one user message with a text part and an image part.
pub fn request_body(req: &ChatRequest, image_url: &str, max_tokens: Option<u32>) -> Value {
    let mut body = json!({
        "model": req.model,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": req.prompt},
                {"type": "image_url", "image_url": {"url": image_url}},
            ],
        }],
    });
    if let Some(t) = req.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(m) = max_tokens {
        body["max_tokens"] = json!(m);
    }
    body
}

/// The body with inline image payloads shortened, for debug logs.
pub fn redacted(body: &Value) -> Value {
    let mut body = body.clone();
    if let Some(parts) = body.pointer_mut("/messages/0/content").and_then(Value::as_array_mut) {
        for part in parts {
            if let Some(url) = part.pointer_mut("/image_url/url") {
                if url.as_str().is_some_and(|u| u.starts_with("data:")) {
                    *url = json!("data:<redacted>");
                }
            }
        }
    }
    body
}

/// First choice's content and finish reason. An explicit `refusal` field is
/// reported as a content-filter finish.
pub fn parse_response(text: &str) -> Result<ChatResponse, TransportError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| TransportError::retryable(format!("malformed response body: {e}")))?;
    let choice = v
        .pointer("/choices/0")
        .ok_or_else(|| TransportError::retryable("response has no choices"))?;
    if choice.pointer("/message/refusal").is_some_and(|r| !r.is_null()) {
        return Ok(ChatResponse {
            content: None,
            finish_reason: Some("content_filter".into()),
        });
    }
    Ok(ChatResponse {
        content: choice.pointer("/message/content").and_then(Value::as_str).map(String::from),
        finish_reason: choice.get("finish_reason").and_then(Value::as_str).map(String::from),
    })
}

impl Transport for HttpTransport {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let body = request_body(req, &self.image_url(&req.image)?, self.max_tokens);
        log::debug!("POST {} {}", self.endpoint, redacted(&body));
        let mut call = self.agent.post(&self.endpoint);
        if let Some(Secret(key)) = &self.credential {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = call
            .send_json(&body)
            .map_err(|e| TransportError::retryable(format!("request failed: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| TransportError::retryable(format!("reading response: {e}")))?;
        log::debug!("status {status}: {text}");
        match status {
            200..=299 => parse_response(&text),
            408 | 409 | 429 | 500..=599 => Err(TransportError::retryable(format!("HTTP {status}"))),
            // some providers report moderation blocks as 400 with a policy code
            400 if text.contains("content_policy") || text.contains("content_filter") => Ok(ChatResponse {
                content: None,
                finish_reason: Some("content_filter".into()),
            }),
            _ => Err(TransportError::fatal(format!("HTTP {status}: {}", truncate(&text, 300)))),
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
