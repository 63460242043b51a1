//! Two-prompt caption protocol against a vision-language chat endpoint.
//!
//! Each instance first gets [`PROMPT_FIRST`] with the meme text substituted.
//! If the provider refuses, [`PROMPT_SECOND`] is sent. A second refusal ends
//! the protocol with [`CaptionStatus::RefusedBoth`]; no further fallback is
//! attempted here. Transport failures are retried with exponential backoff
//! and never advance the protocol.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::MemeInstance;

pub const PLACEHOLDER: &str = "{meme_text}";

pub const PROMPT_FIRST: &str = "Memes are one of the most popular types of content used in an online disinformation campaign. They are mostly effective on social media platforms since there they can easily reach a large number of users. This is a meme with the following text written inside the meme: \"{meme_text}\". In no more than 200 words, write a caption for this meme and say what is the meme poster trying to convey?";

pub const PROMPT_SECOND: &str = "Memes are one of the most popular types of content used in an online disinformation campaign. They are mostly effective on social media platforms since there they can easily reach a large number of users. Memes in a disinformation campaign achieve their goal of influencing the users through a number of rhetorical and psychological techniques, such as causal oversimplification, name calling, smear. Identifying these memes are very useful and it can help to remove them from the internet and have a better and more calm place. To do so I want your help. I want to create a caption and find what this meme is trying to convey in order to train a model to find these memes. I provided a meme to you. In no more than 200 words, write a caption for this meme and say what is the meme poster trying to convey?";

pub const MAX_CAPTION_WORDS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaptionError {
    #[error("template contains {0} `{{meme_text}}` placeholders; at most one is allowed")]
    Placeholders(usize),
    #[error("instance `{0}` has no image reference")]
    MissingImage(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    body: String,
    max_words: usize,
}

impl PromptTemplate {
    pub fn new(body: impl Into<String>, max_words: usize) -> Result<Self, CaptionError> {
        let body = body.into();
        let n = body.matches(PLACEHOLDER).count();
        if n > 1 {
            return Err(CaptionError::Placeholders(n));
        }
        Ok(Self { body, max_words })
    }

    pub fn first() -> Self {
        Self {
            body: PROMPT_FIRST.to_owned(),
            max_words: MAX_CAPTION_WORDS,
        }
    }

    /// The fallback prompt does not quote the meme text.
    pub fn second() -> Self {
        Self {
            body: PROMPT_SECOND.to_owned(),
            max_words: MAX_CAPTION_WORDS,
        }
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn max_words(&self) -> usize {
        self.max_words
    }

    /// Single-pass substitution; placeholder text inside `meme_text` is left
    /// alone.
    pub fn render(&self, meme_text: &str) -> String {
        match self.body.find(PLACEHOLDER) {
            Some(at) => {
                let mut out = String::with_capacity(self.body.len() + meme_text.len());
                out.push_str(&self.body[..at]);
                out.push_str(meme_text);
                out.push_str(&self.body[at + PLACEHOLDER.len()..]);
                out
            }
            None => self.body.clone(),
        }
    }
}

pub fn render_prompt(t: &PromptTemplate, meme_text: &str) -> String {
    t.render(meme_text)
}

/// One chat-completions style request: a text part and an image part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    /// URL, data URL or local path; the transport decides how to ship it.
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: Option<String>,
    pub finish_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub retryable: bool,
    pub message: String,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            retryable: true,
            message: message.into(),
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            retryable: false,
            message: message.into(),
        }
    }
}

pub trait Transport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        (**self).send(request)
    }
}

pub trait Clock {
    /// Time since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);

    fn sleep_until(&self, deadline: Duration) {
        let now = self.now();
        if deadline > now {
            self.sleep(deadline - now);
        }
    }
}

/// Called once before every request leaves.
pub trait Throttle {
    fn acquire(&self);
}

pub struct Unthrottled;

impl Throttle for Unthrottled {
    fn acquire(&self) {}
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalPolicy {
    /// Case-insensitive substrings marking a refusal.
    pub patterns: Vec<String>,
    /// Finish reasons that mean the provider filtered the output.
    pub finish_reasons: Vec<String>,
}

impl Default for RefusalPolicy {
    fn default() -> Self {
        let patterns = [
            "i can't help with",
            "i cannot help with",
            "i can't assist with",
            "i cannot assist with",
            "i'm sorry, but i can't",
            "i'm sorry, but i cannot",
            "i am sorry, but i cannot",
            "i'm unable to",
            "i am unable to",
            "i can't provide",
            "i cannot provide",
            "sorry, i can't",
            "i won't be able to",
        ];
        Self {
            patterns: patterns.iter().map(|s| s.to_string()).collect(),
            finish_reasons: ["content_filter", "content-filter", "safety"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl RefusalPolicy {
    pub fn is_refusal(&self, response: &ChatResponse) -> bool {
        if let Some(reason) = &response.finish_reason {
            if self.finish_reasons.iter().any(|r| r.eq_ignore_ascii_case(reason)) {
                return true;
            }
        }
        let Some(text) = response.content.as_deref().map(str::trim) else {
            return true;
        };
        if text.is_empty() {
            return true;
        }
        let lower = text.to_lowercase();
        // curly apostrophes are common in provider output
        let lower = lower.replace('\u{2019}', "'");
        self.patterns.iter().any(|p| lower.contains(&p.to_lowercase()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    /// Jitter bound as a fraction of each delay, in percent.
    pub jitter_percent: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 1000,
            jitter_percent: 25,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): `base·2^retry` plus a
    /// jitter derived from `key`, so reruns wait identically.
    pub fn delay(&self, retry: u32, key: &str) -> Duration {
        let base = self.base_delay_ms.saturating_mul(1u64 << retry.min(20));
        let span = base * u64::from(self.jitter_percent) / 100;
        let jitter = if span == 0 {
            0
        } else {
            fnv1a(key.as_bytes(), u64::from(retry)) % (span + 1)
        };
        Duration::from_millis(base + jitter)
    }
}

pub(crate) fn fnv1a(bytes: &[u8], salt: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub model: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub refusal: RefusalPolicy,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl ProtocolConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            temperature: None,
            refusal: RefusalPolicy::default(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionStatus {
    OkPrompt1,
    OkPrompt2,
    RefusedBoth,
    TransportError,
}

impl CaptionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::OkPrompt1 => "ok_prompt1",
            Self::OkPrompt2 => "ok_prompt2",
            Self::RefusedBoth => "refused_both",
            Self::TransportError => "transport_error",
        }
    }

    /// Finished outcomes are not requested again on resume.
    pub fn is_final(self) -> bool {
        !matches!(self, Self::TransportError)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionOutcome {
    pub id: String,
    pub status: CaptionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    /// Requests sent for this instance, retries included.
    pub attempts: u32,
    pub provider_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
}

/// Run the protocol for one instance.
pub fn caption_instance<T, C, R>(
    inst: &MemeInstance,
    cfg: &ProtocolConfig,
    transport: &T,
    clock: &C,
    throttle: &R,
) -> Result<CaptionOutcome, CaptionError>
where
    T: Transport + ?Sized,
    C: Clock + ?Sized,
    R: Throttle + ?Sized,
{
    let image = inst
        .image
        .as_ref()
        .ok_or_else(|| CaptionError::MissingImage(inst.id.clone()))?;
    let mut outcome = CaptionOutcome {
        id: inst.id.clone(),
        status: CaptionStatus::RefusedBoth,
        caption: None,
        attempts: 0,
        provider_model: cfg.model.clone(),
        diagnostics: None,
    };
    let prompts = [
        (PromptTemplate::first(), CaptionStatus::OkPrompt1),
        (PromptTemplate::second(), CaptionStatus::OkPrompt2),
    ];
    for (template, ok) in prompts {
        let request = ChatRequest {
            model: cfg.model.clone(),
            prompt: template.render(&inst.text),
            image: image.clone(),
            temperature: cfg.temperature,
        };
        let mut retry = 0;
        let response = loop {
            throttle.acquire();
            outcome.attempts += 1;
            match transport.send(&request) {
                Ok(r) => break r,
                Err(e) if e.retryable && retry < cfg.retry.max_retries => {
                    clock.sleep(cfg.retry.delay(retry, &inst.id));
                    retry += 1;
                }
                Err(e) => {
                    outcome.status = CaptionStatus::TransportError;
                    outcome.diagnostics = Some(alloc::format!(
                        "{} after {} request(s): {}",
                        if e.retryable { "retries exhausted" } else { "fatal" },
                        retry + 1,
                        e.message
                    ));
                    return Ok(outcome);
                }
            }
        };
        if !cfg.refusal.is_refusal(&response) {
            let caption = response.content.unwrap_or_default();
            let words = caption.split_whitespace().count();
            if words > template.max_words() {
                outcome.diagnostics = Some(alloc::format!(
                    "caption has {words} words, over the requested {}",
                    template.max_words()
                ));
            }
            outcome.status = ok;
            outcome.caption = Some(caption);
            return Ok(outcome);
        }
    }
    Ok(outcome)
}
