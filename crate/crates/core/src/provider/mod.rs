//! Chat-completion backends.
//!
//! [`Provider`] is the single entry point used by the measurement and
//! evaluation code. Three implementations exist: [`OpenAiProvider`] for any
//! OpenAI-compatible HTTP endpoint, [`MockProvider`] for offline scripted or
//! parametric answers, and [`CachedProvider`] which wraps either one with a
//! content-addressed disk cache.

mod cache;
mod mock;
mod openai;
mod retry;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Setting;

pub use cache::{CacheKey, CachedProvider, ResponseCache};
pub use mock::{mock_behavior, MockFixture, MockProfile, MockProvider, REFUSAL_TEXT};
pub use openai::{OpenAiConfig, OpenAiProvider, DEFAULT_API_KEY_ENV};
pub use retry::{retry_with_backoff, RetryPolicy};

/// Token budget for classification answers.
pub const DEFAULT_MAX_TOKENS: u32 = 20;
/// Temperature for every sampled generation.
pub const SAMPLING_TEMPERATURE: f64 = 0.7;
/// Temperature 0 selects greedy decoding.
pub const GREEDY: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Why a request was issued. Never sent over the wire; it keys the cache and
/// lets the mock answer without parsing prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Purpose {
    /// One of the three label-injection probes.
    Probe { setting: Setting },
    /// A temperature sample of the plain prompt.
    Sample { index: u32 },
    /// Verification of a proposed answer.
    Verify { proposed: String, index: u32 },
    /// An in-context classification query.
    Icl,
    /// Token-logprob scoring of the instance text.
    Perplexity,
}

impl Purpose {
    /// Fixture key used by scripted mock answers.
    pub fn fixture_key(&self) -> &'static str {
        match self {
            Purpose::Probe { setting } => setting.name(),
            Purpose::Sample { .. } => "sample",
            Purpose::Verify { .. } => "verify",
            Purpose::Icl => "icl",
            Purpose::Perplexity => "perplexity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTag {
    pub instance_id: String,
    pub purpose: Purpose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub logprobs_wanted: bool,
    pub seed_hint: Option<u64>,
    pub tag: Option<RequestTag>,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: GREEDY,
            max_tokens: DEFAULT_MAX_TOKENS,
            logprobs_wanted: false,
            seed_hint: None,
            tag: None,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn with_logprobs(mut self, wanted: bool) -> Self {
        self.logprobs_wanted = wanted;
        self
    }

    pub fn seed_hint(mut self, seed: Option<u64>) -> Self {
        self.seed_hint = seed;
        self
    }

    pub fn tag(mut self, instance_id: impl Into<String>, purpose: Purpose) -> Self {
        self.tag = Some(RequestTag {
            instance_id: instance_id.into(),
            purpose,
        });
        self
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    /// Most likely alternatives at this position, including the chosen token.
    #[serde(default)]
    pub top: Vec<TopLogprob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(default)]
    pub token_logprobs: Option<Vec<TokenLogprob>>,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, serde_json::Value>,
}

impl CompletionResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            token_logprobs: None,
            provider_meta: BTreeMap::new(),
        }
    }
}

pub trait Provider: Send + Sync {
    /// Stable identifier of the backend, part of every cache key.
    fn endpoint_id(&self) -> String;

    fn supports_logprobs(&self) -> bool;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn endpoint_id(&self) -> String {
        (**self).endpoint_id()
    }
    fn supports_logprobs(&self) -> bool {
        (**self).supports_logprobs()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn endpoint_id(&self) -> String {
        (**self).endpoint_id()
    }
    fn supports_logprobs(&self) -> bool {
        (**self).supports_logprobs()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn endpoint_id(&self) -> String {
        (**self).endpoint_id()
    }
    fn supports_logprobs(&self) -> bool {
        (**self).supports_logprobs()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}
