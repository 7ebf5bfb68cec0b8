//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::retry::{retry_with_backoff, RetryPolicy};
use super::{CompletionRequest, CompletionResponse, Message, Provider, TokenLogprob, TopLogprob};
use crate::error::{Error, Result};

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    /// Base URL, e.g. `https://api.openai.com/v1` or `http://localhost:8000/v1`.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub supports_logprobs: bool,
    pub top_logprobs: u8,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl OpenAiConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            supports_logprobs: true,
            top_logprobs: 5,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
        }
    }

    pub fn api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// Reads the key from `var`, leaving it unset when the variable is absent.
    pub fn api_key_from_env(mut self, var: &str) -> Self {
        self.api_key = std::env::var(var).ok().filter(|k| !k.is_empty());
        self
    }
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    logprobs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_logprobs: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<WireToken>>,
}

#[derive(Deserialize)]
struct WireToken {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<WireTop>,
}

#[derive(Deserialize)]
struct WireTop {
    token: String,
    logprob: f64,
}

pub struct OpenAiProvider {
    config: OpenAiConfig,
    http: reqwest::blocking::Client,
}

impl OpenAiProvider {
    pub fn new(config: OpenAiConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Transport(format!("building HTTP client: {e}")))?;
        Ok(Self { config, http })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, body: &ChatBody<'_>, want_logprobs: bool) -> Result<CompletionResponse> {
        let mut req = self.http.post(self.url()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(Error::Auth(format!("{status}: {text}"))),
            408 | 429 | 500..=599 => return Err(Error::Transport(format!("{status}: {text}"))),
            _ => return Err(Error::Protocol(format!("{status}: {text}"))),
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("unparseable completion: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::Protocol("completion without choices".into()))?;
        let token_logprobs = choice.logprobs.and_then(|l| l.content).map(|toks| {
            toks.into_iter()
                .map(|t| TokenLogprob {
                    token: t.token,
                    logprob: t.logprob,
                    top: t
                        .top_logprobs
                        .into_iter()
                        .map(|w| TopLogprob {
                            token: w.token,
                            logprob: w.logprob,
                        })
                        .collect(),
                })
                .collect::<Vec<_>>()
        });
        if want_logprobs && token_logprobs.is_none() {
            return Err(Error::Capability(
                "endpoint returned no logprobs for a logprob request".into(),
            ));
        }
        let mut out = CompletionResponse::text(choice.message.content.unwrap_or_default());
        out.token_logprobs = token_logprobs;
        if let Some(m) = parsed.model {
            out.provider_meta.insert("model".into(), m.into());
        }
        if let Some(f) = choice.finish_reason {
            out.provider_meta.insert("finish_reason".into(), f.into());
        }
        Ok(out)
    }
}

impl Provider for OpenAiProvider {
    fn endpoint_id(&self) -> String {
        self.config.endpoint.trim_end_matches('/').to_string()
    }

    fn supports_logprobs(&self) -> bool {
        self.config.supports_logprobs
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        if request.logprobs_wanted && !self.config.supports_logprobs {
            return Err(Error::Capability(format!(
                "{} is configured without logprob support",
                self.endpoint_id()
            )));
        }
        let body = ChatBody {
            model: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            logprobs: request.logprobs_wanted,
            top_logprobs: request.logprobs_wanted.then_some(self.config.top_logprobs),
            seed: request.seed_hint,
        };
        retry_with_backoff(&self.config.retry, thread::sleep, || {
            self.attempt(&body, request.logprobs_wanted)
        })
    }
}
