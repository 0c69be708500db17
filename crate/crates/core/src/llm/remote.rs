use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    ChatBackend, ChatMessage, CompletionRequest, CompletionResponse, LlmError,
    EXTRACTION_MAX_TOKENS, EXTRACTION_TEMPERATURE,
};
use crate::retry::{with_retry, Attempt, InflightLimiter, RateLimiter, RetryPolicy};

pub const LLM_API_KEY_ENV: &str = "EE_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Full URL of an OpenAI-compatible chat completions endpoint.
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f32,
    pub max_tokens: u32,
    /// Requests per minute; 0 disables rate limiting.
    pub rate_limit_per_minute: u32,
    pub max_inflight: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: String::new(),
            model_name: String::new(),
            temperature: EXTRACTION_TEMPERATURE,
            max_tokens: EXTRACTION_MAX_TOKENS,
            rate_limit_per_minute: 0,
            max_inflight: 4,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.endpoint.trim().is_empty() {
            return Err(LlmError::InvalidRequest("endpoint is required".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(LlmError::InvalidRequest("model_name is required".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_inflight == 0 {
            return Err(LlmError::InvalidRequest("max_inflight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct RemoteChatBackend {
    config: LlmConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    limiter: RateLimiter,
    inflight: InflightLimiter,
}

impl RemoteChatBackend {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Ok(RemoteChatBackend {
            api_key: std::env::var(LLM_API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            limiter: RateLimiter::new(config.rate_limit_per_minute),
            inflight: InflightLimiter::new(config.max_inflight),
            agent,
            config,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn post_once(&self, request: &CompletionRequest) -> Result<(String, Option<String>), LlmError> {
        self.limiter.acquire();
        let _permit = self.inflight.acquire();
        let messages = request.messages();
        let model = if request.model_name.is_empty() {
            &self.config.model_name
        } else {
            &request.model_name
        };
        let body = WireRequest {
            model,
            messages: &messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(classify)?;
        let parsed: WireResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Response(e.to_string()))?;
        decode(parsed)
    }
}

fn classify(err: ureq::Error) -> LlmError {
    match err {
        ureq::Error::StatusCode(code @ (401 | 403)) => LlmError::Auth(code),
        ureq::Error::StatusCode(code) => LlmError::Http(code),
        other => LlmError::Transport(other.to_string()),
    }
}

fn decode(parsed: WireResponse) -> Result<(String, Option<String>), LlmError> {
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::Response("response has no choices".into()))?;
    Ok((choice.message.content.unwrap_or_default(), choice.finish_reason))
}

impl ChatBackend for RemoteChatBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        request.validate()?;
        let started = Instant::now();
        let ((text, finish_reason), attempts) =
            with_retry(&self.config.retry, |_| match self.post_once(request) {
                Ok(v) => Attempt::Done(v),
                Err(e) if e.is_retryable() => Attempt::Retryable(e),
                Err(e) => Attempt::Fatal(e),
            })
            .map_err(|(e, attempts)| {
                log::error!(
                    "request {} failed after {attempts} attempt(s): {e}",
                    request.request_id
                );
                e
            })?;
        Ok(CompletionResponse {
            text,
            finish_reason,
            latency_ms: started.elapsed().as_millis() as u64,
            attempt_count: attempts,
        })
    }

    fn max_inflight(&self) -> usize {
        self.config.max_inflight
    }
}
