//! Chat-completion backends.
//!
//! [`RemoteChatBackend`] talks to an OpenAI-compatible chat endpoint.
//! [`MockBackend`] replays scripted responses keyed by prompt digest, and
//! [`FnBackend`] wraps a closure; both make runs reproducible offline.

mod mock;
mod remote;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::retry::ordered_parallel_map;

pub use mock::{FnBackend, MockBackend, ScriptEntry};
pub use remote::{LlmConfig, RemoteChatBackend, LLM_API_KEY_ENV};

/// Sampling temperature for extraction calls.
pub const EXTRACTION_TEMPERATURE: f32 = 0.0;
pub const EXTRACTION_MAX_TOKENS: u32 = 1024;
pub const SYNTHESIS_TEMPERATURE: f32 = 1.6;
pub const SYNTHESIS_MAX_TOKENS: u32 = 4000;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {0}")]
    Http(u16),
    #[error("endpoint rejected the credentials (HTTP {0})")]
    Auth(u16),
    #[error("malformed response: {0}")]
    Response(String),
    #[error("no scripted response for prompt {digest} (request {request_id})")]
    NoScriptEntry { digest: String, request_id: String },
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("{0}")]
    Backend(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Http(code) => *code == 408 || *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_name: String,
    pub prompt_text: String,
    /// Earlier turns sent before the prompt, oldest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_tokens: u32,
    pub request_id: String,
}

impl CompletionRequest {
    pub fn new(
        model_name: impl Into<String>,
        prompt_text: impl Into<String>,
        request_id: impl Into<String>,
    ) -> Self {
        CompletionRequest {
            model_name: model_name.into(),
            prompt_text: prompt_text.into(),
            history: Vec::new(),
            temperature: EXTRACTION_TEMPERATURE,
            max_tokens: EXTRACTION_MAX_TOKENS,
            request_id: request_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.prompt_text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = self.history.clone();
        out.push(ChatMessage::user(self.prompt_text.clone()));
        out
    }

    /// Hex SHA-256 identifying the prompt content. Without history this is
    /// the digest of the prompt text bytes; with history it is the digest of
    /// the JSON message list.
    pub fn prompt_digest(&self) -> String {
        if self.history.is_empty() {
            sha256_hex(self.prompt_text.as_bytes())
        } else {
            let bytes = serde_json::to_vec(&self.messages()).expect("messages serialize");
            sha256_hex(&bytes)
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError>;

    /// Parallelism the backend tolerates.
    fn max_inflight(&self) -> usize {
        1
    }
}

/// Completes `requests` with at most `max_inflight` concurrent calls. Results
/// are positional.
pub fn complete_batch(
    backend: &dyn ChatBackend,
    requests: &[CompletionRequest],
    max_inflight: usize,
) -> Vec<Result<CompletionResponse, LlmError>> {
    ordered_parallel_map(requests, max_inflight, |_, r| backend.complete(r))
}
