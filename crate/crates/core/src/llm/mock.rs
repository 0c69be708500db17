use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{ChatBackend, CompletionRequest, CompletionResponse, LlmError};

/// One line of a mock script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub prompt_sha256: String,
    pub response: String,
}

/// Replays canned responses keyed by [`CompletionRequest::prompt_digest`].
/// A prompt with no entry is an error, never a silent empty answer.
#[derive(Debug, Default)]
pub struct MockBackend {
    responses: HashMap<String, String>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a response for a prompt digest. Conflicting responses for the
    /// same digest are rejected.
    pub fn insert(
        &mut self,
        digest: impl Into<String>,
        response: impl Into<String>,
    ) -> Result<(), LlmError> {
        let digest = digest.into().to_ascii_lowercase();
        let response = response.into();
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(LlmError::Script {
                line: 0,
                message: format!("{digest:?} is not a hex SHA-256 digest"),
            });
        }
        match self.responses.get(&digest) {
            Some(existing) if *existing != response => Err(LlmError::Script {
                line: 0,
                message: format!("conflicting responses for prompt {digest}"),
            }),
            _ => {
                self.responses.insert(digest, response);
                Ok(())
            }
        }
    }

    pub fn insert_prompt(&mut self, prompt_text: &str, response: impl Into<String>) {
        self.insert(super::sha256_hex(prompt_text.as_bytes()), response)
            .expect("digest is well formed; a conflicting response is a caller bug");
    }

    pub fn from_jsonl_str(src: &str) -> Result<Self, LlmError> {
        let mut mock = MockBackend::new();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| LlmError::Script {
                line: i + 1,
                message: e.to_string(),
            })?;
            mock.insert(entry.prompt_sha256, entry.response)
                .map_err(|e| match e {
                    LlmError::Script { message, .. } => LlmError::Script {
                        line: i + 1,
                        message,
                    },
                    other => other,
                })?;
        }
        Ok(mock)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl_str(&src)
    }

    /// Script lines sorted by digest.
    pub fn to_jsonl(&self) -> String {
        let mut entries: Vec<_> = self.responses.iter().collect();
        entries.sort();
        let mut out = String::new();
        for (d, r) in entries {
            let entry = ScriptEntry {
                prompt_sha256: d.clone(),
                response: r.clone(),
            };
            out.push_str(&serde_json::to_string(&entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Number of completions served or refused so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        request.validate()?;
        let digest = request.prompt_digest();
        let text = self
            .responses
            .get(&digest)
            .ok_or_else(|| LlmError::NoScriptEntry {
                digest,
                request_id: request.request_id.clone(),
            })?;
        Ok(CompletionResponse {
            text: text.clone(),
            finish_reason: Some("stop".into()),
            latency_ms: 0,
            attempt_count: 1,
        })
    }

    fn max_inflight(&self) -> usize {
        8
    }
}

type ResponderFn = dyn Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync;

/// A backend computed by a closure.
pub struct FnBackend {
    f: Box<ResponderFn>,
    calls: AtomicUsize,
}

impl FnBackend {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        FnBackend {
            f: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for FnBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        request.validate()?;
        Ok(CompletionResponse {
            text: (self.f)(request)?,
            finish_reason: Some("stop".into()),
            latency_ms: 0,
            attempt_count: 1,
        })
    }

    fn max_inflight(&self) -> usize {
        8
    }
}
