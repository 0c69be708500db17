//! Text embeddings behind a provider trait.
//!
//! Two providers exist: a remote OpenAI-compatible embedding endpoint and a
//! local feature-hashing embedder that needs no network and is fully
//! deterministic.

mod local;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retry::RetryPolicy;

pub use local::{fnv1a_64, LocalHashEmbedder};
pub use remote::RemoteEmbedder;

pub const EMBED_API_KEY_ENV: &str = "EE_EMBED_API_KEY";

/// Texts longer than this many characters are truncated before embedding.
pub const DEFAULT_MAX_CHARS: usize = 8000;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text to embed is empty")]
    EmptyText,
    #[error("embedding has {actual} dimensions, configured for {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("invalid embedding config: {0}")]
    InvalidConfig(String),
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("embedding endpoint returned HTTP {0}")]
    Http(u16),
    #[error("embedding endpoint rejected credentials (HTTP {0})")]
    Auth(u16),
    #[error("malformed embedding response: {0}")]
    Response(String),
    #[error("text {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<EmbedError>,
    },
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        match self {
            EmbedError::Transport(_) => true,
            EmbedError::Http(code) => *code == 408 || *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

/// A fixed-length vector of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    /// Scales to unit Euclidean norm; the zero vector stays zero.
    pub fn normalized(self) -> Self {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return self;
        }
        EmbeddingVector(self.0.iter().map(|&v| (v as f64 / norm) as f32).collect())
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = EmbedError;

    fn try_from(values: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Remote,
    LocalHash,
}

fn default_true() -> bool {
    true
}

fn default_max_chars() -> usize {
    DEFAULT_MAX_CHARS
}

fn default_inflight() -> usize {
    4
}

fn default_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingProviderConfig {
    pub provider: ProviderKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl EmbeddingProviderConfig {
    pub fn local_hash(dim: usize) -> Self {
        EmbeddingProviderConfig {
            provider: ProviderKind::LocalHash,
            dim,
            endpoint: None,
            model_name: None,
            normalize: true,
            max_chars: DEFAULT_MAX_CHARS,
            max_inflight: default_inflight(),
            batch_size: default_batch(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn remote(endpoint: impl Into<String>, model_name: impl Into<String>, dim: usize) -> Self {
        EmbeddingProviderConfig {
            provider: ProviderKind::Remote,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            ..Self::local_hash(dim)
        }
    }

    /// text-embedding-ada-002 shape: 1536 dimensions.
    pub fn ada002(endpoint: impl Into<String>) -> Self {
        Self::remote(endpoint, "text-embedding-ada-002", 1536)
    }

    /// Universal-Sentence-Encoder shape: 512 dimensions.
    pub fn use_style(endpoint: impl Into<String>) -> Self {
        Self::remote(endpoint, "universal-sentence-encoder", 512)
    }

    /// RoBERTa-base shape: 768 dimensions.
    pub fn roberta_style(endpoint: impl Into<String>) -> Self {
        Self::remote(endpoint, "roberta-base", 768)
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidConfig("dim must be positive".into()));
        }
        if self.max_chars == 0 {
            return Err(EmbedError::InvalidConfig("max_chars must be positive".into()));
        }
        if self.provider == ProviderKind::Remote {
            let missing = |v: &Option<String>| v.as_deref().is_none_or(|s| s.trim().is_empty());
            if missing(&self.endpoint) {
                return Err(EmbedError::InvalidConfig("remote provider requires endpoint".into()));
            }
            if missing(&self.model_name) {
                return Err(EmbedError::InvalidConfig(
                    "remote provider requires model_name".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>, EmbedError> {
        self.validate()?;
        Ok(match self.provider {
            ProviderKind::LocalHash => Box::new(LocalHashEmbedder::new(self.clone())?),
            ProviderKind::Remote => Box::new(RemoteEmbedder::new(self.clone())?),
        })
    }
}

/// Cuts `text` to at most `max_chars` characters; reports whether it did.
pub fn truncate_chars(text: &str, max_chars: usize) -> (&str, bool) {
    match text.char_indices().nth(max_chars) {
        Some((byte, _)) => (&text[..byte], true),
        None => (text, false),
    }
}

pub trait Embedder: Send + Sync {
    fn config(&self) -> &EmbeddingProviderConfig;

    fn dim(&self) -> usize {
        self.config().dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    /// Embeds texts in order. The first failing item is reported with its
    /// index.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.embed_text(t).map_err(|e| EmbedError::AtIndex {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

fn check_text(text: &str) -> Result<(), EmbedError> {
    if text.trim().is_empty() {
        Err(EmbedError::EmptyText)
    } else {
        Ok(())
    }
}
