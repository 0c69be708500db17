use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    check_text, truncate_chars, EmbedError, Embedder, EmbeddingProviderConfig, EmbeddingVector,
    EMBED_API_KEY_ENV,
};
use crate::retry::{ordered_parallel_map, with_retry, Attempt, InflightLimiter};

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    config: EmbeddingProviderConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    inflight: InflightLimiter,
}

impl RemoteEmbedder {
    pub fn new(config: EmbeddingProviderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Ok(RemoteEmbedder {
            inflight: InflightLimiter::new(config.max_inflight),
            api_key: std::env::var(EMBED_API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            config,
            agent,
        })
    }

    fn post_once(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let _permit = self.inflight.acquire();
        let endpoint = self.config.endpoint.as_deref().unwrap_or_default();
        let body = EmbeddingRequest {
            model: self.config.model_name.as_deref().unwrap_or_default(),
            input: texts,
        };
        let mut req = self.agent.post(endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(classify)?;
        let parsed: EmbeddingResponse = resp
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_json()
            .map_err(|e| EmbedError::Response(e.to_string()))?;
        decode_response(parsed, texts.len(), &self.config)
    }

    fn post_chunk(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        with_retry(&self.config.retry, |_| match self.post_once(texts) {
            Ok(v) => Attempt::Done(v),
            Err(e) if e.is_retryable() => Attempt::Retryable(e),
            Err(e) => Attempt::Fatal(e),
        })
        .map(|(v, _)| v)
        .map_err(|(e, _)| e)
    }
}

fn classify(err: ureq::Error) -> EmbedError {
    match err {
        ureq::Error::StatusCode(code @ (401 | 403)) => EmbedError::Auth(code),
        ureq::Error::StatusCode(code) => EmbedError::Http(code),
        other => EmbedError::Transport(other.to_string()),
    }
}

fn decode_response(
    parsed: EmbeddingResponse,
    expected_len: usize,
    config: &EmbeddingProviderConfig,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if parsed.data.len() != expected_len {
        return Err(EmbedError::Response(format!(
            "expected {expected_len} embeddings, got {}",
            parsed.data.len()
        )));
    }
    let mut slots: Vec<Option<EmbeddingVector>> = vec![None; expected_len];
    for datum in parsed.data {
        if datum.embedding.len() != config.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: config.dim,
                actual: datum.embedding.len(),
            });
        }
        let slot = slots
            .get_mut(datum.index)
            .ok_or_else(|| EmbedError::Response(format!("index {} out of range", datum.index)))?;
        if slot.is_some() {
            return Err(EmbedError::Response(format!("duplicate index {}", datum.index)));
        }
        let v = EmbeddingVector::new(datum.embedding)?;
        *slot = Some(if config.normalize { v.normalized() } else { v });
    }
    Ok(slots.into_iter().map(|s| s.expect("all indices filled")).collect())
}

impl Embedder for RemoteEmbedder {
    fn config(&self) -> &EmbeddingProviderConfig {
        &self.config
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        check_text(text)?;
        let (text, _) = truncate_chars(text, self.config.max_chars);
        Ok(self.post_chunk(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut prepared = Vec::with_capacity(texts.len());
        for (index, t) in texts.iter().enumerate() {
            check_text(t).map_err(|e| EmbedError::AtIndex {
                index,
                source: Box::new(e),
            })?;
            prepared.push(truncate_chars(t, self.config.max_chars).0);
        }
        let size = self.config.batch_size.max(1);
        let chunks: Vec<&[&str]> = prepared.chunks(size).collect();
        let results = ordered_parallel_map(&chunks, self.config.max_inflight, |_, c| {
            self.post_chunk(c)
        });
        let mut out = Vec::with_capacity(texts.len());
        for (ci, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => out.extend(v),
                Err(e) => {
                    return Err(EmbedError::AtIndex {
                        index: ci * size,
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize) -> EmbeddingProviderConfig {
        EmbeddingProviderConfig::remote("http://unused", "m", dim)
    }

    #[test]
    fn decode_reorders_by_index() {
        let parsed: EmbeddingResponse = serde_json::from_str(
            r#"{"data": [{"index": 1, "embedding": [0.0, 2.0]}, {"index": 0, "embedding": [3.0, 4.0]}]}"#,
        )
        .unwrap();
        let v = decode_response(parsed, 2, &cfg(2)).unwrap();
        assert_eq!(v[0].as_slice(), &[0.6, 0.8]);
        assert_eq!(v[1].as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn decode_never_pads_or_trims() {
        let parsed: EmbeddingResponse =
            serde_json::from_str(r#"{"data": [{"index": 0, "embedding": [1.0, 2.0, 3.0]}]}"#)
                .unwrap();
        assert!(matches!(
            decode_response(parsed, 1, &cfg(4)),
            Err(EmbedError::DimensionMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn decode_rejects_count_and_index_errors() {
        let parsed: EmbeddingResponse =
            serde_json::from_str(r#"{"data": [{"index": 5, "embedding": [1.0]}]}"#).unwrap();
        assert!(decode_response(parsed, 1, &cfg(1)).is_err());
        let parsed: EmbeddingResponse = serde_json::from_str(r#"{"data": []}"#).unwrap();
        assert!(decode_response(parsed, 1, &cfg(1)).is_err());
    }
}
