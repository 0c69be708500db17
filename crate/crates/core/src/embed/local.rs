use super::{check_text, truncate_chars, EmbedError, Embedder, EmbeddingProviderConfig, EmbeddingVector};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing over lowercase alphanumeric tokens.
///
/// Each token lands in bucket `fnv1a(token) mod dim` with sign `+1` when bit
/// 63 of the hash is clear and `-1` otherwise. Token order is irrelevant.
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    config: EmbeddingProviderConfig,
}

impl LocalHashEmbedder {
    pub fn new(config: EmbeddingProviderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        Ok(LocalHashEmbedder { config })
    }

    pub fn with_dim(dim: usize) -> Result<Self, EmbedError> {
        Self::new(EmbeddingProviderConfig::local_hash(dim))
    }
}

impl Embedder for LocalHashEmbedder {
    fn config(&self) -> &EmbeddingProviderConfig {
        &self.config
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        check_text(text)?;
        let (text, _) = truncate_chars(text, self.config.max_chars);
        let dim = self.config.dim;
        let mut acc = vec![0f64; dim];
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a_64(token.as_bytes());
            let bucket = (h % dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
        if self.config.normalize {
            let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                acc.iter_mut().for_each(|v| *v /= norm);
            }
        }
        EmbeddingVector::new(acc.into_iter().map(|v| v as f32).collect())
    }
}
