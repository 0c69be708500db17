//! Exact flat vector index with top-K retrieval and a checksummed binary
//! file format.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic "EEIX" | version u32 | metric u8 | dim u32 | count u64
//! count × (id_len u32 | id UTF-8 | dim × f32)
//! crc32 u32 over every preceding byte
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingVector;

pub const INDEX_MAGIC: &[u8; 4] = b"EEIX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector for {id:?} has dimension {actual}, index dimension is {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },
    #[error("query has dimension {actual}, index dimension is {expected}")]
    QueryDimension { expected: usize, actual: usize },
    #[error("duplicate instance id {0:?}")]
    DuplicateId(String),
    #[error("index dimension must be positive")]
    ZeroDimension,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("vector for {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("index file checksum mismatch")]
    Checksum,
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {found} (expected {INDEX_FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("unknown metric code {0}")]
    UnknownMetric(u8),
    #[error("index file is malformed: {0}")]
    Malformed(String),
    #[error("index I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L2,
    Cosine,
}

impl Metric {
    fn code(self) -> u8 {
        match self {
            Metric::L2 => 0,
            Metric::Cosine => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, IndexError> {
        match code {
            0 => Ok(Metric::L2),
            1 => Ok(Metric::Cosine),
            other => Err(IndexError::UnknownMetric(other)),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub instance_id: String,
    /// Higher is more similar. Cosine similarity, or negated L2 distance.
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    metric: Metric,
    ids: Vec<String>,
    data: Vec<f32>,
}

impl FlatIndex {
    pub fn empty(dim: usize, metric: Metric) -> Result<Self, IndexError> {
        if dim == 0 {
            return Err(IndexError::ZeroDimension);
        }
        Ok(FlatIndex {
            dim,
            metric,
            ids: Vec::new(),
            data: Vec::new(),
        })
    }

    pub fn build<I>(dim: usize, metric: Metric, entries: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (String, EmbeddingVector)>,
    {
        let mut index = Self::empty(dim, metric)?;
        let mut seen = HashSet::new();
        for (id, v) in entries {
            index.push_checked(id, v.as_slice(), &mut seen)?;
        }
        Ok(index)
    }

    fn push_checked(
        &mut self,
        id: String,
        values: &[f32],
        seen: &mut HashSet<String>,
    ) -> Result<(), IndexError> {
        if values.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                id,
                expected: self.dim,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite(id));
        }
        if !seen.insert(id.clone()) {
            return Err(IndexError::DuplicateId(id));
        }
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn score(&self, q: &[f32], q_norm: f64, v: &[f32]) -> f64 {
        match self.metric {
            Metric::Cosine => {
                let (mut dot, mut vv) = (0f64, 0f64);
                for (&a, &b) in q.iter().zip(v) {
                    dot += a as f64 * b as f64;
                    vv += b as f64 * b as f64;
                }
                let denom = q_norm * vv.sqrt();
                if denom == 0.0 {
                    0.0
                } else {
                    dot / denom
                }
            }
            Metric::L2 => {
                let sq: f64 = q
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| {
                        let d = a as f64 - b as f64;
                        d * d
                    })
                    .sum();
                -sq.sqrt()
            }
        }
    }

    pub fn query(&self, q: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalResult>, IndexError> {
        self.query_filtered(q, k, |_| true)
    }

    /// Like [`query`](Self::query) but never returns ids in `excluded`.
    pub fn query_excluding(
        &self,
        q: &EmbeddingVector,
        k: usize,
        excluded: &HashSet<String>,
    ) -> Result<Vec<RetrievalResult>, IndexError> {
        self.query_filtered(q, k, |id| !excluded.contains(id))
    }

    fn query_filtered<F>(
        &self,
        q: &EmbeddingVector,
        k: usize,
        keep: F,
    ) -> Result<Vec<RetrievalResult>, IndexError>
    where
        F: Fn(&str) -> bool,
    {
        if q.dim() != self.dim {
            return Err(IndexError::QueryDimension {
                expected: self.dim,
                actual: q.dim(),
            });
        }
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        let q = q.as_slice();
        let q_norm = q.iter().map(|&a| a as f64 * a as f64).sum::<f64>().sqrt();
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|&i| keep(&self.ids[i]))
            .map(|i| (self.score(q, q_norm, self.vector(i)), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(r, (score, i))| RetrievalResult {
                instance_id: self.ids[i].clone(),
                score,
                rank: r + 1,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(25 + self.data.len() * 4 + self.ids.len() * 16);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_FORMAT_VERSION.to_le_bytes());
        out.push(self.metric.code());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in self.vector(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < 4 {
            return Err(IndexError::Checksum);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(IndexError::Checksum);
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != INDEX_MAGIC {
            return Err(IndexError::BadMagic);
        }
        let version = r.u32()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(IndexError::Version { found: version });
        }
        let metric = Metric::from_code(r.u8()?)?;
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let mut index = Self::empty(dim, metric)?;
        // Each record needs at least 4 + 4*dim bytes; reject impossible counts
        // before allocating.
        let min_record = 4u64 + 4 * dim as u64;
        if count.saturating_mul(min_record) > r.remaining() as u64 {
            return Err(IndexError::Malformed(format!(
                "count {count} exceeds available data"
            )));
        }
        let mut seen = HashSet::new();
        let mut values = vec![0f32; dim];
        for _ in 0..count {
            let id_len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| IndexError::Malformed("id is not UTF-8".into()))?
                .to_string();
            for v in values.iter_mut() {
                *v = f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
            }
            index.push_checked(id, &values, &mut seen)?;
        }
        if r.remaining() != 0 {
            return Err(IndexError::Malformed(format!(
                "{} trailing bytes",
                r.remaining()
            )));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| IndexError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| IndexError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        if n > self.remaining() {
            return Err(IndexError::Malformed("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
