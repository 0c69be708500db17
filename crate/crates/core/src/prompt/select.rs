//! Choosing demonstrations for a query.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Demonstration, PromptError, TaskKind};
use crate::corpus::{Corpus, Instance};
use crate::embed::Embedder;
use crate::index::FlatIndex;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoMode {
    /// Zero-shot.
    #[default]
    None,
    /// The same canonical examples for every query.
    Fixed,
    /// The nearest training instances to the query.
    Rae,
}

impl DemoMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DemoMode::None => "none",
            DemoMode::Fixed => "fixed",
            DemoMode::Rae => "rae",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection<'a> {
    /// Most similar first for retrieval, canonical order for fixed mode.
    pub picked: Vec<(&'a Instance, Option<f64>)>,
    /// How many of the requested demonstrations could not be supplied.
    pub shortfall: usize,
}

impl Selection<'_> {
    pub fn demonstrations(&self, kind: TaskKind) -> Vec<Demonstration> {
        self.picked
            .iter()
            .map(|(inst, sim)| Demonstration::from_gold(kind, inst, *sim))
            .collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.picked.iter().map(|(i, _)| i.id.as_str()).collect()
    }
}

pub struct DemoSelector<'a> {
    mode: DemoMode,
    k: usize,
    pool: HashMap<&'a str, &'a Instance>,
    canonical: Vec<&'a Instance>,
    retrieval: Option<(&'a FlatIndex, &'a dyn Embedder)>,
}

impl<'a> DemoSelector<'a> {
    pub fn none() -> Self {
        DemoSelector {
            mode: DemoMode::None,
            k: 0,
            pool: HashMap::new(),
            canonical: Vec::new(),
            retrieval: None,
        }
    }

    pub fn fixed(pool: &'a Corpus, canonical: &[String], k: usize) -> Result<Self, PromptError> {
        if canonical.is_empty() && k > 0 {
            return Err(PromptError::MissingCanonical);
        }
        let mut picked = Vec::with_capacity(canonical.len());
        for id in canonical {
            picked.push(
                pool.get(id)
                    .ok_or_else(|| PromptError::UnknownCanonical(id.clone()))?,
            );
        }
        Ok(DemoSelector {
            mode: DemoMode::Fixed,
            k,
            pool: HashMap::new(),
            canonical: picked,
            retrieval: None,
        })
    }

    /// Retrieval over `index`, whose ids must all belong to `pool`.
    pub fn rae(
        pool: &'a Corpus,
        index: &'a FlatIndex,
        embedder: &'a dyn Embedder,
        k: usize,
    ) -> Result<Self, PromptError> {
        if index.dim() != embedder.dim() {
            return Err(PromptError::DimensionMismatch {
                index: index.dim(),
                embedder: embedder.dim(),
            });
        }
        let by_id: HashMap<&str, &Instance> =
            pool.instances.iter().map(|i| (i.id.as_str(), i)).collect();
        if let Some(missing) = index.ids().iter().find(|id| !by_id.contains_key(id.as_str())) {
            return Err(PromptError::IndexPoolMismatch(missing.clone()));
        }
        Ok(DemoSelector {
            mode: DemoMode::Rae,
            k,
            pool: by_id,
            canonical: Vec::new(),
            retrieval: Some((index, embedder)),
        })
    }

    pub fn mode(&self) -> DemoMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Picks up to `k` demonstrations for `query`. The query itself is never
    /// returned.
    pub fn select(&self, query: &Instance) -> Result<Selection<'a>, PromptError> {
        match self.mode {
            DemoMode::None => Ok(Selection {
                picked: Vec::new(),
                shortfall: 0,
            }),
            DemoMode::Fixed => {
                let picked: Vec<_> = self
                    .canonical
                    .iter()
                    .filter(|i| i.id != query.id)
                    .take(self.k)
                    .map(|i| (*i, None))
                    .collect();
                Ok(Selection {
                    shortfall: self.k - picked.len(),
                    picked,
                })
            }
            DemoMode::Rae => {
                let (_, embedder) = self.retrieval.ok_or(PromptError::MissingIndex)?;
                let q = embedder.embed_text(&query.text)?;
                self.select_with_vector(query, &q)
            }
        }
    }

    /// Retrieval with an already computed query embedding.
    pub fn select_with_vector(
        &self,
        query: &Instance,
        q: &crate::embed::EmbeddingVector,
    ) -> Result<Selection<'a>, PromptError> {
        let (index, _) = self.retrieval.ok_or(PromptError::MissingIndex)?;
        if self.k == 0 {
            return Ok(Selection {
                picked: Vec::new(),
                shortfall: 0,
            });
        }
        let excluded = HashSet::from([query.id.clone()]);
        let hits = index.query_excluding(q, self.k, &excluded)?;
        let picked: Vec<_> = hits
            .iter()
            .map(|h| (self.pool[h.instance_id.as_str()], Some(h.score)))
            .collect();
        Ok(Selection {
            shortfall: self.k - picked.len(),
            picked,
        })
    }

    /// Selections for many queries. Retrieval embeds all queries in one batch.
    pub fn select_all(&self, queries: &[Instance]) -> Result<Vec<Selection<'a>>, PromptError> {
        match self.retrieval {
            Some((_, embedder)) if self.mode == DemoMode::Rae && !queries.is_empty() => {
                let texts: Vec<&str> = queries.iter().map(|q| q.text.as_str()).collect();
                let vectors = embedder.embed_batch(&texts)?;
                queries
                    .iter()
                    .zip(&vectors)
                    .map(|(q, v)| self.select_with_vector(q, v))
                    .collect()
            }
            _ => queries.iter().map(|q| self.select(q)).collect(),
        }
    }
}
