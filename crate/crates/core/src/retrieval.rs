//! Exact cosine retrieval over a study-scoped chunk index, with per-source
//! uniform budgeting.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Chunk;
use crate::embedding::{EmbeddingVector, UNIT_NORM_TOL};
use crate::exec::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Desired number of passages.
    pub k: usize,
    /// Weight of the logarithmic oversampling term.
    pub beta: f64,
    /// Cap on the total budget before it is split over sources.
    pub n_max: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            beta: 2.0,
            n_max: 40,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::Config("k must be at least 1".into()));
        }
        if self.n_max < self.k {
            return Err(RetrievalError::Config(format!(
                "n_max ({}) must be at least k ({})",
                self.n_max, self.k
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(RetrievalError::Config("beta must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RetrievalError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("{chunks} chunks but {vectors} vectors")]
    Misaligned { chunks: usize, vectors: usize },
    #[error("vector {index} has norm {norm}, expected unit norm")]
    NonUnit { index: usize, norm: f64 },
    #[error("query vector has norm {0}, expected unit norm")]
    NonUnitQuery(f64),
    #[error("vector dimension {got} differs from index dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid retrieval config: {0}")]
    Config(String),
}

/// Passages to fetch from each of `s_count` sources:
/// `ceil(min(k + beta * ln(s_count), n_max) / s_count)`, at least 1.
pub fn allocate_per_source(k: usize, beta: f64, n_max: usize, s_count: usize) -> usize {
    let s = s_count.max(1) as f64;
    let budget = (k as f64 + beta * s.ln()).min(n_max as f64);
    ((budget / s).ceil() as usize).max(1)
}

#[derive(Debug, Clone)]
struct SourceGroup {
    paper_id: String,
    entries: Vec<(Chunk, EmbeddingVector)>,
}

/// Immutable chunk index grouped by source paper.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    groups: Vec<SourceGroup>,
    dim: usize,
}

impl VectorIndex {
    /// Paper ids in first-appearance order.
    pub fn source_ids(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.paper_id.as_str()).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.entries.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.entries.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Chunk, &EmbeddingVector)> {
        self.groups
            .iter()
            .flat_map(|g| g.entries.iter().map(|(c, v)| (c, v)))
    }
}

/// Groups aligned chunks and unit vectors by paper id, keeping within-paper order.
pub fn build_index(chunks: Vec<Chunk>, vectors: Vec<EmbeddingVector>) -> Result<VectorIndex, RetrievalError> {
    if chunks.len() != vectors.len() {
        return Err(RetrievalError::Misaligned {
            chunks: chunks.len(),
            vectors: vectors.len(),
        });
    }
    if chunks.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let dim = vectors[0].dim();
    let mut groups: Vec<SourceGroup> = Vec::new();
    for (index, (chunk, vector)) in chunks.into_iter().zip(vectors).enumerate() {
        if !vector.is_unit() {
            return Err(RetrievalError::NonUnit {
                index,
                norm: vector.norm(),
            });
        }
        if vector.dim() != dim {
            return Err(RetrievalError::DimMismatch {
                expected: dim,
                got: vector.dim(),
            });
        }
        match groups.iter_mut().find(|g| g.paper_id == chunk.paper_id) {
            Some(g) => g.entries.push((chunk, vector)),
            None => groups.push(SourceGroup {
                paper_id: chunk.paper_id.clone(),
                entries: vec![(chunk, vector)],
            }),
        }
    }
    Ok(VectorIndex { groups, dim })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
    /// Cosine similarity to the query.
    pub score: f64,
    /// 1-based rank among returned chunks of the same paper.
    pub rank_within_source: usize,
}

/// Descending score, then `(paper_id, chunk.id)` ascending.
pub fn score_order(a: &ScoredChunk, b: &ScoredChunk) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.chunk.paper_id.cmp(&b.chunk.paper_id))
        .then_with(|| a.chunk.id.cmp(&b.chunk.id))
}

fn check_query(index: &VectorIndex, query: &EmbeddingVector) -> Result<(), RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    if query.dim() != index.dim {
        return Err(RetrievalError::DimMismatch {
            expected: index.dim,
            got: query.dim(),
        });
    }
    if (query.norm() - 1.0).abs() > UNIT_NORM_TOL {
        return Err(RetrievalError::NonUnitQuery(query.norm()));
    }
    Ok(())
}

fn score_entries(exec: Execution, entries: &[(Chunk, EmbeddingVector)], query: &EmbeddingVector) -> Vec<ScoredChunk> {
    exec::map_slice(exec, entries, |(chunk, vector)| ScoredChunk {
        chunk: chunk.clone(),
        vector: vector.clone(),
        score: vector.dot(query),
        rank_within_source: 0,
    })
}

fn assign_source_ranks(items: &mut [ScoredChunk]) {
    let mut seen: Vec<(String, usize)> = Vec::new();
    for item in items.iter_mut() {
        let pid = &item.chunk.paper_id;
        item.rank_within_source = match seen.iter_mut().find(|(p, _)| p == pid) {
            Some((_, n)) => {
                *n += 1;
                *n
            }
            None => {
                seen.push((pid.clone(), 1));
                1
            }
        };
    }
}

/// Top-`k_s` chunks from every source, sources concatenated in index order.
pub fn retrieve_uniform(
    index: &VectorIndex,
    query: &EmbeddingVector,
    config: &RetrievalConfig,
    exec: Execution,
) -> Result<Vec<ScoredChunk>, RetrievalError> {
    check_query(index, query)?;
    let per_source = allocate_per_source(config.k, config.beta, config.n_max, index.groups.len());
    let mut out = Vec::new();
    for group in &index.groups {
        let mut scored = score_entries(exec, &group.entries, query);
        scored.sort_by(score_order);
        scored.truncate(per_source);
        out.extend(scored);
    }
    assign_source_ranks(&mut out);
    Ok(out)
}

/// Global top-`k` chunks regardless of source.
pub fn retrieve_global(
    index: &VectorIndex,
    query: &EmbeddingVector,
    k: usize,
    exec: Execution,
) -> Result<Vec<ScoredChunk>, RetrievalError> {
    check_query(index, query)?;
    let all: Vec<(Chunk, EmbeddingVector)> = index
        .entries()
        .map(|(c, v)| (c.clone(), v.clone()))
        .collect();
    let mut scored = score_entries(exec, &all, query);
    scored.sort_by(score_order);
    scored.truncate(k);
    assign_source_ranks(&mut scored);
    Ok(scored)
}

/// Number of distinct papers among retrieved chunks.
pub fn distinct_sources(chunks: &[ScoredChunk]) -> usize {
    let mut ids: Vec<&str> = chunks.iter().map(|c| c.chunk.paper_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}
