//! Embedding vectors and the embedder contract.
//!
//! Two backends: a remote JSON embeddings endpoint and a deterministic bucket
//! hash used offline and in tests. Both return unit-norm vectors so retrieval
//! can score with a plain dot product.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::http::{HttpError, JsonClient, RetryPolicy};

/// Tolerance on the unit-norm invariant.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOL
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two arbitrary (not necessarily unit) vectors.
/// Zero vectors have similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbedError {
    #[error("cannot normalise a zero vector")]
    ZeroVector,
    #[error("embedding input must be a non-empty list of non-empty texts")]
    EmptyInput,
    #[error("embedding dimension mismatch: expected {expected}, server returned {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("server returned {got} embeddings for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding request failed: {0}")]
    Http(#[from] HttpError),
    #[error("invalid embedder config: {0}")]
    Config(String),
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Http(e) if e.is_retryable())
    }
}

pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, EmbedError> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(EmbedError::ZeroVector);
    }
    Ok(EmbeddingVector::new(v.values.iter().map(|x| x / n).collect()))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn token_hash(token: &str, seed: u64) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(token.as_bytes())
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Deterministic bag-of-tokens embedding.
///
/// The text is lowercased and split on non-alphanumeric characters. Each
/// token's 64-bit FNV-1a hash (over the seed's little-endian bytes followed by
/// the token bytes) picks bucket `h % dim`; bit 32 of the same hash picks the
/// sign. Bucket counts are L2-normalised, and an all-zero accumulation maps to
/// the first basis vector.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> EmbeddingVector {
    let dim = dim.max(2);
    let mut acc = vec![0.0f64; dim];
    let lowered = text.to_lowercase();
    for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let h = token_hash(token, seed);
        let bucket = (h % dim as u64) as usize;
        acc[bucket] += if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
    }
    let v = EmbeddingVector::new(acc);
    normalize(&v).unwrap_or_else(|_| {
        let mut basis = vec![0.0; dim];
        basis[0] = 1.0;
        EmbeddingVector::new(basis)
    })
}

/// Anything that maps texts to unit vectors of a fixed dimension.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Embeds one batch; implementations may assume `texts.len() <= max_batch`.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn max_batch(&self) -> usize {
        64
    }
}

/// Embeds `texts` in batches of the embedder's `max_batch`, order-aligned.
pub fn embed_texts(texts: &[String], embedder: &dyn Embedder) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
        return Err(EmbedError::EmptyInput);
    }
    let mut out = Vec::with_capacity(texts.len());
    for batch in texts.chunks(embedder.max_batch().max(1)) {
        let vectors = embedder.embed_batch(batch)?;
        if vectors.len() != batch.len() {
            return Err(EmbedError::CountMismatch {
                expected: batch.len(),
                got: vectors.len(),
            });
        }
        out.extend(vectors);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
    pub max_batch: usize,
    pub exec: Execution,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            max_batch: 64,
            exec: Execution::default(),
        }
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(exec::map_slice(self.exec, texts, |t| hash_embed(t, self.dim, self.seed)))
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }
}

/// Client for an HTTP JSON embeddings endpoint taking
/// `{"model", "input": [..]}` and answering `{"data": [{"index", "embedding"}]}`.
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    dim: usize,
    max_batch: usize,
}

impl RemoteEmbedder {
    pub fn new(config: &EmbedderConfig) -> Result<Self, EmbedError> {
        let endpoint = config
            .endpoint_url
            .as_deref()
            .ok_or_else(|| EmbedError::Config("remote embedder needs endpoint_url".into()))?;
        let model = config
            .model_name
            .clone()
            .ok_or_else(|| EmbedError::Config("remote embedder needs model_name".into()))?;
        Ok(Self {
            client: JsonClient::new(
                endpoint,
                Duration::from_secs_f64(config.timeout_secs),
                config.max_in_flight,
                RetryPolicy::default(),
            ),
            model,
            dim: config.dim,
            max_batch: config.max_batch,
        })
    }

    #[cfg(test)]
    fn with_client(client: JsonClient, model: &str, dim: usize, max_batch: usize) -> Self {
        Self {
            client,
            model: model.into(),
            dim,
            max_batch,
        }
    }

    fn decode(&self, resp: &Value, expected: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| HttpError::Decode("missing data array".into()))?;
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; expected];
        for (pos, item) in data.iter().enumerate() {
            let idx = item
                .get("index")
                .and_then(Value::as_u64)
                .map(|i| i as usize)
                .unwrap_or(pos);
            let values: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| HttpError::Decode("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| HttpError::Decode("non-numeric embedding".into())))
                .collect::<Result<_, _>>()?;
            if values.len() != self.dim {
                return Err(EmbedError::DimMismatch {
                    expected: self.dim,
                    got: values.len(),
                });
            }
            let slot = slots.get_mut(idx).ok_or(EmbedError::CountMismatch {
                expected,
                got: data.len(),
            })?;
            *slot = Some(normalize(&EmbeddingVector::new(values))?);
        }
        slots
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or(EmbedError::CountMismatch {
                expected,
                got: data.len(),
            })
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = json!({ "model": self.model, "input": texts });
        let resp = self.client.post(&body)?;
        self.decode(&resp, texts.len())
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }
}

/// Wraps an embedder and counts how many texts went through it.
pub struct CountingEmbedder<E> {
    inner: E,
    texts: AtomicUsize,
}

impl<E: Embedder> CountingEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            texts: AtomicUsize::new(0),
        }
    }

    pub fn texts_embedded(&self) -> usize {
        self.texts.load(Ordering::SeqCst)
    }
}

impl<E: Embedder> Embedder for CountingEmbedder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        self.texts.fetch_add(texts.len(), Ordering::SeqCst);
        self.inner.embed_batch(texts)
    }

    fn max_batch(&self) -> usize {
        self.inner.max_batch()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Remote,
    #[default]
    DeterministicHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub dim: usize,
    pub timeout_secs: f64,
    pub max_batch: usize,
    pub max_in_flight: usize,
    /// Hash seed for the deterministic backend.
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::DeterministicHash,
            endpoint_url: None,
            model_name: None,
            dim: 256,
            timeout_secs: 60.0,
            max_batch: 64,
            max_in_flight: 4,
            seed: 0,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be positive".into()));
        }
        if self.kind == EmbedderKind::DeterministicHash && self.dim < 2 {
            return Err(EmbedError::Config("hash embedder needs dim >= 2".into()));
        }
        if self.max_batch == 0 {
            return Err(EmbedError::Config("max_batch must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(EmbedError::Config("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbedError> {
        self.validate()?;
        Ok(match self.kind {
            EmbedderKind::DeterministicHash => Arc::new(HashEmbedder {
                dim: self.dim,
                seed: self.seed,
                max_batch: self.max_batch,
                exec: Execution::default(),
            }),
            EmbedderKind::Remote => Arc::new(RemoteEmbedder::new(self)?),
        })
    }
}
