//! Embedding vectors, cosine similarity and embedding providers.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::kb::normalize_surface;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding must have at least one dimension")]
    Empty,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine undefined for a zero vector")]
    ZeroVector,
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    zero_guard: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { index });
        }
        Ok(Self {
            values,
            zero_guard: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Set when the provider had nothing to embed and substituted the unit vector e₀.
    pub fn is_zero_guard(&self) -> bool {
        self.zero_guard
    }
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if u.dim() != v.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.values.iter().zip(&v.values) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Same text must map to the same vector within a run; implementations must
/// tolerate concurrent calls.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
    fn dim(&self) -> usize;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(FNV_OFFSET, |h, b| (h ^ *b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing of normalized whitespace tokens, L2-normalized.
///
/// Text with no tokens yields the unit vector e₀ with the zero-guard flag set.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> EmbeddingVector {
    assert!(dim >= 2, "hash_embed needs dim >= 2");
    let mut values = vec![0.0; dim];
    for token in text.split_whitespace().map(normalize_surface) {
        if token.is_empty() {
            continue;
        }
        let h = fnv1a(seed, token.as_bytes());
        let index = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[index] += sign;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut unit = vec![0.0; dim];
        unit[0] = 1.0;
        return EmbeddingVector {
            values: unit,
            zero_guard: true,
        };
    }
    for v in &mut values {
        *v /= norm;
    }
    EmbeddingVector {
        values,
        zero_guard: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 1024, seed: 0 }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        Ok(hash_embed(text, self.dim, self.seed))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Remote provider: POST `{"text": ...}` and read back `{"vector": [...]}`.
pub struct RemoteEmbedder {
    url: String,
    dim: usize,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct VectorResponse {
    vector: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Self {
            url: url.into(),
            dim,
            agent,
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let provider = |e: String| EmbeddingError::Provider(e);
        let parsed: VectorResponse = self
            .agent
            .post(&self.url)
            .send_json(json!({ "text": text }))
            .map_err(|e| provider(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| provider(e.to_string()))?;
        if parsed.vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                left: parsed.vector.len(),
                right: self.dim,
            });
        }
        EmbeddingVector::new(parsed.vector)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Per-run memoization in front of another provider. No eviction.
pub struct MemoizedProvider<P> {
    inner: P,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<P: EmbeddingProvider> MemoizedProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for MemoizedProvider<P> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if let Some(v) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(text.to_string(), v.clone());
        Ok(v)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }
}
