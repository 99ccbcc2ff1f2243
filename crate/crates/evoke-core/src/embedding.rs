//! Embedding vectors, the provider contract, and cosine similarity.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::EmbedError;
use crate::rng::fnv1a64;

/// Fixed-dimension embedding with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wrap raw components, rejecting NaN/Inf.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(bad));
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn squared_distance(&self, other: &Self) -> Result<f64, EmbedError> {
        check_dims(self, other)?;
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dimension(),
            got: b.dimension(),
        });
    }
    Ok(())
}

/// Cosine similarity clamped to `[-1, 1]`. A vector with norm below `1e-12`
/// is treated as "no similarity": the result is 0 and the case is logged.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    check_dims(a, b)?;
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.0.iter().zip(b.0.iter()) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    let norm_a = libm::sqrt(norm_a);
    let norm_b = libm::sqrt(norm_b);
    if norm_a < 1e-12 || norm_b < 1e-12 {
        log::debug!("cosine similarity on a degenerate (near-zero) vector; returning 0");
        return Ok(0.0);
    }
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Text-to-vector capability. Implementations must be deterministic for
/// identical input within one run and must report failures rather than
/// silently zero-filling.
pub trait EmbeddingProvider {
    /// Dimension of every vector this provider returns.
    fn dimension(&self) -> usize;

    /// Stable identity string (provider + model); recorded in bank manifests
    /// and used as part of cache keys.
    fn fingerprint(&self) -> String;

    /// Embed already-validated non-empty text.
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

impl EmbeddingProvider for alloc::boxed::Box<dyn EmbeddingProvider> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed_text(text)
    }
}

/// Embed `text` through `provider`, enforcing the shared contract: text must
/// be non-empty after trimming, and the result must be finite and of the
/// provider's declared dimension.
pub fn embed(
    provider: &dyn EmbeddingProvider,
    text: &str,
) -> Result<EmbeddingVector, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let vector = provider.embed_text(text)?;
    if vector.dimension() != provider.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: provider.dimension(),
            got: vector.dimension(),
        });
    }
    Ok(vector)
}

/// Deterministic local embedder: hash each whitespace token into one of `D`
/// buckets with a ±1 sign derived from the hash, then L2-normalize. Cheap,
/// hermetic, and preserves "similar texts share tokens → higher cosine".
///
/// Texts whose token contributions cancel exactly produce the zero vector,
/// which downstream cosine treats as "no similarity".
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIMENSION: usize = 64;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn fingerprint(&self) -> String {
        format!("hash-embedder-v1:d={}", self.dimension)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut values = vec![0.0f64; self.dimension];
        for token in text.split_whitespace() {
            let hash = fnv1a64(token.as_bytes());
            let bucket = (hash % self.dimension as u64) as usize;
            let sign = if (hash >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
        let norm = libm::sqrt(values.iter().map(|v| v * v).sum());
        if norm >= 1e-12 {
            for v in &mut values {
                *v /= norm;
            }
        }
        EmbeddingVector::new(values)
    }
}

/// Embedding provider that always fails; exercises the engine's
/// skip-on-provider-error path in tests.
#[derive(Debug, Clone)]
pub struct FailingEmbedder {
    pub dimension: usize,
    pub message: String,
}

impl FailingEmbedder {
    pub fn new(dimension: usize, message: impl Into<String>) -> Self {
        Self {
            dimension,
            message: message.into(),
        }
    }
}

impl EmbeddingProvider for FailingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn fingerprint(&self) -> String {
        "failing-embedder".to_string()
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Err(EmbedError::Provider {
            text_id: text.chars().take(24).collect(),
            message: self.message.clone(),
            retryable: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_finite_components() {
        assert_eq!(
            EmbeddingVector::new(alloc::vec![1.0, f64::NAN]),
            Err(EmbedError::NonFinite(1))
        );
    }

    #[test]
    fn cosine_basic_cases() {
        let v = ev(&[3.0, 4.0]);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);

        let e1 = ev(&[1.0, 0.0]);
        let e2 = ev(&[0.0, 1.0]);
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);

        let neg = ev(&[-3.0, -4.0]);
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_degenerate_norm_is_zero() {
        let zero = ev(&[0.0, 0.0]);
        let v = ev(&[1.0, 2.0]);
        assert_eq!(cosine_similarity(&zero, &v).unwrap(), 0.0);
    }

    #[test]
    fn cosine_dimension_mismatch_errors() {
        let a = ev(&[1.0, 2.0]);
        let b = ev(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(EmbedError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hash_embedder_is_deterministic() {
        let provider = HashEmbedder::default();
        let a = embed(&provider, "abc").unwrap();
        let b = embed(&provider, "abc").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dimension(), 64);
    }

    #[test]
    fn distinct_texts_are_not_identical_directions() {
        let provider = HashEmbedder::default();
        let a = embed(&provider, "navigate the maze grid").unwrap();
        let b = embed(&provider, "transcribe the receipt total").unwrap();
        assert!(cosine_similarity(&a, &b).unwrap() < 1.0);
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let provider = HashEmbedder::default();
        let a = embed(&provider, "check the grid dimension before simulating the path").unwrap();
        let b = embed(&provider, "check the grid dimension before tracing the path").unwrap();
        let c = embed(&provider, "upload the photo to the search api").unwrap();
        let close = cosine_similarity(&a, &b).unwrap();
        let far = cosine_similarity(&a, &c).unwrap();
        assert!(close > far, "close={close} far={far}");
        assert!(close > 0.7);
    }

    #[test]
    fn embed_rejects_blank_text() {
        let provider = HashEmbedder::default();
        assert_eq!(embed(&provider, "  \t\n"), Err(EmbedError::EmptyText));
    }

    #[test]
    fn hash_embedder_matches_documented_construction() {
        // Independent re-derivation of the token-hash-bag construction for
        // a two-token text.
        let provider = HashEmbedder::new(8);
        let got = embed(&provider, "alpha beta").unwrap();

        let mut expected = [0.0f64; 8];
        for token in ["alpha", "beta"] {
            let h = fnv1a64(token.as_bytes());
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            expected[(h % 8) as usize] += sign;
        }
        let norm = expected.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut expected {
            *v /= norm;
        }
        assert_eq!(got.as_slice(), &expected);
    }
}
