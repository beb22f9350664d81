//! Text encoders producing unit-length vectors, and inner-product similarity.
//!
//! The default encoder is a deterministic feature-hashing model: lowercase
//! word unigrams and bigrams are hashed into `d` buckets, counted, and the
//! count vector is L2-normalized. Empty text maps to the all-zero vector.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::EmbeddingError;
use crate::provider::LanguageModel;

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    /// Scales `values` to unit length. The zero vector stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Self(values)
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

/// Dot product, accumulated in ascending index order so the result is
/// bit-identical for either argument order.
pub fn similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch { left: a.dimension(), right: b.dimension() });
    }
    let mut acc = 0.0;
    for i in 0..a.0.len() {
        acc += a.0[i] * b.0[i];
    }
    Ok(acc)
}

#[derive(Clone)]
pub enum Encoder {
    HashedLocal { dimension: usize },
    Remote { model: Arc<dyn LanguageModel> },
}

impl fmt::Debug for Encoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encoder::HashedLocal { dimension } => write!(f, "HashedLocal({dimension})"),
            Encoder::Remote { .. } => f.write_str("Remote"),
        }
    }
}

impl Default for Encoder {
    fn default() -> Self {
        Encoder::HashedLocal { dimension: DEFAULT_DIMENSION }
    }
}

impl Encoder {
    pub fn hashed(dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension < 8 {
            return Err(EmbeddingError::InvalidDimension(dimension));
        }
        Ok(Encoder::HashedLocal { dimension })
    }

    pub fn remote(model: Arc<dyn LanguageModel>) -> Self {
        Encoder::Remote { model }
    }

    pub fn encode(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        match self {
            Encoder::HashedLocal { dimension } => Ok(hashed_encode(*dimension, text)),
            Encoder::Remote { model } => Ok(model.embed(text)?),
        }
    }
}

/// Lowercased runs of alphanumerics and underscores.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn hashed_encode(dimension: usize, text: &str) -> EmbeddingVector {
    let words = words(text);
    if words.is_empty() {
        return EmbeddingVector::zeros(dimension);
    }
    let mut counts = vec![0.0; dimension];
    let bucket = |token: &[u8]| (fnv1a64(token) % dimension as u64) as usize;
    for w in &words {
        counts[bucket(w.as_bytes())] += 1.0;
    }
    for pair in words.windows(2) {
        // \x1f never occurs inside a word
        let token = format!("{}\u{1f}{}", pair[0], pair[1]);
        counts[bucket(token.as_bytes())] += 1.0;
    }
    EmbeddingVector::normalized(counts)
}

/// 64-bit FNV-1a.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
