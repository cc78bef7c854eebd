//! Deterministic local embeddings and vector math.
//!
//! The mock embedder maps a text to a fixed-dimension vector by hashing its
//! lowercased alphanumeric tokens into buckets (FNV-1a, with the hash's top
//! bit choosing the sign) and L2-normalizing the result. Identical texts get
//! identical vectors on every platform. Planted vectors override the hash
//! for exact texts, letting tests pin similarity rankings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BackendError;

/// Default dimension of mock embeddings.
pub const DEFAULT_EMBED_DIM: usize = 256;

/// One embedding with the id of the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

/// Cosine similarity. Zero-norm inputs yield 0.0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "cosine over mismatched dimensions");
    if a.len() != b.len() {
        return 0.0;
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    dot / (norm_a.sqrt() * norm_b.sqrt())
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

fn hashed_bag_of_words(text: &str, dim: usize) -> Vec<f64> {
    let mut values = vec![0.0; dim];
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let lowered = token.to_lowercase();
        let hash = fnv1a64(lowered.as_bytes());
        let index = (hash % dim as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
        values[index] += sign;
    }
    let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for value in &mut values {
            *value /= norm;
        }
    }
    values
}

pub(super) struct MockEmbedder {
    dim: usize,
    planted: BTreeMap<String, Vec<f64>>,
}

impl MockEmbedder {
    pub(super) fn new(
        dim: usize,
        planted: BTreeMap<String, Vec<f64>>,
    ) -> Result<MockEmbedder, BackendError> {
        if dim == 0 {
            return Err(BackendError::Config(
                "embedding dimension must be positive".to_string(),
            ));
        }
        for (text, vector) in &planted {
            if vector.len() != dim {
                return Err(BackendError::Config(format!(
                    "planted vector for {text:?} has dimension {}, expected {dim}",
                    vector.len()
                )));
            }
        }
        Ok(MockEmbedder { dim, planted })
    }

    pub(super) fn embed_one(&self, text: &str) -> Vec<f64> {
        if let Some(vector) = self.planted.get(text) {
            return vector.clone();
        }
        hashed_bag_of_words(text, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_embed_identically() {
        let embedder = MockEmbedder::new(DEFAULT_EMBED_DIM, BTreeMap::new()).unwrap();
        let a = embedder.embed_one("the quick brown fox");
        let b = embedder.embed_one("the quick brown fox");
        assert_eq!(a, b);
        assert_eq!(a.len(), DEFAULT_EMBED_DIM);
    }

    #[test]
    fn self_similarity_is_one() {
        let embedder = MockEmbedder::new(DEFAULT_EMBED_DIM, BTreeMap::new()).unwrap();
        let v = embedder.embed_one("a nontrivial sentence with several words");
        assert!((cosine_similarity(&v, &v) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn different_texts_usually_differ() {
        let embedder = MockEmbedder::new(DEFAULT_EMBED_DIM, BTreeMap::new()).unwrap();
        let a = embedder.embed_one("completely unrelated words here");
        let b = embedder.embed_one("orthogonal vocabulary tokens instead");
        assert!(cosine_similarity(&a, &b) < 0.99);
    }

    #[test]
    fn shared_vocabulary_scores_higher_than_disjoint() {
        let embedder = MockEmbedder::new(DEFAULT_EMBED_DIM, BTreeMap::new()).unwrap();
        let query = embedder.embed_one("volcanic eruption in iceland");
        let near = embedder.embed_one("the volcanic eruption covered iceland in ash");
        let far = embedder.embed_one("quarterly earnings exceeded analyst expectations");
        assert!(
            cosine_similarity(&query, &near) > cosine_similarity(&query, &far),
            "shared-vocabulary text should rank above disjoint text"
        );
    }

    #[test]
    fn empty_text_embeds_to_zero_vector() {
        let embedder = MockEmbedder::new(16, BTreeMap::new()).unwrap();
        let v = embedder.embed_one("");
        assert!(v.iter().all(|&x| x == 0.0));
        assert_eq!(cosine_similarity(&v, &v), 0.0);
    }

    #[test]
    fn opposite_sign_collision_cancels_to_zero_vector() {
        // "078" and "e6r" land in the same bucket at dim 256 with opposite
        // signs, so their bag-of-words sum cancels exactly.
        let embedder = MockEmbedder::new(DEFAULT_EMBED_DIM, BTreeMap::new()).unwrap();
        let v = embedder.embed_one("078 e6r");
        assert!(v.iter().all(|&x| x == 0.0));
        let w = embedder.embed_one("some ordinary text");
        assert_eq!(cosine_similarity(&v, &w), 0.0);
        assert_eq!(cosine_similarity(&v, &v), 0.0);
    }

    #[test]
    fn planted_vectors_override_hashing() {
        let mut planted = BTreeMap::new();
        planted.insert("special text".to_string(), vec![1.0, 0.0]);
        let embedder = MockEmbedder::new(2, planted).unwrap();
        assert_eq!(embedder.embed_one("special text"), vec![1.0, 0.0]);
        assert_ne!(embedder.embed_one("other text"), vec![1.0, 0.0]);
    }

    #[test]
    fn planted_dimension_mismatch_is_a_config_error() {
        let mut planted = BTreeMap::new();
        planted.insert("text".to_string(), vec![1.0, 0.0, 0.0]);
        assert!(MockEmbedder::new(2, planted).is_err());
    }

    #[test]
    fn cosine_handles_orthogonal_and_opposite() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine_similarity(&[1.0, 0.0], &[-1.0, 0.0]) + 1.0).abs() < 1e-12);
    }
}
