//! Exact cosine nearest-neighbour retrieval over sentence embeddings.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Invalid vector input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    /// Vectors of different length.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch {
        /// First length.
        left: usize,
        /// Second length.
        right: usize,
    },
    /// A vector with zero norm (or an empty one).
    #[error("zero-norm vector")]
    ZeroVector,
    /// A vector containing NaN or infinity.
    #[error("non-finite vector component")]
    NonFinite,
    /// Index entry stored twice under one id.
    #[error("duplicate index entry `{0}`")]
    DuplicateId(String),
}

fn norm(v: &[f64]) -> Result<f64, SimilarityError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SimilarityError::NonFinite);
    }
    let n = v.iter().map(|x| x * x).sum::<f64>();
    let n = libm::sqrt(n);
    if n == 0.0 {
        Err(SimilarityError::ZeroVector)
    } else {
        Ok(n)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    let (na, nb) = (norm(a)?, norm(b)?);
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// One stored sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    /// Sentence id.
    pub id: String,
    /// Embedding.
    pub vector: Vec<f64>,
    norm: f64,
}

/// A retrieved neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    /// Sentence id.
    pub id: String,
    /// Position of the entry in the index.
    pub position: usize,
    /// Cosine similarity to the query.
    pub similarity: f64,
    /// 1 for the nearest.
    pub rank: usize,
}

/// Flat exact index, one entry per corpus sentence, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    model: String,
    dim: Option<usize>,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    /// Empty index for vectors of one embedding model.
    pub fn new(model: impl Into<String>) -> Self {
        Self { model: model.into(), dim: None, entries: Vec::new() }
    }

    /// Appends a vector; all vectors must share one dimension and be non-zero.
    pub fn push(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<(), SimilarityError> {
        let id = id.into();
        if let Some(dim) = self.dim {
            if dim != vector.len() {
                return Err(SimilarityError::DimensionMismatch { left: dim, right: vector.len() });
            }
        }
        if self.entries.iter().any(|e| e.id == id) {
            return Err(SimilarityError::DuplicateId(id));
        }
        let n = norm(&vector)?;
        self.dim = Some(vector.len());
        self.entries.push(IndexEntry { id, vector, norm: n });
        Ok(())
    }

    /// Embedding model name.
    pub fn model(&self) -> &str {
        &self.model
    }

    /// Vector dimension, once known.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Stored entries in insertion order.
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when empty.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `min(k, len)` entries most similar to `query`, most similar first,
    /// ties in insertion order. Exhaustive scan.
    pub fn retrieve_knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>, SimilarityError> {
        if let Some(dim) = self.dim {
            if dim != query.len() {
                return Err(SimilarityError::DimensionMismatch { left: dim, right: query.len() });
            }
        }
        let qn = norm(query)?;
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, (dot(&e.vector, query) / (e.norm * qn)).clamp(-1.0, 1.0)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(r, (i, similarity))| Neighbor {
                id: self.entries[i].id.clone(),
                position: i,
                similarity,
                rank: r + 1,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        // 1/sqrt(2) by hand
        assert!((v - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(SimilarityError::ZeroVector));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(SimilarityError::DimensionMismatch { .. })
        ));
        assert_eq!(cosine_similarity(&[f64::NAN], &[1.0]), Err(SimilarityError::NonFinite));
    }

    #[test]
    fn knn_clamps_and_orders() {
        let mut idx = VectorIndex::new("m");
        idx.push("a", vec![1.0, 0.0]).unwrap();
        idx.push("b", vec![0.0, 1.0]).unwrap();
        idx.push("c", vec![1.0, 1.0]).unwrap();
        let hits = idx.retrieve_knn(&[0.0, 2.0], 10).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert_eq!(hits[0].similarity, 1.0);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let mut idx = VectorIndex::new("m");
        for id in ["x", "y", "z"] {
            idx.push(id, vec![1.0, 0.0]).unwrap();
        }
        let ids: Vec<_> = idx.retrieve_knn(&[1.0, 0.0], 2).unwrap().into_iter().map(|h| h.id).collect();
        assert_eq!(ids, ["x", "y"]);
    }

    #[test]
    fn index_validates_entries() {
        let mut idx = VectorIndex::new("m");
        idx.push("a", vec![1.0, 0.0]).unwrap();
        assert!(idx.push("b", vec![1.0]).is_err());
        assert!(idx.push("a", vec![0.0, 1.0]).is_err());
        assert_eq!(idx.push("c", vec![0.0, 0.0]), Err(SimilarityError::ZeroVector));
        assert!(idx.retrieve_knn(&[1.0], 1).is_err());
        assert_eq!(idx.len(), 1);
    }
}
