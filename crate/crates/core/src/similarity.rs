//! Max-cosine branch scoring, convex branch weighting and the Gaussian
//! attention mask kernel.

use serde::{Deserialize, Serialize};

use crate::matrix::{Matrix, SimilarityMatrix};
use crate::numeric::{compensated_sum, ensure_finite};
use crate::{Error, Result};

/// Norms below this are treated as zero vectors.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingRole {
    Frame,
    Clip,
    Query,
}

/// A set of same-dimension, nonzero embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: Vec<Vec<f64>>,
    role: EmbeddingRole,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>, role: EmbeddingRole) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Input("embedding set needs at least one vector of dimension >= 1".into()));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Input(format!(
                    "embedding {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            ensure_finite(v, "embedding")?;
            if norm(v) < MIN_NORM {
                return Err(Error::Input(format!("embedding {i} is a zero vector")));
            }
        }
        Ok(Self { vectors, role })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn role(&self) -> EmbeddingRole {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn norm(v: &[f64]) -> f64 {
    compensated_sum(v.iter().map(|x| x * x)).sqrt()
}

/// Cosine similarity; rejects zero vectors and dimension mismatches.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(Error::Input("cosine of a zero vector".into()));
    }
    let dot = compensated_sum(a.iter().zip(b).map(|(x, y)| x * y));
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `max_k cos(q, v_k)` over the bank.
pub fn branch_similarity(query: &[f64], bank: &EmbeddingSet) -> Result<f64> {
    ensure_finite(query, "query embedding")?;
    bank.vectors
        .iter()
        .map(|v| cosine(query, v))
        .try_fold(f64::NEG_INFINITY, |best, c| Ok(best.max(c?)))
}

/// Query-by-video matrix of branch similarities.
pub fn branch_similarity_matrix(
    queries: &EmbeddingSet,
    banks: &[EmbeddingSet],
) -> Result<SimilarityMatrix> {
    let mut data = Vec::with_capacity(queries.len() * banks.len());
    for q in &queries.vectors {
        for bank in banks {
            data.push(branch_similarity(q, bank)?);
        }
    }
    Matrix::from_vec(queries.len(), banks.len(), data)
}

/// Convex weights of the frame and clip branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchWeights {
    pub alpha_f: f64,
    pub alpha_c: f64,
}

impl Default for BranchWeights {
    fn default() -> Self {
        Self {
            alpha_f: 0.5,
            alpha_c: 0.5,
        }
    }
}

impl BranchWeights {
    pub fn new(alpha_f: f64, alpha_c: f64) -> Result<Self> {
        let w = Self { alpha_f, alpha_c };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.alpha_f) || !in_unit(self.alpha_c) {
            return Err(Error::Config(format!(
                "branch weights must lie in [0, 1], got ({}, {})",
                self.alpha_f, self.alpha_c
            )));
        }
        if (self.alpha_f + self.alpha_c - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "branch weights must sum to 1, got {}",
                self.alpha_f + self.alpha_c
            )));
        }
        Ok(())
    }
}

pub fn overall_similarity(s_f: f64, s_c: f64, w: &BranchWeights) -> f64 {
    w.alpha_f * s_f + w.alpha_c * s_c
}

/// Elementwise convex combination of two same-shape score matrices.
pub fn overall_similarity_matrix(
    s_f: &SimilarityMatrix,
    s_c: &SimilarityMatrix,
    w: &BranchWeights,
) -> Result<SimilarityMatrix> {
    if (s_f.rows(), s_f.cols()) != (s_c.rows(), s_c.cols()) {
        return Err(Error::Input("frame and clip score matrices differ in shape".into()));
    }
    Ok(Matrix::from_fn(s_f.rows(), s_f.cols(), |i, j| {
        overall_similarity(s_f.get(i, j), s_c.get(i, j), w)
    }))
}

/// `M(i, j) = exp(−(j − i)² / σ²) / 2π`.
pub fn gaussian_mask(n: usize, sigma: f64) -> Result<Matrix> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    if n == 0 {
        return Err(Error::Input("mask size must be at least 1".into()));
    }
    let scale = 1.0 / (2.0 * std::f64::consts::PI);
    let sigma2 = sigma * sigma;
    let band: Vec<f64> = (0..n)
        .map(|d| scale * (-((d * d) as f64) / sigma2).exp())
        .collect();
    Ok(Matrix::from_fn(n, n, |i, j| band[i.abs_diff(j)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank(v: Vec<Vec<f64>>) -> EmbeddingSet {
        EmbeddingSet::new(v, EmbeddingRole::Clip).unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let b = bank(vec![vec![0.3, -1.2, 2.0], vec![1.0, 0.0, 0.0]]);
        assert!((branch_similarity(&[0.3, -1.2, 2.0], &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_query_scores_zero() {
        let b = bank(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!(branch_similarity(&[0.0, 0.0, 2.0], &b).unwrap(), 0.0);
    }

    #[test]
    fn max_picks_the_aligned_vector() {
        let b = bank(vec![vec![1.0, 2.0], vec![-1.0, -2.0]]);
        assert!((branch_similarity(&[1.0, 2.0], &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_and_mismatched_vectors() {
        assert!(EmbeddingSet::new(vec![vec![0.0, 0.0]], EmbeddingRole::Frame).is_err());
        assert!(EmbeddingSet::new(vec![vec![1.0], vec![1.0, 2.0]], EmbeddingRole::Frame).is_err());
        let b = bank(vec![vec![1.0, 0.0]]);
        assert!(branch_similarity(&[0.0, 0.0], &b).is_err());
        assert!(branch_similarity(&[1.0, 0.0, 0.0], &b).is_err());
    }

    #[test]
    fn overall_examples() {
        let w = BranchWeights::default();
        assert!((overall_similarity(0.4, 0.8, &w) - 0.6).abs() < 1e-15);
        let w = BranchWeights::new(1.0, 0.0).unwrap();
        assert_eq!(overall_similarity(0.4, 0.8, &w), 0.4);
        assert!(BranchWeights::new(0.7, 0.4).is_err());
        assert!(BranchWeights::new(-0.5, 1.5).is_err());
    }

    #[test]
    fn mask_entries() {
        let m = gaussian_mask(5, 1.3).unwrap();
        let diag = 1.0 / (2.0 * std::f64::consts::PI);
        for i in 0..5 {
            assert_eq!(m.get(i, i), diag);
        }
        assert!((m.get(0, 1) - diag * (-1.0 / 1.69f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn mask_frozen_n4_sigma2() {
        // (1/2π)·exp(−d²/4) for d = 0..3
        let band = [
            0.159_154_943_091_895_34,
            0.123_949_994_309_652_98,
            0.058_549_831_524_319_16,
            0.016_774_807_587_073_417,
        ];
        let m = gaussian_mask(4, 2.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((m.get(i, j) - band[i.abs_diff(j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mask_is_symmetric_toeplitz_and_decreasing() {
        let m = gaussian_mask(7, 2.5).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(m.get(i, j), m.get(j, i));
                if i > 0 && j > 0 {
                    assert_eq!(m.get(i, j), m.get(i - 1, j - 1));
                }
            }
        }
        for j in 1..7 {
            assert!(m.get(0, j) < m.get(0, j - 1));
        }
        let flat = gaussian_mask(6, 1e6).unwrap();
        let diag = 1.0 / (2.0 * std::f64::consts::PI);
        assert!(flat.as_slice().iter().all(|v| (v - diag).abs() < 1e-9));
        assert!(gaussian_mask(4, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn branch_similarity_is_scale_invariant(
            q in prop::collection::vec(-1.0f64..1.0, 4),
            vs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..6),
            scale in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&q) > 1e-3 && vs.iter().all(|v| norm(v) > 1e-3));
            let base = branch_similarity(&q, &bank(vs.clone())).unwrap();
            let scaled_bank = bank(vs.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect());
            let qs: Vec<f64> = q.iter().map(|x| x * scale).collect();
            prop_assert!((branch_similarity(&qs, &scaled_bank).unwrap() - base).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&base));
        }

        #[test]
        fn overall_is_convex_and_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0, w in 0.0f64..1.0, d in 0.0f64..1.0) {
            let weights = BranchWeights { alpha_f: w, alpha_c: 1.0 - w };
            let s = overall_similarity(a, b, &weights);
            prop_assert!(s >= a.min(b) - 1e-15 && s <= a.max(b) + 1e-15);
            prop_assert!(overall_similarity(a + d, b, &weights) >= s);
            prop_assert!(overall_similarity(a, b + d, &weights) >= s);
        }
    }
}
