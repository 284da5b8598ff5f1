//! Synthetic batches with planted query archetypes.
//!
//! Score distributions per archetype (scores are cosine-like):
//!
//! | archetype | labelled video | distractors | other videos |
//! |-----------|----------------|-------------|--------------|
//! | precise | U(0.7, 0.9) | none | U(0.0, 0.2) |
//! | polysemous | U(0.6, 0.8) | 2–3 videos, U(0.6, 0.8) | U(0.0, 0.2) |
//! | under-determined | U(0.0, 0.15) | none | U(0.0, 0.15) |
//!
//! Frame and clip branches draw independently from the same archetype; a
//! polysemous query's distractor set is shared by both branches. Inside each
//! video, every annotated query gets one contiguous span of relevant clips
//! scoring U(0.5, 0.9) while the remaining clips score U(0.0, 0.3).

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::instance::{ClipQueryMatrix, Instance};
use super::rng::{stream, StreamKind};
use crate::identification::QueryCategory;
use crate::matrix::Matrix;
use crate::{Error, Result};

/// Fractions of precise, polysemous and under-determined queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeMix {
    pub precise: f64,
    pub polysemous: f64,
    pub under_determined: f64,
}

impl ArchetypeMix {
    pub fn balanced() -> Self {
        Self {
            precise: 1.0 / 3.0,
            polysemous: 1.0 / 3.0,
            under_determined: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.precise, self.polysemous, self.under_determined];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!("mix fractions must be >= 0, got {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mix fractions must sum to 1, got {total}")));
        }
        Ok(())
    }

    /// Largest-remainder allocation of `n` queries.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let parts = [self.precise, self.polysemous, self.under_determined];
        let mut counts = [0usize; 3];
        let mut remainders = [(0.0f64, 0usize); 3];
        for (i, p) in parts.iter().enumerate() {
            let exact = p * n as f64;
            counts[i] = exact.floor() as usize;
            remainders[i] = (exact - exact.floor(), i);
        }
        let missing = n - counts.iter().sum::<usize>();
        remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in remainders.iter().take(missing) {
            counts[i] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_queries: usize,
    pub n_videos: usize,
    pub n_clips: usize,
    pub mix: ArchetypeMix,
    pub seed: u64,
    /// Dimension of the generated query embeddings; 0 omits them.
    pub embedding_dim: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_queries: 300,
            n_videos: 40,
            n_clips: 12,
            mix: ArchetypeMix::balanced(),
            seed: 0,
            embedding_dim: 16,
        }
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Instance> {
    if spec.n_queries == 0 || spec.n_videos == 0 || spec.n_clips == 0 {
        return Err(Error::Config("query, video and clip counts must be at least 1".into()));
    }
    spec.mix.validate()?;
    let (n, k, seed) = (spec.n_queries, spec.n_videos, spec.seed);

    let [np, nn, _] = spec.mix.counts(n);
    let mut planted: Vec<QueryCategory> = (0..n)
        .map(|i| {
            if i < np {
                QueryCategory::Precise
            } else if i < np + nn {
                QueryCategory::Polysemous
            } else {
                QueryCategory::UnderDetermined
            }
        })
        .collect();
    planted.shuffle(&mut stream(seed, StreamKind::Assignment, 0));

    let mut label_rng = stream(seed, StreamKind::Labels, 0);
    let labels: Vec<usize> = (0..n).map(|_| label_rng.random_range(0..k)).collect();

    let distractors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if planted[i] != QueryCategory::Polysemous || k == 1 {
                return Vec::new();
            }
            let mut rng = stream(seed, StreamKind::Distractors, i as u64);
            let count = rng.random_range(2..=3).min(k - 1);
            index::sample(&mut rng, k - 1, count)
                .into_iter()
                .map(|j| if j >= labels[i] { j + 1 } else { j })
                .collect()
        })
        .collect();

    let branch = |kind: StreamKind| -> Matrix {
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            let mut rng = stream(seed, kind, i as u64);
            for j in 0..k {
                let s = match planted[i] {
                    QueryCategory::Precise if j == labels[i] => rng.random_range(0.7..0.9),
                    QueryCategory::Polysemous if j == labels[i] || distractors[i].contains(&j) => {
                        rng.random_range(0.6..0.8)
                    }
                    QueryCategory::UnderDetermined => rng.random_range(0.0..0.15),
                    _ => rng.random_range(0.0..0.2),
                };
                data.push(s);
            }
        }
        Matrix::from_vec(n, k, data).expect("shape")
    };
    let s_f = branch(StreamKind::FrameScores);
    let s_c = branch(StreamKind::ClipScores);

    let mut clip_query = BTreeMap::new();
    for v in 0..k {
        let queries: Vec<usize> = (0..n).filter(|&i| labels[i] == v).collect();
        if queries.is_empty() {
            continue;
        }
        let mut rng = stream(seed, StreamKind::ClipQuery, v as u64);
        let m_c = spec.n_clips;
        let mut scores = Matrix::zeros(m_c, queries.len());
        for col in 0..queries.len() {
            let len = rng.random_range(1..=(m_c / 2).max(1));
            let start = rng.random_range(0..=m_c - len);
            for clip in 0..m_c {
                let s = if (start..start + len).contains(&clip) {
                    rng.random_range(0.5..0.9)
                } else {
                    rng.random_range(0.0..0.3)
                };
                scores.set(clip, col, s);
            }
        }
        clip_query.insert(v, ClipQueryMatrix { queries, scores });
    }

    let query_embeddings = (spec.embedding_dim > 0).then(|| {
        let d = spec.embedding_dim;
        let centres: Vec<Vec<f64>> = (0..k)
            .map(|v| {
                let mut rng = stream(seed, StreamKind::Embeddings, v as u64);
                (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
            })
            .collect();
        (0..n)
            .map(|i| {
                let mut rng = stream(seed, StreamKind::Embeddings, (k + i) as u64);
                loop {
                    let q: Vec<f64> = centres[labels[i]]
                        .iter()
                        .map(|c| c + 0.8 * rng.random_range(-1.0..1.0))
                        .collect();
                    if q.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
                        break q;
                    }
                }
            })
            .collect()
    });

    Ok(Instance {
        s_f,
        s_c,
        labels,
        clip_query,
        query_embeddings,
        planted: Some(planted),
    })
}
