use std::collections::BTreeMap;

use crate::identification::QueryCategory;
use crate::matrix::SimilarityMatrix;
use crate::numeric::one_hot;
use crate::{Error, Result};

/// Clip-by-query scores inside one video; columns follow `queries`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipQueryMatrix {
    pub queries: Vec<usize>,
    pub scores: SimilarityMatrix,
}

/// A retrieval batch: branch score matrices (queries × videos), annotated
/// labels, and optional intra-video and ground-truth data.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub s_f: SimilarityMatrix,
    pub s_c: SimilarityMatrix,
    pub labels: Vec<usize>,
    /// Keyed by video index.
    pub clip_query: BTreeMap<usize, ClipQueryMatrix>,
    pub query_embeddings: Option<Vec<Vec<f64>>>,
    pub planted: Option<Vec<QueryCategory>>,
}

impl Instance {
    pub fn n_queries(&self) -> usize {
        self.s_f.rows()
    }

    pub fn n_videos(&self) -> usize {
        self.s_f.cols()
    }

    pub fn label_rows(&self) -> Vec<Vec<f64>> {
        self.labels
            .iter()
            .map(|&l| one_hot(l, self.n_videos()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.s_f.rows(), self.s_f.cols());
        if n == 0 || k == 0 {
            return Err(Error::Input("instance needs at least one query and one video".into()));
        }
        if (self.s_c.rows(), self.s_c.cols()) != (n, k) {
            return Err(Error::Input(format!(
                "frame scores are {n}x{k} but clip scores are {}x{}",
                self.s_c.rows(),
                self.s_c.cols()
            )));
        }
        for (what, m) in [("frame", &self.s_f), ("clip", &self.s_c)] {
            if let Some(p) = m.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::Input(format!("{what} score {p} is not finite")).at_query(p / k));
            }
        }
        if self.labels.len() != n {
            return Err(Error::Input(format!("{} labels for {n} queries", self.labels.len())));
        }
        if let Some(i) = self.labels.iter().position(|&l| l >= k) {
            return Err(Error::Input(format!("label {} out of range", self.labels[i])).at_query(i));
        }
        for (&v, cq) in &self.clip_query {
            if v >= k {
                return Err(Error::Input("clip-query matrix for unknown video".into()).at_video(v));
            }
            if cq.scores.cols() != cq.queries.len() || cq.scores.rows() == 0 {
                return Err(Error::Input(format!(
                    "clip-query matrix is {}x{} for {} queries",
                    cq.scores.rows(),
                    cq.scores.cols(),
                    cq.queries.len()
                ))
                .at_video(v));
            }
            if let Some(&q) = cq.queries.iter().find(|&&q| q >= n || self.labels[q] != v) {
                return Err(Error::Input(format!(
                    "query {q} is not annotated to this video"
                ))
                .at_video(v));
            }
            if cq.scores.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(Error::Input("non-finite clip-query score".into()).at_video(v));
            }
        }
        if let Some(e) = &self.query_embeddings {
            if e.len() != n {
                return Err(Error::Input(format!("{} query embeddings for {n} queries", e.len())));
            }
        }
        if let Some(p) = &self.planted {
            if p.len() != n {
                return Err(Error::Input(format!("{} planted categories for {n} queries", p.len())));
            }
        }
        Ok(())
    }
}
