//! Label calibration, the evidential least-squares loss and its gradient,
//! the inter- and intra-video objectives, the basic retrieval losses and the
//! two-stage aggregate.

use serde::{Deserialize, Serialize};

use crate::evidence::{evidence_to_opinion, similarities_to_evidence, DirichletParams};
use crate::identification::{PartitionSet, QueryCategory};
use crate::matrix::SimilarityMatrix;
use crate::numeric::{compensated_sum, log_sum_exp, softmax};
use crate::similarity::{cosine, EmbeddingSet};
use crate::transport::PlanLabels;
use crate::{Error, Result};

/// Default calibration strength γ.
pub const DEFAULT_GAMMA: f64 = 0.2;

const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Hyperparameters of the basic retrieval losses.
///
/// None of these values are fixed by the method itself; the defaults are
/// commonly used starting points and should be tuned per dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub margin: f64,
    pub lambda_c: f64,
    pub lambda_f: f64,
    pub diversity_delta: f64,
    pub diversity_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            lambda_c: 0.02,
            lambda_f: 0.02,
            diversity_delta: 0.15,
            diversity_scale: 32.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("margin", self.margin),
            ("lambda_c", self.lambda_c),
            ("lambda_f", self.lambda_f),
            ("diversity_delta", self.diversity_delta),
            ("diversity_scale", self.diversity_scale),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Training stage: warm-up without calibration and intra-video loss, then full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    WarmUp,
    Full,
}

impl TryFrom<u8> for Stage {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Stage::WarmUp),
            2 => Ok(Stage::Full),
            _ => Err(Error::Config(format!("stage must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        match s {
            Stage::WarmUp => 1,
            Stage::Full => 2,
        }
    }
}

/// Per-query target distributions over K candidates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CalibratedLabels {
    rows: Vec<Vec<f64>>,
}

impl CalibratedLabels {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            check_probability_row(r).map_err(|e| e.at_query(i))?;
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn check_probability_row(row: &[f64]) -> Result<()> {
    if row.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::Input("label row has negative or non-finite entries".into()));
    }
    let total = compensated_sum(row.iter().copied());
    if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(Error::Input(format!("label row sums to {total}, expected 1")));
    }
    Ok(())
}

/// Polysemous queries get `(1 − γ) y + (γ/2)(σ(s^f) + σ(s^c))`; all other
/// rows are copied through unchanged.
pub fn calibrate_labels(
    partition: &PartitionSet,
    labels: &[Vec<f64>],
    s_f: &SimilarityMatrix,
    s_c: &SimilarityMatrix,
    gamma: f64,
) -> Result<CalibratedLabels> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let n = partition.query_count();
    if labels.len() != n || s_f.rows() != n || s_c.rows() != n {
        return Err(Error::Input(format!(
            "shape mismatch: partition {n}, labels {}, frame rows {}, clip rows {}",
            labels.len(),
            s_f.rows(),
            s_c.rows()
        )));
    }
    let mut rows = Vec::with_capacity(n);
    for (i, y) in labels.iter().enumerate() {
        if y.len() != s_f.cols() || y.len() != s_c.cols() {
            return Err(Error::Input(format!(
                "label row has {} entries but scores have {} / {} columns",
                y.len(),
                s_f.cols(),
                s_c.cols()
            ))
            .at_query(i));
        }
        if partition.category(i) != QueryCategory::Polysemous {
            rows.push(y.clone());
            continue;
        }
        let pf = softmax(s_f.row(i));
        let pc = softmax(s_c.row(i));
        rows.push(
            y.iter()
                .zip(pf.iter().zip(&pc))
                .map(|(&yj, (&a, &b))| (1.0 - gamma) * yj + 0.5 * gamma * (a + b))
                .collect(),
        );
    }
    CalibratedLabels::new(rows)
}

fn check_target(alpha: &DirichletParams, target: &[f64]) -> Result<()> {
    if alpha.len() != target.len() {
        return Err(Error::Input(format!(
            "target has {} entries, Dirichlet has {}",
            target.len(),
            alpha.len()
        )));
    }
    check_probability_row(target)
}

/// `E‖ŷ − p‖²` under `p ~ Dir(α)`:
/// `Σ_j (ŷ_j − α_j/S)² + α_j (S − α_j) / (S² (S + 1))`.
pub fn evidential_loss(alpha: &DirichletParams, target: &[f64]) -> Result<f64> {
    check_target(alpha, target)?;
    let s = alpha.strength();
    let denom = s * s * (s + 1.0);
    Ok(compensated_sum(alpha.alpha().iter().zip(target).map(
        |(&a, &y)| {
            let bias = y - a / s;
            bias * bias + a * (s - a) / denom
        },
    )))
}

/// Analytic `∂L/∂α` of [`evidential_loss`].
pub fn evidential_loss_grad(alpha: &DirichletParams, target: &[f64]) -> Result<Vec<f64>> {
    check_target(alpha, target)?;
    let s = alpha.strength();
    let a = alpha.alpha();
    let p: Vec<f64> = a.iter().map(|x| x / s).collect();
    // bias: (2/S)[(p_k − y_k) − Σ_j (p_j − y_j) p_j]
    let centred = compensated_sum(p.iter().zip(target).map(|(pj, yj)| (pj - yj) * pj));
    // variance: 1/(S+1) − Q/(S²(S+1)) with Q = Σ α²
    let q = compensated_sum(a.iter().map(|x| x * x));
    let s1 = s + 1.0;
    let common = -1.0 / (s1 * s1) + q * (3.0 * s + 2.0) / (s * s * s * s1 * s1);
    Ok(a.iter()
        .zip(p.iter().zip(target))
        .map(|(&ak, (&pk, &yk))| {
            2.0 / s * ((pk - yk) - centred) + common - 2.0 * ak / (s * s * s1)
        })
        .collect())
}

/// Inter-video loss, mean over queries of `L(α^f) + L(α^c) + L(α^o)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterLoss {
    pub mean: f64,
    /// `[frame, clip, fused]` per query.
    pub per_query: Vec<[f64; 3]>,
}

pub fn inter_loss(
    alpha_f: &[DirichletParams],
    alpha_c: &[DirichletParams],
    alpha_o: &[DirichletParams],
    targets: &[Vec<f64>],
) -> Result<InterLoss> {
    let n = targets.len();
    if alpha_f.len() != n || alpha_c.len() != n || alpha_o.len() != n {
        return Err(Error::Input(format!(
            "inter loss needs one parameter set per query: {} / {} / {} for {n} targets",
            alpha_f.len(),
            alpha_c.len(),
            alpha_o.len()
        )));
    }
    let per_query = (0..n)
        .map(|i| {
            let y = &targets[i];
            Ok([
                evidential_loss(&alpha_f[i], y)?,
                evidential_loss(&alpha_c[i], y)?,
                evidential_loss(&alpha_o[i], y)?,
            ])
        })
        .enumerate()
        .map(|(i, r): (usize, Result<[f64; 3]>)| r.map_err(|e| e.at_query(i)))
        .collect::<Result<Vec<_>>>()?;
    let mean = mean(per_query.iter().map(|t| t[0] + t[1] + t[2]), n);
    Ok(InterLoss { mean, per_query })
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        compensated_sum(values) / n as f64
    }
}

/// Intra-video loss for one clip-by-query matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntraLoss {
    pub mean: f64,
    /// Loss per query column; `None` for columns excluded by the plan.
    pub per_query: Vec<Option<f64>>,
    /// Set when every column was excluded and the mean defaulted to zero.
    pub all_excluded: bool,
}

/// Per query column: scores over clips → evidence → M_c-way Dirichlet,
/// scored against the plan-derived clip distribution.
pub fn intra_loss(
    clip_query: &SimilarityMatrix,
    plan_labels: &PlanLabels,
    tau: f64,
) -> Result<IntraLoss> {
    if plan_labels.columns.len() != clip_query.cols() {
        return Err(Error::Input(format!(
            "plan labels cover {} queries, similarity matrix has {}",
            plan_labels.columns.len(),
            clip_query.cols()
        )));
    }
    let mut per_query = vec![None; clip_query.cols()];
    for (j, label) in plan_labels.included() {
        let (alpha, _) = evidence_to_opinion(&similarities_to_evidence(&clip_query.column(j), tau)?);
        per_query[j] = Some(evidential_loss(&alpha, label).map_err(|e| e.at_query(j))?);
    }
    let included: Vec<f64> = per_query.iter().flatten().copied().collect();
    Ok(IntraLoss {
        mean: mean(included.iter().copied(), included.len()),
        all_excluded: included.is_empty(),
        per_query,
    })
}

fn check_batch(scores: &SimilarityMatrix, labels: &[usize]) -> Result<()> {
    if labels.is_empty() || scores.rows() == 0 {
        return Err(Error::Input("retrieval loss needs at least one positive pair".into()));
    }
    if labels.len() != scores.rows() {
        return Err(Error::Input(format!(
            "{} labels for {} queries",
            labels.len(),
            scores.rows()
        )));
    }
    if let Some(i) = labels.iter().position(|&l| l >= scores.cols()) {
        return Err(Error::Input("label out of range".into()).at_query(i));
    }
    Ok(())
}

/// Hinge triplet ranking loss with hardest in-batch negatives, mean over
/// positive pairs. Missing negatives contribute nothing.
pub fn triplet_loss(scores: &SimilarityMatrix, labels: &[usize], margin: f64) -> Result<f64> {
    check_batch(scores, labels)?;
    let n = labels.len();
    let terms = labels.iter().enumerate().map(|(i, &v)| {
        let pos = scores.get(i, v);
        let hard_text = (0..n)
            .filter(|&t| labels[t] != v)
            .map(|t| scores.get(t, v))
            .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
        let hard_video = (0..scores.cols())
            .filter(|&j| j != v)
            .map(|j| scores.get(i, j))
            .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
        let hinge = |neg: Option<f64>| neg.map_or(0.0, |s| (margin + s - pos).max(0.0));
        hinge(hard_text) + hinge(hard_video)
    });
    Ok(mean(terms, n))
}

/// InfoNCE in both retrieval directions over exponentiated scores, mean
/// over positive pairs.
pub fn infonce_loss(scores: &SimilarityMatrix, labels: &[usize]) -> Result<f64> {
    check_batch(scores, labels)?;
    let n = labels.len();
    let terms = labels.iter().enumerate().map(|(i, &v)| {
        let pos = scores.get(i, v);
        let text_side = log_sum_exp(
            std::iter::once(pos).chain((0..n).filter(|&t| labels[t] != v).map(|t| scores.get(t, v))),
        );
        let video_side = log_sum_exp(scores.row(i).iter().copied());
        (text_side - pos) + (video_side - pos)
    });
    Ok(mean(terms, n))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Pushes apart distinct queries annotated to the same video:
/// `(1/n) Σ_{i≠j, same video} log(1 + exp(scale · (cos(q_i, q_j) + δ)))`.
pub fn diversity_loss(
    queries: &EmbeddingSet,
    video_of: &[usize],
    delta: f64,
    scale: f64,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Input("diversity loss needs at least one query".into()));
    }
    if video_of.len() != queries.len() {
        return Err(Error::Input(format!(
            "{} video ids for {} queries",
            video_of.len(),
            queries.len()
        )));
    }
    let q = queries.vectors();
    let n = q.len();
    let mut terms = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && video_of[i] == video_of[j] {
                terms.push(softplus(scale * (cosine(&q[i], &q[j])? + delta)));
            }
        }
    }
    Ok(compensated_sum(terms) / n as f64)
}

/// `L^trip_c + L^trip_f + λ_c L^nce_c + λ_f L^nce_f`.
pub fn similarity_loss(
    s_f: &SimilarityMatrix,
    s_c: &SimilarityMatrix,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(triplet_loss(s_c, labels, cfg.margin)?
        + triplet_loss(s_f, labels, cfg.margin)?
        + cfg.lambda_c * infonce_loss(s_c, labels)?
        + cfg.lambda_f * infonce_loss(s_f, labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryLossTerms {
    pub frame: f64,
    pub clip: f64,
    pub fused: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intra: Option<f64>,
}

/// Raw loss terms prior to the stage schedule.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossComponents {
    pub l_sim: f64,
    pub l_div: f64,
    pub l_inter: f64,
    pub l_intra: f64,
    pub per_query: Vec<QueryLossTerms>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub stage: Stage,
    pub l_sim: f64,
    pub l_div: f64,
    pub l_inter: f64,
    pub l_intra: f64,
    pub l_agg: f64,
    pub per_query: Vec<QueryLossTerms>,
}

/// Applies the stage schedule: warm-up drops the intra-video terms.
pub fn aggregate_loss(stage: Stage, components: LossComponents) -> LossReport {
    let LossComponents {
        l_sim,
        l_div,
        l_inter,
        mut l_intra,
        mut per_query,
    } = components;
    if stage == Stage::WarmUp {
        l_intra = 0.0;
        for t in &mut per_query {
            t.intra = None;
        }
    }
    LossReport {
        stage,
        l_sim,
        l_div,
        l_inter,
        l_intra,
        l_agg: l_sim + l_div + l_inter + l_intra,
        per_query,
    }
}
