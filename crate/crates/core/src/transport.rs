//! Entropy-regularized optimal transport (maximization form) and the
//! dustbin-augmented variant used for soft clip-query assignment.
//!
//! Sinkhorn runs in the log domain on dual potentials `f`, `g`, so the plan is
//! `Q_ij = exp((S_ij + f_i + g_j) / ε)`, i.e. `Diag(κ₁) exp(S/ε) Diag(κ₂)` with
//! `κ₁ = exp(f/ε)`, `κ₂ = exp(g/ε)`.

use serde::{Deserialize, Serialize};

use crate::matrix::{Matrix, SimilarityMatrix};
use crate::numeric::{compensated_sum, ensure_finite, log_sum_exp};
use crate::{Error, Result};

/// Columns with less total mass than this are treated as fully dustbinned.
pub const EXCLUDED_COLUMN_MASS: f64 = 1e-9;

const MARGINAL_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OTConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    /// L1 tolerance on both marginals.
    pub marginal_tolerance: f64,
    /// Percentile of the similarity entries used as the dustbin score.
    pub dustbin_percentile: f64,
    /// Column mass reserved for the dustbin. `None` spreads the column
    /// marginal uniformly over queries and dustbin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dustbin_mass: Option<f64>,
}

impl Default for OTConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iterations: 500,
            marginal_tolerance: 1e-6,
            dustbin_percentile: 30.0,
            dustbin_mass: None,
        }
    }
}

impl OTConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.marginal_tolerance.is_nan() || self.marginal_tolerance <= 0.0 {
            return Err(Error::Config(format!(
                "marginal_tolerance must be positive, got {}",
                self.marginal_tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        validate_percentile(self.dustbin_percentile)?;
        if let Some(m) = self.dustbin_mass {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::Config(format!("dustbin_mass must lie in (0, 1), got {m}")));
            }
        }
        Ok(())
    }
}

fn validate_percentile(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::Config(format!("percentile must lie in (0, 100), got {p}")));
    }
    Ok(())
}

/// The appended dustbin column of a flexible transport solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dustbin {
    /// Constant score `z` of the dustbin column.
    pub threshold: f64,
    /// Column marginal assigned to the dustbin.
    pub capacity: f64,
    /// Mass each row sends to the dustbin.
    pub column: Vec<f64>,
}

impl Dustbin {
    pub fn mass(&self) -> f64 {
        compensated_sum(self.column.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    /// Rows are sources (clips), columns targets (queries). For a flexible
    /// solve the dustbin column has been cropped off.
    pub plan: Matrix,
    pub row_marginal: Vec<f64>,
    /// Target marginal of the columns in `plan` (excluding the dustbin).
    pub col_marginal: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// L1 distance of the final row sums from the row marginal.
    pub row_residual: f64,
    /// L1 distance of the final column sums from the column marginal.
    pub col_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dustbin: Option<Dustbin>,
}

impl TransportPlan {
    /// Total mass in `plan`.
    pub fn mass(&self) -> f64 {
        compensated_sum(self.plan.as_slice().iter().copied())
    }

    pub fn dustbin_mass(&self) -> f64 {
        self.dustbin.as_ref().map_or(0.0, Dustbin::mass)
    }

    /// `⟨Q, S⟩` against the matching score matrix.
    pub fn score(&self, scores: &SimilarityMatrix) -> f64 {
        inner(&self.plan, scores)
    }
}

fn inner(plan: &Matrix, scores: &Matrix) -> f64 {
    compensated_sum(
        plan.as_slice()
            .iter()
            .zip(scores.as_slice())
            .map(|(q, s)| q * s),
    )
}

/// `⟨Q, S⟩ + ε H(Q)` with `H(Q) = −Σ Q ln Q`.
pub fn regularized_objective(plan: &Matrix, scores: &Matrix, epsilon: f64) -> f64 {
    let entropy = -compensated_sum(
        plan.as_slice()
            .iter()
            .filter(|&&q| q > 0.0)
            .map(|&q| q * q.ln()),
    );
    inner(plan, scores) + epsilon * entropy
}

fn check_marginal(values: &[f64], len: usize, what: &str) -> Result<()> {
    if values.len() != len {
        return Err(Error::Input(format!(
            "{what} has length {}, expected {len}",
            values.len()
        )));
    }
    ensure_finite(values, what)?;
    if let Some(j) = values.iter().position(|&v| v < 0.0) {
        return Err(Error::Input(format!("{what} entry {j} is negative")));
    }
    let total = compensated_sum(values.iter().copied());
    if (total - 1.0).abs() > MARGINAL_SUM_TOLERANCE {
        return Err(Error::Input(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

/// Solves `max ⟨Q, S⟩ + ε H(Q)` subject to `Q 1 = μ`, `Qᵀ 1 = ν`.
///
/// Hitting `max_iterations` is not an error: the plan comes back with
/// `converged = false`.
pub fn sinkhorn(
    scores: &SimilarityMatrix,
    mu: &[f64],
    nu: &[f64],
    cfg: &OTConfig,
) -> Result<TransportPlan> {
    solve(scores, mu, nu, cfg, None)
}

/// Like [`sinkhorn`], also returning the dual objective after each iteration.
///
/// With `Q = exp((S + f + g)/ε)` the dual is
/// `D(f, g) = −⟨f, μ⟩ − ⟨g, ν⟩ + ε Σ Q − ε`. Each half-step minimizes it
/// exactly, so the trace never increases; it bounds the optimal
/// regularized objective from above and meets it at convergence. The primal
/// value of an intermediate plan is not monotone because the plan is not
/// feasible until the iteration converges.
pub fn sinkhorn_traced(
    scores: &SimilarityMatrix,
    mu: &[f64],
    nu: &[f64],
    cfg: &OTConfig,
) -> Result<(TransportPlan, Vec<f64>)> {
    let mut trace = Vec::new();
    let plan = solve(scores, mu, nu, cfg, Some(&mut trace))?;
    Ok((plan, trace))
}

fn solve(
    scores: &SimilarityMatrix,
    mu: &[f64],
    nu: &[f64],
    cfg: &OTConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<TransportPlan> {
    cfg.validate()?;
    let (n, m) = (scores.rows(), scores.cols());
    if n == 0 || m == 0 {
        return Err(Error::Input("transport needs a nonempty score matrix".into()));
    }
    ensure_finite(scores.as_slice(), "score matrix")?;
    check_marginal(mu, n, "row marginal")?;
    check_marginal(nu, m, "column marginal")?;

    let eps = cfg.epsilon;
    let log_mu: Vec<f64> = mu.iter().map(|v| v.ln()).collect();
    let log_nu: Vec<f64> = nu.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut plan = Matrix::zeros(n, m);
    let mut converged = false;
    let mut iterations = 0;
    let (mut row_residual, mut col_residual) = (f64::INFINITY, f64::INFINITY);

    while iterations < cfg.max_iterations {
        iterations += 1;
        for i in 0..n {
            let row = scores.row(i);
            let lse = log_sum_exp(row.iter().zip(&g).map(|(s, gj)| (s + gj) / eps));
            f[i] = eps * (log_mu[i] - lse);
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (scores.get(i, j) + f[i]) / eps));
            g[j] = eps * (log_nu[j] - lse);
        }
        for i in 0..n {
            for j in 0..m {
                plan.set(i, j, ((scores.get(i, j) + f[i] + g[j]) / eps).exp());
            }
        }
        row_residual = l1(&plan.row_sums(), mu);
        col_residual = l1(&plan.col_sums(), nu);
        if let Some(t) = trace.as_deref_mut() {
            t.push(dual_objective(&plan, &f, &g, mu, nu, eps));
        }
        if row_residual <= cfg.marginal_tolerance && col_residual <= cfg.marginal_tolerance {
            converged = true;
            break;
        }
    }

    Ok(TransportPlan {
        plan,
        row_marginal: mu.to_vec(),
        col_marginal: nu.to_vec(),
        converged,
        iterations,
        row_residual,
        col_residual,
        dustbin: None,
    })
}

fn dual_objective(plan: &Matrix, f: &[f64], g: &[f64], mu: &[f64], nu: &[f64], eps: f64) -> f64 {
    // Zero-mass entries have infinite potentials and contribute nothing.
    let potentials = f
        .iter()
        .zip(mu)
        .chain(g.iter().zip(nu))
        .filter(|(_, &m)| m > 0.0)
        .map(|(p, m)| -p * m);
    let mass = compensated_sum(plan.as_slice().iter().copied());
    compensated_sum(potentials) + eps * (mass - 1.0)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

/// Nearest-rank (lower) percentile of all entries: the `⌈p·N/100⌉`-th smallest.
pub fn dustbin_threshold(scores: &SimilarityMatrix, percentile: f64) -> Result<f64> {
    validate_percentile(percentile)?;
    if scores.is_empty() {
        return Err(Error::Input("percentile of an empty matrix".into()));
    }
    ensure_finite(scores.as_slice(), "score matrix")?;
    let mut sorted = scores.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // p·N/100 in this order so integer rank products stay exact
    let rank = ((percentile * n as f64) / 100.0 - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

/// Transport on `[S | z·1]` with uniform clip mass, then crops the dustbin.
pub fn flexible_ot(scores: &SimilarityMatrix, cfg: &OTConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    let (n, m) = (scores.rows(), scores.cols());
    if n == 0 || m == 0 {
        return Err(Error::Input("flexible transport needs at least one clip and one query".into()));
    }
    let z = dustbin_threshold(scores, cfg.dustbin_percentile)?;
    let augmented = Matrix::from_fn(n, m + 1, |i, j| if j < m { scores.get(i, j) } else { z });
    let mu = vec![1.0 / n as f64; n];
    let (query_mass, capacity) = match cfg.dustbin_mass {
        None => (1.0 / (m + 1) as f64, 1.0 / (m + 1) as f64),
        Some(d) => ((1.0 - d) / m as f64, d),
    };
    let mut nu = vec![query_mass; m];
    nu.push(capacity);

    let full = sinkhorn(&augmented, &mu, &nu, cfg)?;
    let cropped = Matrix::from_fn(n, m, |i, j| full.plan.get(i, j));
    let column = full.plan.column(m);
    nu.pop();
    Ok(TransportPlan {
        plan: cropped,
        row_marginal: mu,
        col_marginal: nu,
        converged: full.converged,
        iterations: full.iterations,
        row_residual: full.row_residual,
        col_residual: full.col_residual,
        dustbin: Some(Dustbin {
            threshold: z,
            capacity,
            column,
        }),
    })
}

/// Per-query clip distributions read off a transport plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PlanLabels {
    /// `None` marks a query whose column carried (almost) no mass.
    pub columns: Vec<Option<Vec<f64>>>,
}

impl PlanLabels {
    pub fn included(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.as_deref().map(|c| (j, c)))
    }

    pub fn excluded(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.is_none().then_some(j))
            .collect()
    }
}

/// Normalizes each query column of the plan to a distribution over clips.
pub fn plan_as_labels(plan: &TransportPlan) -> PlanLabels {
    let columns = (0..plan.plan.cols())
        .map(|j| {
            let col = plan.plan.column(j);
            let total = compensated_sum(col.iter().copied());
            (total >= EXCLUDED_COLUMN_MASS).then(|| col.iter().map(|v| v / total).collect())
        })
        .collect();
    PlanLabels { columns }
}
