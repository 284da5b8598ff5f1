//! Three-way query partitioning per branch and cross-branch fusion.
//!
//! A branch first splits queries by epistemic uncertainty and label
//! consistency against adaptive thresholds, then refines the initially
//! precise set by aleatoric uncertainty. The two branch partitions are fused
//! by taking, per query, the more uncertain category.

use serde::{Deserialize, Serialize};

use crate::evidence::SimilarityRow;
use crate::numeric::strict_argmax;
use crate::{Error, Result};

/// Default base threshold β.
pub const DEFAULT_BETA: f64 = 0.3;

/// Query category, ordered by increasing uncertainty dominance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryCategory {
    Precise,
    Polysemous,
    UnderDetermined,
}

impl QueryCategory {
    pub const ALL: [QueryCategory; 3] = [
        QueryCategory::Precise,
        QueryCategory::Polysemous,
        QueryCategory::UnderDetermined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryCategory::Precise => "precise",
            QueryCategory::Polysemous => "polysemous",
            QueryCategory::UnderDetermined => "under_determined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Category assignment before the aleatoric refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCategory {
    UnderDetermined,
    InitiallyPrecise,
    InitiallyPolysemous,
}

/// Exhaustive, disjoint assignment of queries to categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionSet {
    categories: Vec<QueryCategory>,
}

impl PartitionSet {
    pub fn new(categories: Vec<QueryCategory>) -> Self {
        Self { categories }
    }

    pub fn query_count(&self) -> usize {
        self.categories.len()
    }

    pub fn category(&self, query: usize) -> QueryCategory {
        self.categories[query]
    }

    pub fn categories(&self) -> &[QueryCategory] {
        &self.categories
    }

    /// Query indices assigned to `category`, ascending.
    pub fn members(&self, category: QueryCategory) -> Vec<usize> {
        self.categories
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == category).then_some(i))
            .collect()
    }

    /// Counts in `QueryCategory::ALL` order.
    pub fn counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for &c in &self.categories {
            counts[c as usize] += 1;
        }
        counts
    }
}

/// Initial split into under-determined, initially precise and initially polysemous sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InitialPartition {
    categories: Vec<InitialCategory>,
}

impl InitialPartition {
    pub fn new(categories: Vec<InitialCategory>) -> Self {
        Self { categories }
    }

    pub fn categories(&self) -> &[InitialCategory] {
        &self.categories
    }

    pub fn members(&self, category: InitialCategory) -> Vec<usize> {
        self.categories
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == category).then_some(i))
            .collect()
    }
}

/// Adaptive thresholds for one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub beta_u: f64,
    pub beta_p: f64,
    pub beta: f64,
}

/// Queries whose annotated label is the strict argmax of their scores.
///
/// A tied maximum does not count as a correct match.
pub fn true_positive_set(rows: &[SimilarityRow<'_>]) -> Vec<usize> {
    rows.iter()
        .enumerate()
        .filter_map(|(i, row)| (strict_argmax(row.scores()) == Some(row.label())).then_some(i))
        .collect()
}

/// `β_u = min(max_{tp} u, 1 − β)`, `β_p = max(β, min_{tp} c)`.
///
/// With no true positives the thresholds fall back to `β_u = 1 − β`, `β_p = β`.
pub fn adaptive_thresholds(
    uncertainty: &[f64],
    consistency: &[f64],
    true_positives: &[usize],
    beta: f64,
) -> Result<Thresholds> {
    if uncertainty.len() != consistency.len() {
        return Err(Error::Input(format!(
            "uncertainty has {} entries but consistency has {}",
            uncertainty.len(),
            consistency.len()
        )));
    }
    validate_beta(beta)?;
    if let Some(&i) = true_positives.iter().find(|&&i| i >= uncertainty.len()) {
        return Err(Error::Input(format!(
            "true-positive index {i} out of range for {} queries",
            uncertainty.len()
        )));
    }
    if true_positives.is_empty() {
        return Ok(Thresholds {
            beta_u: 1.0 - beta,
            beta_p: beta,
            beta,
        });
    }
    let u_tp = true_positives
        .iter()
        .map(|&i| uncertainty[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let c_tp = true_positives
        .iter()
        .map(|&i| consistency[i])
        .fold(f64::INFINITY, f64::min);
    Ok(Thresholds {
        beta_u: u_tp.min(1.0 - beta),
        beta_p: beta.max(c_tp),
        beta,
    })
}

pub(crate) fn validate_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

/// `u > β_u` → under-determined; otherwise `c ≥ β_p` → initially precise,
/// else initially polysemous.
pub fn initial_partition(
    uncertainty: &[f64],
    consistency: &[f64],
    thresholds: &Thresholds,
) -> Result<InitialPartition> {
    if uncertainty.len() != consistency.len() {
        return Err(Error::Input(format!(
            "uncertainty has {} entries but consistency has {}",
            uncertainty.len(),
            consistency.len()
        )));
    }
    let categories = uncertainty
        .iter()
        .zip(consistency)
        .map(|(&u, &c)| {
            if u > thresholds.beta_u {
                InitialCategory::UnderDetermined
            } else if c >= thresholds.beta_p {
                InitialCategory::InitiallyPrecise
            } else {
                InitialCategory::InitiallyPolysemous
            }
        })
        .collect();
    Ok(InitialPartition { categories })
}

/// Lower median: `sorted[(n − 1) / 2]`.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[(sorted.len() - 1) / 2])
}

/// Keeps as precise only the initially precise queries whose aleatoric
/// uncertainty is strictly below the set's lower median; the rest of the
/// initially precise and all initially polysemous queries become polysemous.
pub fn refine_partition(initial: &InitialPartition, aleatoric: &[f64]) -> Result<PartitionSet> {
    if initial.categories.len() != aleatoric.len() {
        return Err(Error::Input(format!(
            "partition covers {} queries but aleatoric has {}",
            initial.categories.len(),
            aleatoric.len()
        )));
    }
    let candidates: Vec<f64> = initial
        .members(InitialCategory::InitiallyPrecise)
        .into_iter()
        .map(|i| aleatoric[i])
        .collect();
    let median = lower_median(&candidates);
    let categories = initial
        .categories
        .iter()
        .zip(aleatoric)
        .map(|(&c, &xi)| match c {
            InitialCategory::UnderDetermined => QueryCategory::UnderDetermined,
            InitialCategory::InitiallyPrecise if median.is_some_and(|m| xi < m) => {
                QueryCategory::Precise
            }
            _ => QueryCategory::Polysemous,
        })
        .collect();
    Ok(PartitionSet { categories })
}

/// Per query, the more uncertain of the two branch categories.
pub fn udpf_fuse(frame: &PartitionSet, clip: &PartitionSet) -> Result<PartitionSet> {
    if frame.query_count() != clip.query_count() {
        return Err(Error::Input(format!(
            "frame partition has {} queries but clip partition has {}",
            frame.query_count(),
            clip.query_count()
        )));
    }
    Ok(PartitionSet {
        categories: frame
            .categories
            .iter()
            .zip(&clip.categories)
            .map(|(&f, &c)| f.max(c))
            .collect(),
    })
}

/// Full identification trace for one branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchIdentification {
    pub true_positives: Vec<usize>,
    pub thresholds: Thresholds,
    pub initial: InitialPartition,
    pub partition: PartitionSet,
}

pub fn identify_branch(
    rows: &[SimilarityRow<'_>],
    uncertainty: &[f64],
    consistency: &[f64],
    aleatoric: &[f64],
    beta: f64,
) -> Result<BranchIdentification> {
    if rows.len() != uncertainty.len() {
        return Err(Error::Input(format!(
            "{} rows but {} uncertainty values",
            rows.len(),
            uncertainty.len()
        )));
    }
    let true_positives = true_positive_set(rows);
    let thresholds = adaptive_thresholds(uncertainty, consistency, &true_positives, beta)?;
    let initial = initial_partition(uncertainty, consistency, &thresholds)?;
    let partition = refine_partition(&initial, aleatoric)?;
    Ok(BranchIdentification {
        true_positives,
        thresholds,
        initial,
        partition,
    })
}
