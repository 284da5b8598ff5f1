//! Similarity scores to evidence, Dirichlet parameters and subjective opinions,
//! plus the three per-query diagnostics: epistemic uncertainty, label
//! consistency and aleatoric uncertainty.

mod digamma;

pub use digamma::digamma;
pub(crate) use digamma::digamma_positive;

use serde::Serialize;

use crate::numeric::{compensated_sum, ensure_finite};
use crate::{Error, Result};

/// Default evidence temperature.
pub const DEFAULT_TAU: f64 = 0.1;

/// Tolerance for `u + Σ b = 1` when an opinion is built from external data.
const OPINION_SUM_TOLERANCE: f64 = 1e-9;

/// Nonnegative per-candidate evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("evidence vector must be nonempty".into()));
        }
        ensure_finite(&values, "evidence")?;
        if let Some(j) = values.iter().position(|&v| v < 0.0) {
            return Err(Error::Input(format!(
                "evidence must be nonnegative, got {} at {j}",
                values[j]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Dirichlet concentration parameters with cached strength `S = Σ α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    strength: f64,
}

impl DirichletParams {
    /// Every α must be finite and at least 1.
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Input("Dirichlet parameters must be nonempty".into()));
        }
        ensure_finite(&alpha, "alpha")?;
        if let Some(j) = alpha.iter().position(|&a| a < 1.0) {
            return Err(Error::Input(format!(
                "alpha must be >= 1, got {} at {j}",
                alpha[j]
            )));
        }
        let strength = compensated_sum(alpha.iter().copied());
        Ok(Self { alpha, strength })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Dirichlet mean α / S.
    pub fn mean(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a / self.strength).collect()
    }
}

/// Belief masses over K candidates plus the uncommitted uncertainty mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectiveOpinion {
    belief: Vec<f64>,
    uncertainty: f64,
}

impl SubjectiveOpinion {
    /// Validates nonnegative finite masses summing to one within 1e-9.
    ///
    /// `uncertainty = 0` (a dogmatic opinion) is accepted here; opinions
    /// derived from evidence always have strictly positive uncertainty.
    pub fn new(belief: Vec<f64>, uncertainty: f64) -> Result<Self> {
        if belief.is_empty() {
            return Err(Error::Input("opinion must cover at least one candidate".into()));
        }
        ensure_finite(&belief, "belief")?;
        if !uncertainty.is_finite() || !(0.0..=1.0).contains(&uncertainty) {
            return Err(Error::Input(format!(
                "uncertainty must lie in [0, 1], got {uncertainty}"
            )));
        }
        if let Some(j) = belief.iter().position(|&b| b < 0.0) {
            return Err(Error::Input(format!(
                "belief must be nonnegative, got {} at {j}",
                belief[j]
            )));
        }
        let total = uncertainty + compensated_sum(belief.iter().copied());
        if (total - 1.0).abs() > OPINION_SUM_TOLERANCE {
            return Err(Error::Input(format!(
                "belief and uncertainty must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            belief,
            uncertainty,
        })
    }

    /// The vacuous opinion: no belief, full uncertainty.
    pub fn vacuous(k: usize) -> Self {
        Self {
            belief: vec![0.0; k],
            uncertainty: 1.0,
        }
    }

    pub(crate) fn from_parts_unchecked(belief: Vec<f64>, uncertainty: f64) -> Self {
        Self {
            belief,
            uncertainty,
        }
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    pub fn len(&self) -> usize {
        self.belief.len()
    }

    pub fn is_empty(&self) -> bool {
        self.belief.is_empty()
    }

    /// Index of the largest belief mass (first on ties).
    pub fn argmax_belief(&self) -> usize {
        let mut best = 0;
        for (j, &b) in self.belief.iter().enumerate() {
            if b > self.belief[best] {
                best = j;
            }
        }
        best
    }
}

/// One query's scores against K candidates together with its annotated label.
#[derive(Debug, Clone, Copy)]
pub struct SimilarityRow<'a> {
    scores: &'a [f64],
    label: usize,
}

impl<'a> SimilarityRow<'a> {
    pub fn new(scores: &'a [f64], label: usize) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Input("similarity row must be nonempty".into()));
        }
        ensure_finite(scores, "similarity scores")?;
        if label >= scores.len() {
            return Err(Error::Input(format!(
                "label {label} out of range for {} candidates",
                scores.len()
            )));
        }
        Ok(Self { scores, label })
    }

    pub fn scores(&self) -> &'a [f64] {
        self.scores
    }

    pub fn label(&self) -> usize {
        self.label
    }
}

/// `e = exp(tanh(s / τ))` elementwise.
pub fn similarities_to_evidence(scores: &[f64], tau: f64) -> Result<EvidenceVector> {
    validate_tau(tau)?;
    ensure_finite(scores, "similarity scores")?;
    EvidenceVector::new(scores.iter().map(|s| (s / tau).tanh().exp()).collect())
}

pub(crate) fn validate_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Config(format!("tau must be a finite positive value, got {tau}")));
    }
    Ok(())
}

/// α = e + 1, S = Σ α, u = K / S, b = e / S.
pub fn evidence_to_opinion(evidence: &EvidenceVector) -> (DirichletParams, SubjectiveOpinion) {
    let e = evidence.values();
    let k = e.len() as f64;
    let alpha: Vec<f64> = e.iter().map(|v| v + 1.0).collect();
    let strength = compensated_sum(alpha.iter().copied());
    let belief = e.iter().map(|v| v / strength).collect();
    (
        DirichletParams { alpha, strength },
        SubjectiveOpinion {
            belief,
            uncertainty: k / strength,
        },
    )
}

/// `c = max(0, s · y)` for a one-hot label, i.e. the clamped labelled score.
pub fn label_consistency(row: &SimilarityRow<'_>) -> f64 {
    row.scores[row.label].max(0.0)
}

/// Expected Shannon entropy of a categorical drawn from Dir(α):
/// `Σ_k (α_k / S) (ψ(S + 1) − ψ(α_k + 1))`.
pub fn aleatoric_uncertainty(params: &DirichletParams) -> f64 {
    let s = params.strength;
    let psi_s = digamma_positive(s + 1.0);
    let xi = compensated_sum(
        params
            .alpha
            .iter()
            .map(|&a| (a / s) * (psi_s - digamma_positive(a + 1.0))),
    );
    xi.max(0.0)
}

/// Everything the identification step needs for one query on one branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryEvidence {
    pub dirichlet: DirichletParams,
    pub opinion: SubjectiveOpinion,
    pub consistency: f64,
    pub aleatoric: f64,
}

impl QueryEvidence {
    pub fn uncertainty(&self) -> f64 {
        self.opinion.uncertainty
    }
}

pub fn assess_row(row: &SimilarityRow<'_>, tau: f64) -> Result<QueryEvidence> {
    let evidence = similarities_to_evidence(row.scores, tau)?;
    let (dirichlet, opinion) = evidence_to_opinion(&evidence);
    let aleatoric = aleatoric_uncertainty(&dirichlet);
    Ok(QueryEvidence {
        dirichlet,
        opinion,
        consistency: label_consistency(row),
        aleatoric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_score_gives_unit_evidence() {
        let e = similarities_to_evidence(&[0.0], 0.37).unwrap();
        assert_eq!(e.values(), &[1.0]);
    }

    #[test]
    fn evidence_is_bounded_by_e() {
        let e = similarities_to_evidence(&[1e6, -1e6, 50.0], 0.1).unwrap();
        for &v in e.values() {
            assert!((std::f64::consts::E.recip()..=std::f64::consts::E).contains(&v));
        }
        assert!((e.values()[0] - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn evidence_matches_closed_form() {
        // exp(tanh(8)) and exp(tanh(2)), evaluated with mpmath.
        let e = similarities_to_evidence(&[0.8, 0.2], 0.1).unwrap();
        assert!((e.values()[0] - 2.718_281_216_654_542).abs() < 1e-14);
        assert!((e.values()[1] - 2.622_236_501_258_781).abs() < 1e-14);
    }

    #[test]
    fn evidence_rejects_bad_inputs() {
        assert!(matches!(similarities_to_evidence(&[0.1], 0.0), Err(Error::Config(_))));
        assert!(matches!(similarities_to_evidence(&[0.1], -1.0), Err(Error::Config(_))));
        assert!(matches!(
            similarities_to_evidence(&[f64::NAN], 0.1),
            Err(Error::Input(_))
        ));
        assert!(EvidenceVector::new(vec![]).is_err());
    }

    #[test]
    fn symmetric_opinion() {
        let (d, o) = evidence_to_opinion(&EvidenceVector::new(vec![1.0, 1.0]).unwrap());
        assert_eq!(d.alpha(), &[2.0, 2.0]);
        assert_eq!(d.strength(), 4.0);
        assert_eq!(o.uncertainty(), 0.5);
        assert_eq!(o.belief(), &[0.25, 0.25]);
    }

    #[test]
    fn vacuous_opinion_from_zero_evidence() {
        let (d, o) = evidence_to_opinion(&EvidenceVector::new(vec![0.0; 3]).unwrap());
        assert_eq!(d.alpha(), &[1.0, 1.0, 1.0]);
        assert_eq!(o.uncertainty(), 1.0);
        assert_eq!(o.belief(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn concentrated_wrong_evidence_is_confident_and_wrong() {
        let (_, o) = evidence_to_opinion(&EvidenceVector::new(vec![98.0, 0.0]).unwrap());
        assert!((o.uncertainty() - 0.02).abs() < 1e-15);
        assert_eq!(o.argmax_belief(), 0);
        // annotated label 1 does not receive the largest belief
        assert_ne!(o.argmax_belief(), 1);
    }

    #[test]
    fn consistency_examples() {
        let c = |s: &[f64], l| label_consistency(&SimilarityRow::new(s, l).unwrap());
        assert_eq!(c(&[0.9, 0.1], 0), 0.9);
        assert_eq!(c(&[-0.3, 0.5], 0), 0.0);
        assert_eq!(c(&[0.2, 0.7, 0.1], 1), 0.7);
        assert!(SimilarityRow::new(&[0.1, 0.2], 2).is_err());
    }

    #[test]
    fn aleatoric_uniform_beta_is_one_half() {
        let xi = aleatoric_uncertainty(&DirichletParams::new(vec![1.0, 1.0]).unwrap());
        assert!((xi - 0.5).abs() < 1e-14);
    }

    #[test]
    fn aleatoric_frozen_values() {
        // Closed form evaluated with mpmath.
        let xi = aleatoric_uncertainty(&DirichletParams::new(vec![101.0, 1.0]).unwrap());
        assert!((xi - 0.050_953_710_860_182_65).abs() < 1e-12, "{xi}");
        let xi = aleatoric_uncertainty(&DirichletParams::new(vec![5.0, 5.0, 5.0]).unwrap());
        assert!((xi - 1.034_895_659_895_659_8).abs() < 1e-12, "{xi}");
    }

    #[test]
    fn strength_invariant_holds_for_large_k() {
        // α_i = 1 + i / 2^20 is exact in binary, so Σ α has a closed form.
        let n = 100_000usize;
        let scale = (1u64 << 20) as f64;
        let alpha: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / scale).collect();
        let exact = n as f64 + (n * (n - 1) / 2) as f64 / scale;
        let d = DirichletParams::new(alpha).unwrap();
        assert!(((d.strength() - exact) / exact).abs() < 1e-12);
    }

    #[test]
    fn aleatoric_approaches_log_k_for_uniform_large_strength() {
        for k in 2..=8 {
            let xi = aleatoric_uncertainty(&DirichletParams::new(vec![1e7 / k as f64; k]).unwrap());
            assert!(((k as f64).ln() - xi).abs() < 1e-6, "k = {k}: {xi}");
        }
    }

    proptest! {
        #[test]
        fn opinion_masses_sum_to_one(scores in prop::collection::vec(-1.0f64..1.0, 1..64), tau in 0.01f64..2.0) {
            let (_, o) = evidence_to_opinion(&similarities_to_evidence(&scores, tau).unwrap());
            let total = o.uncertainty() + compensated_sum(o.belief().iter().copied());
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(o.uncertainty() > 0.0 && o.uncertainty() <= 1.0);
        }

        #[test]
        fn raising_a_score_never_raises_uncertainty(
            scores in prop::collection::vec(-1.0f64..1.0, 2..16),
            bump in 0.0f64..1.0,
            idx in 0usize..16,
        ) {
            let idx = idx % scores.len();
            let mut raised = scores.clone();
            raised[idx] += bump;
            let e0 = similarities_to_evidence(&scores, 0.1).unwrap();
            let e1 = similarities_to_evidence(&raised, 0.1).unwrap();
            prop_assert!(e1.values()[idx] >= e0.values()[idx]);
            let u0 = evidence_to_opinion(&e0).1.uncertainty();
            let u1 = evidence_to_opinion(&e1).1.uncertainty();
            prop_assert!(u1 <= u0);
        }

        #[test]
        fn aleatoric_is_bounded_and_maximal_when_uniform(
            raw in prop::collection::vec(0.05f64..1.0, 2..8),
            strength in 2.0f64..200.0,
        ) {
            let k = raw.len() as f64;
            let strength = strength.max(k + 1.0);
            let total: f64 = raw.iter().sum();
            // α_k = 1 + w_k (S - K): same strength, random asymmetric split
            let alpha: Vec<f64> = raw.iter().map(|w| 1.0 + w / total * (strength - k)).collect();
            let xi = aleatoric_uncertainty(&DirichletParams::new(alpha).unwrap());
            let xi_uniform = aleatoric_uncertainty(
                &DirichletParams::new(vec![strength / k; raw.len()]).unwrap(),
            );
            prop_assert!(xi >= 0.0 && xi <= k.ln() + 1e-12);
            prop_assert!(xi <= xi_uniform + 1e-12);
        }
    }
}
