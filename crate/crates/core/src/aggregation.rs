//! Dempster-Shafer fusion of frame- and clip-scale opinions.

use crate::evidence::{DirichletParams, SubjectiveOpinion};
use crate::numeric::compensated_sum;
use crate::{Error, Result};

/// Conflict at or above `1 - TOTAL_CONFLICT_SLACK` is treated as total.
pub const TOTAL_CONFLICT_SLACK: f64 = 1e-12;

fn check_same_frame(f: &SubjectiveOpinion, c: &SubjectiveOpinion) -> Result<()> {
    if f.len() != c.len() {
        return Err(Error::Input(format!(
            "opinions cover {} and {} candidates",
            f.len(),
            c.len()
        )));
    }
    Ok(())
}

/// Conflict mass `δ = Σ_{i≠j} b^f_i b^c_j`.
pub fn conflict_mass(f: &SubjectiveOpinion, c: &SubjectiveOpinion) -> Result<f64> {
    check_same_frame(f, c)?;
    let total_c = compensated_sum(c.belief().iter().copied());
    let delta = compensated_sum(
        f.belief()
            .iter()
            .zip(c.belief())
            .map(|(&bf, &bc)| bf * (total_c - bc)),
    );
    Ok(delta.clamp(0.0, 1.0))
}

/// Dempster's rule for two opinions on the same K candidates.
pub fn ds_combine(f: &SubjectiveOpinion, c: &SubjectiveOpinion) -> Result<SubjectiveOpinion> {
    let delta = conflict_mass(f, c)?;
    if delta >= 1.0 - TOTAL_CONFLICT_SLACK {
        return Err(Error::TotalConflict(delta));
    }
    let norm = 1.0 - delta;
    let (uf, uc) = (f.uncertainty(), c.uncertainty());
    let belief = f
        .belief()
        .iter()
        .zip(c.belief())
        .map(|(&bf, &bc)| (bf * bc + bf * uc + bc * uf) / norm)
        .collect();
    Ok(SubjectiveOpinion::from_parts_unchecked(
        belief,
        uf * uc / norm,
    ))
}

/// Inverse of the evidence-to-opinion map: `S = K / u`, `α_k = b_k S + 1`.
pub fn opinion_to_dirichlet(opinion: &SubjectiveOpinion, k: usize) -> Result<DirichletParams> {
    if opinion.len() != k {
        return Err(Error::Input(format!(
            "opinion covers {} candidates, expected {k}",
            opinion.len()
        )));
    }
    let u = opinion.uncertainty();
    if u.is_nan() || u <= 0.0 {
        return Err(Error::DegenerateOpinion(u));
    }
    let strength = k as f64 / u;
    DirichletParams::new(opinion.belief().iter().map(|b| b * strength + 1.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{evidence_to_opinion, EvidenceVector};
    use proptest::prelude::*;

    fn op(b: &[f64], u: f64) -> SubjectiveOpinion {
        SubjectiveOpinion::new(b.to_vec(), u).unwrap()
    }

    #[test]
    fn conflict_examples() {
        let vac = SubjectiveOpinion::vacuous(2);
        assert_eq!(conflict_mass(&op(&[0.6, 0.2], 0.2), &vac).unwrap(), 0.0);
        assert_eq!(conflict_mass(&op(&[1.0, 0.0], 0.0), &op(&[0.0, 1.0], 0.0)).unwrap(), 1.0);
        let d = conflict_mass(&op(&[0.6, 0.2], 0.2), &op(&[0.2, 0.6], 0.2)).unwrap();
        assert!((d - 0.40).abs() < 1e-15);
        assert!(conflict_mass(&op(&[1.0], 0.0), &vac).is_err());
    }

    #[test]
    fn combine_example() {
        let o = ds_combine(&op(&[0.6, 0.2], 0.2), &op(&[0.2, 0.6], 0.2)).unwrap();
        // (0.12 + 0.12 + 0.04) / 0.6 and 0.04 / 0.6
        assert!((o.belief()[0] - 0.28 / 0.6).abs() < 1e-15);
        assert!((o.belief()[1] - 0.28 / 0.6).abs() < 1e-15);
        assert!((o.uncertainty() - 0.04 / 0.6).abs() < 1e-15);
        assert!((o.belief()[0] - 0.4667).abs() < 1e-4);
        assert!((o.uncertainty() - 0.0667).abs() < 1e-4);
    }

    #[test]
    fn vacuous_is_identity() {
        let f = op(&[0.1, 0.35, 0.25], 0.3);
        let o = ds_combine(&f, &SubjectiveOpinion::vacuous(3)).unwrap();
        assert_eq!(o, f);
    }

    #[test]
    fn total_conflict_is_an_error() {
        let r = ds_combine(&op(&[1.0, 0.0], 0.0), &op(&[0.0, 1.0], 0.0));
        assert!(matches!(r, Err(Error::TotalConflict(_))));
    }

    #[test]
    fn dirichlet_reconstruction_examples() {
        let d = opinion_to_dirichlet(&SubjectiveOpinion::vacuous(3), 3).unwrap();
        assert_eq!(d.alpha(), &[1.0, 1.0, 1.0]);
        let d = opinion_to_dirichlet(&op(&[0.25, 0.25], 0.5), 2).unwrap();
        assert_eq!(d.strength(), 4.0);
        assert_eq!(d.alpha(), &[2.0, 2.0]);
        assert!(matches!(
            opinion_to_dirichlet(&op(&[1.0, 0.0], 0.0), 2),
            Err(Error::DegenerateOpinion(_))
        ));
    }

    #[test]
    fn fused_opinion_round_trips_through_dirichlet() {
        let o = ds_combine(&op(&[0.6, 0.2], 0.2), &op(&[0.2, 0.6], 0.2)).unwrap();
        let d = opinion_to_dirichlet(&o, 2).unwrap();
        let e: Vec<f64> = d.alpha().iter().map(|a| a - 1.0).collect();
        let (_, back) = evidence_to_opinion(&EvidenceVector::new(e).unwrap());
        for (x, y) in back.belief().iter().zip(o.belief()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((back.uncertainty() - o.uncertainty()).abs() < 1e-12);
    }

    fn opinion(k: usize) -> impl Strategy<Value = SubjectiveOpinion> {
        prop::collection::vec(0.0f64..1.0, k + 1).prop_map(move |w| {
            let total: f64 = w.iter().sum::<f64>().max(1e-9);
            let b: Vec<f64> = w[..k].iter().map(|x| x / total).collect();
            let u = 1.0 - compensated_sum(b.iter().copied());
            SubjectiveOpinion::from_parts_unchecked(b, u.max(0.0))
        })
    }

    fn pair() -> impl Strategy<Value = (SubjectiveOpinion, SubjectiveOpinion)> {
        (1usize..12).prop_flat_map(|k| (opinion(k), opinion(k)))
    }

    proptest! {
        #[test]
        fn combination_is_normalized_and_commutative((f, c) in pair()) {
            let delta = conflict_mass(&f, &c).unwrap();
            prop_assume!(delta < 1.0 - 1e-9);
            let fc = ds_combine(&f, &c).unwrap();
            let cf = ds_combine(&c, &f).unwrap();
            let total = fc.uncertainty() + compensated_sum(fc.belief().iter().copied());
            prop_assert!((total - 1.0).abs() <= 1e-10);
            prop_assert!((fc.uncertainty() - cf.uncertainty()).abs() <= 1e-12);
            for (a, b) in fc.belief().iter().zip(cf.belief()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn dirichlet_round_trip(alpha in prop::collection::vec(1.0f64..50.0, 1..20)) {
            let e: Vec<f64> = alpha.iter().map(|a| a - 1.0).collect();
            let (d, o) = evidence_to_opinion(&EvidenceVector::new(e).unwrap());
            let back = opinion_to_dirichlet(&o, alpha.len()).unwrap();
            for (x, y) in back.alpha().iter().zip(d.alpha()) {
                prop_assert!(((x - y) / y).abs() <= 1e-12);
            }
        }
    }
}
