//! Straight-line reference implementation of the identification stage,
//! written from the formulas without reusing library code. Digamma comes
//! from statrs.

#![allow(dead_code)]

use prvr_core::identification::QueryCategory;
use prvr_core::Matrix;
use statrs::function::gamma::digamma;

pub struct QueryStats {
    pub u: f64,
    pub c: f64,
    pub xi: f64,
}

pub fn query_stats(scores: &[f64], label: usize, tau: f64) -> QueryStats {
    let alpha: Vec<f64> = scores.iter().map(|s| (s / tau).tanh().exp() + 1.0).collect();
    let strength: f64 = alpha.iter().sum();
    let xi = alpha
        .iter()
        .map(|a| a / strength * (digamma(strength + 1.0) - digamma(a + 1.0)))
        .sum();
    QueryStats {
        u: scores.len() as f64 / strength,
        c: scores[label].max(0.0),
        xi,
    }
}

fn rank(c: QueryCategory) -> u8 {
    match c {
        QueryCategory::Precise => 0,
        QueryCategory::Polysemous => 1,
        QueryCategory::UnderDetermined => 2,
    }
}

pub fn branch_categories(scores: &Matrix, labels: &[usize], tau: f64, beta: f64) -> Vec<QueryCategory> {
    let n = labels.len();
    let stats: Vec<QueryStats> = (0..n).map(|i| query_stats(scores.row(i), labels[i], tau)).collect();

    let mut tp = Vec::new();
    for i in 0..n {
        let row = scores.row(i);
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let at_best = row.iter().filter(|&&v| v == best).count();
        if row[labels[i]] == best && at_best == 1 {
            tp.push(i);
        }
    }
    let (beta_u, beta_p) = if tp.is_empty() {
        (1.0 - beta, beta)
    } else {
        let mut max_u = f64::NEG_INFINITY;
        let mut min_c = f64::INFINITY;
        for &i in &tp {
            max_u = max_u.max(stats[i].u);
            min_c = min_c.min(stats[i].c);
        }
        (max_u.min(1.0 - beta), beta.max(min_c))
    };

    let mut out = vec![QueryCategory::Polysemous; n];
    let mut initially_precise = Vec::new();
    for i in 0..n {
        if stats[i].u > beta_u {
            out[i] = QueryCategory::UnderDetermined;
        } else if stats[i].c >= beta_p {
            initially_precise.push(i);
        }
    }
    if !initially_precise.is_empty() {
        let mut xs: Vec<f64> = initially_precise.iter().map(|&i| stats[i].xi).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = xs[(xs.len() - 1) / 2];
        for &i in &initially_precise {
            if stats[i].xi < median {
                out[i] = QueryCategory::Precise;
            }
        }
    }
    out
}

pub fn reference_categories(
    s_f: &Matrix,
    s_c: &Matrix,
    labels: &[usize],
    tau: f64,
    beta: f64,
) -> Vec<QueryCategory> {
    let f = branch_categories(s_f, labels, tau, beta);
    let c = branch_categories(s_c, labels, tau, beta);
    f.into_iter()
        .zip(c)
        .map(|(a, b)| if rank(a) >= rank(b) { a } else { b })
        .collect()
}

pub fn accuracy(found: &[QueryCategory], planted: &[QueryCategory]) -> f64 {
    found.iter().zip(planted).filter(|(a, b)| a == b).count() as f64 / planted.len() as f64
}
