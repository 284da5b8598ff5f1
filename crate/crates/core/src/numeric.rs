//! Small numerical helpers shared by the modules.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ln Σ exp(x)`, stable for large magnitudes; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<I: IntoIterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values
        .clone()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let acc = compensated_sum(values.into_iter().map(|v| (v - max).exp()));
    max + acc.ln()
}

/// Softmax of a score row.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores.iter().copied());
    scores.iter().map(|s| (s - lse).exp()).collect()
}

/// Index of the strict maximum, or `None` if the maximum is attained more than once.
pub fn strict_argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    let mut tied = false;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > values[b] => {
                best = Some(i);
                tied = false;
            }
            Some(b) if v == values[b] => tied = true,
            _ => {}
        }
    }
    if tied {
        None
    } else {
        best
    }
}

/// One-hot row of length `k` with a one at `index`.
pub fn one_hot(index: usize, k: usize) -> Vec<f64> {
    let mut row = vec![0.0; k];
    row[index] = 1.0;
    row
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> crate::Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(j) => Err(crate::Error::Input(format!(
            "{what}: non-finite value {} at position {j}",
            values[j]
        ))),
        None => Ok(()),
    }
}
