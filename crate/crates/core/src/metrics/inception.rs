use eeg2image_tensor::Tensor;

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-6;

/// Number of splits actually used: `requested`, unless the batch has fewer
/// than `10 * classes` images, in which case `floor(n / classes)` (at least 1).
pub fn effective_splits(n: usize, classes: usize, requested: usize) -> usize {
    let requested = requested.max(1);
    if classes > 0 && n < 10 * classes {
        let shrunk = (n / classes).clamp(1, requested);
        if shrunk != requested {
            log::warn!("inception score: {n} images for {classes} classes, using {shrunk} splits instead of {requested}");
        }
        shrunk
    } else {
        requested
    }
}

fn check_rows(probs: &Tensor<f64>) -> Result<()> {
    if probs.ndim() != 2 || probs.dim(1) == 0 {
        return Err(Error::InvalidClassifier(format!("probabilities of shape {:?}", probs.shape())));
    }
    for (i, row) in probs.data().chunks(probs.dim(1)).enumerate() {
        let s: f64 = row.iter().sum();
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidClassifier(format!("row {i} is not a probability vector (sum {s})")));
        }
    }
    Ok(())
}

/// `exp(mean_x KL(p(y|x) || p(y)))` for one group of rows.
fn split_score(rows: &[&[f64]]) -> f64 {
    let k = rows[0].len();
    let mut marginal = vec![0.0; k];
    for r in rows {
        marginal.iter_mut().zip(r.iter()).for_each(|(m, p)| *m += p);
    }
    marginal.iter_mut().for_each(|m| *m /= rows.len() as f64);
    let mut kl_sum = 0.0;
    for r in rows {
        for (p, q) in r.iter().zip(&marginal) {
            if *p > 0.0 {
                kl_sum += p * (p / q).ln();
            }
        }
    }
    // KL is non-negative; clip round-off so the score never dips below 1.
    (kl_sum / rows.len() as f64).max(0.0).exp()
}

/// Inception score of a probability matrix `[N, K]`, computed over `splits`
/// contiguous splits. Returns the mean and the population standard deviation
/// of the per-split scores.
pub fn inception_score_from_probs(probs: &Tensor<f64>, splits: usize) -> Result<(f64, f64)> {
    check_rows(probs)?;
    let n = probs.dim(0);
    if splits == 0 || n < splits {
        return Err(Error::Config(format!("inception score with {splits} splits on {n} images")));
    }
    let rows: Vec<&[f64]> = probs.data().chunks(probs.dim(1)).collect();
    let scores: Vec<f64> = (0..splits)
        .map(|s| split_score(&rows[s * n / splits..(s + 1) * n / splits]))
        .collect();
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / splits as f64;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_predictions_score_one() {
        let probs = Tensor::full([50, 10], 0.1);
        let (m, s) = inception_score_from_probs(&probs, 5).unwrap();
        assert!((m - 1.0).abs() < 1e-9);
        assert!(s < 1e-9);
    }

    #[test]
    fn one_hot_balanced_scores_k() {
        let probs = Tensor::from_fn([100, 10], |i| if (i / 10) % 10 == i % 10 { 1.0 } else { 0.0 });
        let (m, _) = inception_score_from_probs(&probs, 1).unwrap();
        assert!((m - 10.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let probs = Tensor::new([2, 2], vec![0.5, 0.6, 0.5, 0.5]);
        assert!(matches!(inception_score_from_probs(&probs, 1), Err(Error::InvalidClassifier(_))));
        let probs = Tensor::new([1, 2], vec![f64::NAN, 1.0]);
        assert!(matches!(inception_score_from_probs(&probs, 1), Err(Error::InvalidClassifier(_))));
    }

    #[test]
    fn split_shrinking() {
        assert_eq!(effective_splits(1000, 10, 10), 10);
        assert_eq!(effective_splits(50, 10, 10), 5);
        assert_eq!(effective_splits(5, 10, 10), 1);
    }
}
