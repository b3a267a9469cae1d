//! Hinged triplet loss and online triplet mining.

use eeg2image_tensor::{Graph, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mining {
    /// Closest negative inside `(d_ap, d_ap + β)` for every positive pair.
    SemiHard,
    /// Per anchor: farthest positive and closest negative.
    Hard,
    /// Every valid `(a, p, n)`.
    AllValid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletConfig {
    pub margin: f64,
    pub batch_classes: usize,
    pub batch_per_class: usize,
    pub mining: Mining,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { margin: 0.2, batch_classes: 10, batch_per_class: 8, mining: Mining::SemiHard }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("triplet margin must be a finite value >= 0, got {}", self.margin)));
        }
        if self.batch_classes < 2 || self.batch_per_class < 2 {
            return Err(Error::Config(format!(
                "triplet batches need >= 2 classes and >= 2 samples per class, got {}x{}",
                self.batch_classes, self.batch_per_class
            )));
        }
        Ok(())
    }
}

/// `(anchor, positive, negative)` row indices into a minibatch.
pub type Triplet = (usize, usize, usize);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripletBatch {
    pub triplets: Vec<Triplet>,
}

/// Squared Euclidean distances between all rows of `[N, D]`.
pub fn pairwise_sq_dists<T: Scalar>(emb: &Tensor<T>) -> Vec<Vec<T>> {
    let d = emb.dim(1);
    let rows: Vec<&[T]> = emb.data().chunks(d).collect();
    rows.iter()
        .map(|a| {
            rows.iter()
                .map(|b| a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum())
                .collect()
        })
        .collect()
}

fn check_batch<T: Scalar>(emb: &Tensor<T>, labels: &[usize]) -> Result<()> {
    if emb.ndim() != 2 || emb.dim(0) != labels.len() {
        return Err(Error::Shape(format!("{} labels for embeddings of shape {:?}", labels.len(), emb.shape())));
    }
    let has_negative = labels.iter().any(|&l| l != labels[0]);
    let has_positive = (0..labels.len()).any(|i| labels[i + 1..].contains(&labels[i]));
    if !has_negative || !has_positive {
        return Err(Error::Mining("batch needs at least two classes and one repeated class".into()));
    }
    Ok(())
}

/// Index of the smallest `d[j]` over `candidates` passing `keep`; the first
/// (lowest) index wins ties.
fn argmin_where<T: Scalar>(d: &[T], candidates: &[usize], keep: impl Fn(T) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &j in candidates {
        if keep(d[j]) && best.is_none_or(|b| d[j] < d[b]) {
            best = Some(j);
        }
    }
    best
}

/// For every ordered positive pair `(a, p)`, `a != p`, picks the negative
/// minimizing `d(a, n)` with `d(a, p) < d(a, n) < d(a, p) + β`. Without one,
/// falls back to the closest negative beyond `d(a, p)`, then to the closest
/// negative overall.
pub fn mine_semi_hard<T: Scalar>(emb: &Tensor<T>, labels: &[usize], margin: f64) -> Result<TripletBatch> {
    check_batch(emb, labels)?;
    let dist = pairwise_sq_dists(emb);
    let beta = T::from_f64_lossy(margin);
    let n = labels.len();
    let mut triplets = Vec::new();
    for a in 0..n {
        let negatives: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            let dap = dist[a][p];
            let neg = argmin_where(&dist[a], &negatives, |d| dap < d && d < dap + beta)
                .or_else(|| argmin_where(&dist[a], &negatives, |d| d > dap))
                .or_else(|| argmin_where(&dist[a], &negatives, |_| true))
                .expect("batch has negatives");
            triplets.push((a, p, neg));
        }
    }
    Ok(TripletBatch { triplets })
}

/// For every anchor with a positive: the farthest positive and the closest
/// negative (lowest index on ties).
pub fn mine_hard<T: Scalar>(emb: &Tensor<T>, labels: &[usize]) -> Result<TripletBatch> {
    check_batch(emb, labels)?;
    let dist = pairwise_sq_dists(emb);
    let n = labels.len();
    let mut triplets = Vec::new();
    for a in 0..n {
        let mut pos: Option<usize> = None;
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            if pos.is_none_or(|b| dist[a][p] > dist[a][b]) {
                pos = Some(p);
            }
        }
        let negatives: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        if let (Some(p), Some(neg)) = (pos, argmin_where(&dist[a], &negatives, |_| true)) {
            triplets.push((a, p, neg));
        }
    }
    Ok(TripletBatch { triplets })
}

pub fn all_valid_triplets(labels: &[usize]) -> TripletBatch {
    let n = labels.len();
    let mut triplets = Vec::new();
    for a in 0..n {
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            for neg in (0..n).filter(|&j| labels[j] != labels[a]) {
                triplets.push((a, p, neg));
            }
        }
    }
    TripletBatch { triplets }
}

pub fn mine<T: Scalar>(emb: &Tensor<T>, labels: &[usize], cfg: &TripletConfig) -> Result<TripletBatch> {
    match cfg.mining {
        Mining::SemiHard => mine_semi_hard(emb, labels, cfg.margin),
        Mining::Hard => mine_hard(emb, labels),
        Mining::AllValid => {
            check_batch(emb, labels)?;
            Ok(all_valid_triplets(labels))
        }
    }
}

/// Mean over triplets of `max(0, |e_a - e_p|² - |e_a - e_n|² + β)` and its
/// gradient with respect to `emb`. An empty triplet list gives zero loss and
/// zero gradient.
pub fn triplet_loss<T: Scalar>(emb: &Tensor<T>, batch: &TripletBatch, margin: f64) -> (T, Tensor<T>) {
    let d = emb.dim(1);
    let mut grad = Tensor::zeros(emb.shape());
    if batch.triplets.is_empty() {
        return (T::zero(), grad);
    }
    let beta = T::from_f64_lossy(margin);
    let count = T::from_usize_lossy(batch.triplets.len());
    let two = T::from_f64_lossy(2.0);
    let row = |i: usize| &emb.data()[i * d..(i + 1) * d];
    let sq = |x: &[T], y: &[T]| x.iter().zip(y).map(|(&u, &v)| (u - v) * (u - v)).sum::<T>();
    let mut total = T::zero();
    for &(a, p, n) in &batch.triplets {
        let (ea, ep, en) = (row(a), row(p), row(n));
        let term = sq(ea, ep) - sq(ea, en) + beta;
        if term <= T::zero() {
            continue;
        }
        total += term;
        let g = grad.data_mut();
        for k in 0..d {
            let s = two / count;
            g[a * d + k] += s * (en[k] - ep[k]);
            g[p * d + k] += s * (ep[k] - ea[k]);
            g[n * d + k] += s * (ea[k] - en[k]);
        }
    }
    (total / count, grad)
}

/// [`triplet_loss`] as a graph node on `emb`.
pub fn triplet_loss_var<T: Scalar>(graph: &Graph<T>, emb: Var, batch: &TripletBatch, margin: f64) -> Var {
    let (loss, grad) = triplet_loss(&graph.value(emb), batch, margin);
    graph.custom(&[emb], Tensor::scalar(loss), move |g| {
        let s = g.item();
        vec![Some(grad.map(|v| v * s))]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_mining_example() {
        let emb = Tensor::new([4, 1], vec![0.0f64, 0.1, 0.5, 2.0]);
        let batch = mine_semi_hard(&emb, &[0, 0, 1, 1], 1.0).unwrap();
        assert!(batch.triplets.contains(&(0, 1, 2)));
    }

    #[test]
    fn single_class_batch_is_mining_error() {
        let emb = Tensor::new([3, 1], vec![0.0f64, 1.0, 2.0]);
        assert!(matches!(mine_semi_hard(&emb, &[4, 4, 4], 0.2), Err(Error::Mining(_))));
    }

    #[test]
    fn hand_evaluated_losses() {
        // |a - p|^2 = 1, |a - n|^2 = 1, margin 0.2
        let emb = Tensor::new([3, 1], vec![0.0f64, 1.0, -1.0]);
        let batch = TripletBatch { triplets: vec![(0, 1, 2)] };
        assert!((triplet_loss(&emb, &batch, 0.2).0 - 0.2).abs() < 1e-12);
        // a = p and |a - n|^2 = 2 * margin -> inactive
        let emb = Tensor::new([3, 1], vec![0.0f64, 0.0, 0.4f64.sqrt()]);
        let (loss, grad) = triplet_loss(&emb, &batch, 0.2);
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn empty_batch_is_zero() {
        let emb = Tensor::new([2, 2], vec![1.0f32, 2.0, 3.0, 4.0]);
        let (loss, grad) = triplet_loss(&emb, &TripletBatch::default(), 0.2);
        assert_eq!(loss, 0.0);
        assert_eq!(grad.sum(), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TripletConfig::default().validate().is_ok());
        assert!(TripletConfig { margin: -0.1, ..Default::default() }.validate().is_err());
        assert!(TripletConfig { batch_per_class: 1, ..Default::default() }.validate().is_err());
    }
}
