use eeg2image_tensor::Tensor;
use rand::Rng;
use rayon::prelude::*;

use super::assignment::ContingencyTable;
use crate::error::{Error, Result};
use crate::seed;

/// k-means protocol settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { restarts: 10, max_iter: 300 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding.
fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centroids.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// One Lloyd run from k-means++ seeds; stops when assignments stabilize.
fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut seed::Rng) -> KMeansFit {
    let dim = points[0].len();
    let mut centroids = init_plus_plus(points, k, rng);
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (j, _) = nearest(p, &centroids);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = points
                    .iter()
                    .zip(&assignments)
                    .map(|(p, &a)| sq_dist(p, &centroids[a]))
                    .enumerate()
                    .fold((0, -1.0), |best, (i, d)| if d > best.1 { (i, d) } else { best })
                    .0;
                centroids[j] = points[far].clone();
            }
        }
    }
    let inertia = points.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    KMeansFit { assignments, centroids, inertia }
}

/// Best-inertia fit over `cfg.restarts` seeded restarts (run in parallel,
/// each with its own sub-seed, so the result does not depend on scheduling).
pub fn kmeans(points: &[Vec<f64>], k: usize, cfg: KMeansConfig, seed: u64) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::Config("k-means needs k >= 1".into()));
    }
    if points.len() < k {
        return Err(Error::Config(format!("k-means with k = {k} on {} points", points.len())));
    }
    let fits: Vec<KMeansFit> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::stream(seed, &format!("kmeans-restart-{r}"));
            lloyd(points, k, cfg.max_iter, &mut rng)
        })
        .collect();
    Ok(fits.into_iter().reduce(|best, f| if f.inertia < best.inertia { f } else { best }).unwrap())
}

pub fn rows_f64(emb: &Tensor<f32>) -> Vec<Vec<f64>> {
    let d = emb.dim(1);
    emb.data().chunks(d).map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

/// Clusters `emb` (`[N, D]`) into `k` groups, matches clusters to classes
/// one-to-one to maximize agreement, and returns the matched fraction.
pub fn kmeans_accuracy(
    emb: &Tensor<f32>,
    labels: &[usize],
    k: usize,
    cfg: KMeansConfig,
    seed: u64,
) -> Result<(f64, ContingencyTable)> {
    if emb.ndim() != 2 || emb.dim(0) != labels.len() {
        return Err(Error::Shape(format!("{} labels for embeddings of shape {:?}", labels.len(), emb.shape())));
    }
    let points = rows_f64(emb);
    let fit = kmeans(&points, k, cfg, seed)?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let table = ContingencyTable::from_assignments(&fit.assignments, labels, k, classes);
    Ok((table.matched() as f64 / labels.len() as f64, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Tensor<f32>, Vec<usize>) {
        let centers = [[0.0f32, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (c, ctr) in centers.iter().enumerate() {
            for i in 0..5 {
                let off = i as f32 * 0.01;
                data.extend_from_slice(&[ctr[0] + off, ctr[1] - off]);
                labels.push(c);
            }
        }
        (Tensor::new([15, 2], data), labels)
    }

    #[test]
    fn separated_clusters_score_one() {
        let (emb, labels) = blobs();
        let (acc, table) = kmeans_accuracy(&emb, &labels, 3, KMeansConfig::default(), 1).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(table.total(), 15);
    }

    #[test]
    fn label_permutation_does_not_change_accuracy() {
        let (emb, labels) = blobs();
        let permuted: Vec<usize> = labels.iter().map(|&l| [2, 0, 1][l]).collect();
        let a = kmeans_accuracy(&emb, &labels, 3, KMeansConfig::default(), 5).unwrap().0;
        let b = kmeans_accuracy(&emb, &permuted, 3, KMeansConfig::default(), 5).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_points_is_config_error() {
        let emb = Tensor::new([2, 1], vec![0.0f32, 1.0]);
        assert!(matches!(kmeans_accuracy(&emb, &[0, 1], 3, KMeansConfig::default(), 0), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let (emb, labels) = blobs();
        let a = kmeans(&rows_f64(&emb), 4, KMeansConfig::default(), 9).unwrap();
        let b = kmeans(&rows_f64(&emb), 4, KMeansConfig::default(), 9).unwrap();
        assert_eq!(a, b);
        let _ = labels;
    }
}
