use std::path::Path;

use eeg2image_tensor::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Two-dimensional principal-component coordinates of an embedding batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection2d {
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
}

/// Projects `emb` (`[N, D]`) onto its top two principal axes. Each axis is
/// signed so that its largest-magnitude loading is positive.
pub fn export_embedding_2d(emb: &Tensor<f32>, labels: &[usize]) -> Result<Projection2d> {
    if emb.ndim() != 2 || emb.dim(0) != labels.len() {
        return Err(Error::Shape(format!("{} labels for embeddings of shape {:?}", labels.len(), emb.shape())));
    }
    let (n, d) = (emb.dim(0), emb.dim(1));
    if n < 3 {
        return Err(Error::Config(format!("projection needs at least 3 points, got {n}")));
    }
    let x = DMatrix::from_fn(n, d, |i, j| emb.data()[i * d + j] as f64);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    if centered.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("all embedding points are identical".into()));
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axis = |k: usize| -> Vec<f64> {
        let Some(&col) = order.get(k) else { return vec![0.0; d] };
        let v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 { v.iter().map(|x| -x).collect() } else { v }
    };
    let (a0, a1) = (axis(0), axis(1));
    let coords = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let dot = |a: &[f64]| row.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            [dot(&a0), dot(&a1)]
        })
        .collect();
    Ok(Projection2d { coords, labels: labels.to_vec() })
}

impl Projection2d {
    /// Writes CSV with header `x,y,label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("x,y,label\n");
        for (c, l) in self.coords.iter().zip(&self.labels) {
            out.push_str(&format!("{},{},{}\n", c[0], c[1], l));
        }
        std::fs::write(path, out).map_err(Error::write(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_axis_carries_more_variance() {
        let emb = Tensor::new([4, 3], vec![0.0f32, 0.0, 0.0, 4.0, 0.1, 0.0, 8.0, 0.0, 0.0, 12.0, -0.1, 0.0]);
        let p = export_embedding_2d(&emb, &[0, 0, 1, 1]).unwrap();
        let var = |k: usize| p.coords.iter().map(|c| c[k] * c[k]).sum::<f64>();
        assert!(var(0) >= var(1));
    }

    #[test]
    fn identical_points_are_degenerate() {
        let emb = Tensor::full([5, 3], 1.5f32);
        assert!(matches!(export_embedding_2d(&emb, &[0; 5]), Err(Error::Degenerate(_))));
    }
}
