use eeg2image_tensor::Tensor;

use crate::error::{Error, Result};

/// Mean over unordered pairs of the mean absolute pixel difference.
/// `images` is any batch tensor whose leading axis indexes images.
pub fn pairwise_diversity(images: &Tensor<f32>) -> Result<f64> {
    let n = images.shape().first().copied().unwrap_or(0);
    if n < 2 {
        return Err(Error::Config(format!("diversity needs at least 2 images, got {n}")));
    }
    let per = images.numel() / n;
    let rows: Vec<&[f32]> = images.data().chunks(per).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| (*a as f64 - *b as f64).abs()).sum();
            total += d / per as f64;
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}
