//! Evaluation: k-means accuracy for embeddings, inception score and class
//! consistency under a classifier, pairwise diversity, 2D projection.

mod assignment;
mod diversity;
mod inception;
mod kmeans;
mod projection;
mod surrogate;

use std::path::Path;

use eeg2image_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use assignment::{max_weight_assignment, ContingencyTable};
pub use diversity::pairwise_diversity;
pub use inception::{effective_splits, inception_score_from_probs};
pub use kmeans::{kmeans, kmeans_accuracy, KMeansConfig, KMeansFit};
pub use projection::{export_embedding_2d, Projection2d};
pub use surrogate::{train_surrogate_classifier, Classifier, SurrogateClassifier, SurrogateConfig};

/// Inception score of `[N, H, W, 3]` images under `classifier`.
pub fn inception_score(images: &Tensor<f32>, classifier: &dyn Classifier, splits: usize) -> Result<(f64, f64)> {
    let probs = classifier.predict_proba(images)?;
    inception_score_from_probs(&probs, splits)
}

/// Fraction of images whose predicted class equals the intended one.
pub fn class_consistency(images: &Tensor<f32>, intended: &[usize], classifier: &dyn Classifier) -> Result<f64> {
    if intended.is_empty() {
        return Err(Error::Config("class consistency of an empty batch is undefined".into()));
    }
    if images.shape().first() != Some(&intended.len()) {
        return Err(Error::Shape(format!("{} labels for images of shape {:?}", intended.len(), images.shape())));
    }
    let pred = classifier.predict_proba(images)?.argmax_rows();
    let hits = pred.iter().zip(intended).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / intended.len() as f64)
}

/// Summary of one evaluation. `kmeans_acc` is absent when no embeddings
/// were scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub is_mean: f64,
    pub is_std: f64,
    pub kmeans_acc: Option<f64>,
    pub class_consistency: f64,
    pub diversity: f64,
    pub classifier: String,
}

impl ScoreReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("serializable");
        std::fs::write(path, json + "\n").map_err(Error::write(path))
    }
}

/// Per-class inception score row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub is_mean: f64,
    pub is_std: f64,
}
