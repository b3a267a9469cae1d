use std::path::Path;

use eeg2image_tensor::Tensor;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nets::Generator;
use crate::dataio::{write_png_grid, EegSample, PairedDataset, SplitKind};
use crate::encoder::EncoderModel;
use crate::error::Result;
use crate::metrics::{
    class_consistency, effective_splits, inception_score_from_probs, pairwise_diversity, ClassScore, Classifier,
};
use crate::seed;

const GENERATE_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Generated images per class for inception score and consistency.
    pub per_class: usize,
    /// Images per condition for the diversity measurement.
    pub diversity_per_condition: usize,
    pub is_splits: usize,
    /// Images per class row in sample sheets.
    pub sheet_per_class: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { per_class: 20, diversity_per_condition: 8, is_splits: 10, sheet_per_class: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanEval {
    pub is_mean: f64,
    pub is_std: f64,
    pub class_consistency: f64,
    pub diversity: f64,
    pub per_class: Vec<ClassScore>,
}

/// Held-out EEG windows of each class (training windows for classes with no
/// held-out ones).
fn condition_sources(ds: &PairedDataset) -> Vec<Vec<&EegSample>> {
    let test = ds.eeg_by_class(SplitKind::Test);
    let train = ds.eeg_by_class(SplitKind::Train);
    (0..ds.num_classes)
        .map(|k| {
            if test[k].is_empty() {
                train[k].iter().map(|&i| &ds.eeg.train[i]).collect()
            } else {
                test[k].iter().map(|&i| &ds.eeg.test[i]).collect()
            }
        })
        .collect()
}

fn latents(n: usize, dim: usize, rng: &mut seed::Rng) -> Tensor<f32> {
    Tensor::from_fn([n, dim], |_| StandardNormal.sample(rng))
}

/// Generates in fixed-size chunks; rows are independent in evaluation mode.
pub fn generate_batched(g: &Generator, z: &Tensor<f32>, psi: &Tensor<f32>) -> Result<Tensor<f32>> {
    let n = z.dim(0);
    let mut parts = Vec::new();
    for start in (0..n).step_by(GENERATE_CHUNK) {
        let len = GENERATE_CHUNK.min(n - start);
        parts.push(g.generate(&z.slice_rows(start, len), &psi.slice_rows(start, len))?);
    }
    let h = g.net.arch.image_size;
    let data: Vec<f32> = parts.into_iter().flat_map(Tensor::into_data).collect();
    Ok(Tensor::new([n, h, h, 3], data))
}

/// Images for `per_class` conditions of each class, cycling through that
/// class's windows. Classes are interleaved (row `i` has label `i % K`) so
/// contiguous splits cover every class. Returns images `[K * per_class, H, W, 3]`
/// and labels.
pub fn generate_per_class(
    g: &Generator,
    ds: &PairedDataset,
    encoder: &EncoderModel,
    per_class: usize,
    rng: &mut seed::Rng,
) -> Result<(Tensor<f32>, Vec<usize>)> {
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    let sources = condition_sources(ds);
    for j in 0..per_class {
        for (k, src) in sources.iter().enumerate() {
            windows.push(src[j % src.len()]);
            labels.push(k);
        }
    }
    let psi = encoder.embed(&windows)?;
    let z = latents(windows.len(), g.net.arch.latent_dim, rng);
    Ok((generate_batched(g, &z, &psi)?, labels))
}

/// Inception score, per-class scores, class consistency and per-condition
/// diversity of `g` on held-out conditions. Deterministic given `seed`.
pub fn evaluate_generator(
    g: &Generator,
    ds: &PairedDataset,
    encoder: &EncoderModel,
    classifier: &dyn Classifier,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<GanEval> {
    let mut rng = seed::stream(seed, "eval-latent");
    let k = ds.num_classes;
    let (images, labels) = generate_per_class(g, ds, encoder, cfg.per_class.max(1), &mut rng)?;
    let probs = classifier.predict_proba(&images)?;
    let splits = effective_splits(labels.len(), k, cfg.is_splits);
    let (is_mean, is_std) = inception_score_from_probs(&probs, splits)?;
    let names = ds.class_names();
    let per = cfg.per_class.max(1);
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let p = probs.select_rows(&rows);
        let (m, s) = inception_score_from_probs(&p, effective_splits(per, k, cfg.is_splits))?;
        per_class.push(ClassScore { class: names[c].clone(), is_mean: m, is_std: s });
    }
    let consistency = class_consistency(&images, &labels, classifier)?;
    let diversity = if cfg.diversity_per_condition >= 2 {
        let sources = condition_sources(ds);
        let mut total = 0.0;
        for src in &sources {
            let n = cfg.diversity_per_condition;
            let psi = encoder.embed(&vec![src[0]; n])?;
            let z = latents(n, g.net.arch.latent_dim, &mut rng);
            total += pairwise_diversity(&generate_batched(g, &z, &psi)?)?;
        }
        total / sources.len() as f64
    } else {
        f64::NAN
    };
    Ok(GanEval { is_mean, is_std, class_consistency: consistency, diversity, per_class })
}

/// PNG sheet with one row of `per_class` samples per class.
pub fn sample_grid(
    g: &Generator,
    ds: &PairedDataset,
    encoder: &EncoderModel,
    per_class: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let mut rng = seed::stream(seed, "sheet-latent");
    let per = per_class.max(1);
    let (images, _) = generate_per_class(g, ds, encoder, per, &mut rng)?;
    let h = g.net.arch.image_size;
    let rows: Vec<Vec<Tensor<f32>>> = (0..ds.num_classes)
        .map(|c| (0..per).map(|j| images.slice_rows(j * ds.num_classes + c, 1).reshape([h, h, 3])).collect())
        .collect();
    write_png_grid(path, &rows)
}
