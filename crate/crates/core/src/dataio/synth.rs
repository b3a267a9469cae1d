//! Deterministic synthetic paired dataset.
//!
//! EEG for class `k`, channel `c`, step `t` is
//! `sin(2π (2 + 3k) t / T + π c / C) + N(0, 0.1²)`. The paired image is a
//! class-coloured background with a centred disc (even classes) or square
//! (odd classes) in the complementary hue, jittered slightly per sample.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use eeg2image_tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EegSample, ImageSample, PairedDataset, Split};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub timesteps: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { classes: 10, per_class: 23, channels: 14, timesteps: 32, image_size: 32, seed: 7 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.per_class < 2 {
            return Err(Error::Config(format!("need at least 2 samples per class, got {}", self.per_class)));
        }
        if self.channels == 0 || self.timesteps == 0 {
            return Err(Error::Config("channels and timesteps must be positive".into()));
        }
        if self.image_size < 4 || !self.image_size.is_power_of_two() {
            return Err(Error::Config(format!("image size {} is not a power of two >= 4", self.image_size)));
        }
        Ok(())
    }

    /// Held-out samples: 10% of the total (at least one).
    pub fn test_count(&self) -> usize {
        let n = self.classes * self.per_class;
        ((n as f64 * 0.1).round() as usize).max(1)
    }
}

/// HSV (all in `[0, 1]`) to RGB in `[0, 1]`.
fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn class_colors(k: usize, classes: usize) -> ([f64; 3], [f64; 3]) {
    let hue = k as f64 / classes as f64;
    (hsv_to_rgb(hue, 0.7, 0.75), hsv_to_rgb(hue + 0.5, 0.7, 0.95))
}

fn synth_eeg(spec: &SynthSpec, k: usize, subject: usize, rng: &mut seed::Rng) -> EegSample {
    let (c, t) = (spec.channels, spec.timesteps);
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let freq = 2.0 + 3.0 * k as f64;
    let mut data = Vec::with_capacity(c * t);
    for ch in 0..c {
        let phase = PI * ch as f64 / c as f64;
        for step in 0..t {
            let v = (2.0 * PI * freq * step as f64 / t as f64 + phase).sin() + noise.sample(rng);
            data.push(v as f32);
        }
    }
    EegSample { signal: Tensor::new([c, t], data), label: k, subject }
}

fn synth_image(spec: &SynthSpec, k: usize, rng: &mut seed::Rng) -> ImageSample {
    let h = spec.image_size;
    let (bg, fg) = class_colors(k, spec.classes);
    let jitter = (h / 16) as i64;
    let dx = rng.random_range(-jitter..=jitter) as f64;
    let dy = rng.random_range(-jitter..=jitter) as f64;
    let radius = h as f64 / 4.0 + rng.random_range(-jitter..=jitter) as f64;
    let (cx, cy) = (h as f64 / 2.0 + dx, h as f64 / 2.0 + dy);
    let noise = Normal::new(0.0, 0.02).expect("valid normal");
    let mut data = Vec::with_capacity(h * h * 3);
    for y in 0..h {
        for x in 0..h {
            let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let inside = if k % 2 == 0 {
                px * px + py * py <= radius * radius
            } else {
                px.abs() <= radius && py.abs() <= radius
            };
            let rgb = if inside { fg } else { bg };
            for ch in rgb {
                let v = (2.0 * ch - 1.0 + noise.sample(rng)).clamp(-1.0, 1.0);
                data.push(v as f32);
            }
        }
    }
    ImageSample { image: Tensor::new([h, h, 3], data), label: k }
}

/// Generates a dataset that is a pure function of `spec`.
///
/// The test split takes 10% of all samples, class by class in round-robin
/// order, from the end of each class; the rest (in class-major order) form
/// the training split. Every EEG window has a paired image in the same split.
pub fn synthesize_dataset(spec: &SynthSpec) -> Result<PairedDataset> {
    spec.validate()?;
    let mut eeg_rng = seed::stream(spec.seed, "synth-eeg");
    let mut img_rng = seed::stream(spec.seed, "synth-image");
    let n_test = spec.test_count();
    let mut held_out = vec![0usize; spec.classes];
    for j in 0..n_test {
        held_out[j % spec.classes] += 1;
    }
    let mut eeg = Split::default();
    let mut images = Split::default();
    for k in 0..spec.classes {
        let n_train = spec.per_class - held_out[k].min(spec.per_class - 1);
        for j in 0..spec.per_class {
            let e = synth_eeg(spec, k, j, &mut eeg_rng);
            let i = synth_image(spec, k, &mut img_rng);
            if j < n_train {
                eeg.train.push(e);
                images.train.push(i);
            } else {
                eeg.test.push(e);
                images.test.push(i);
            }
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("sample_rate_hz".into(), "128".into());
    metadata.insert("source".into(), "synthetic".into());
    metadata.insert("seed".into(), spec.seed.to_string());
    metadata.insert(
        "class_names".into(),
        (0..spec.classes).map(|k| format!("class_{k}")).collect::<Vec<_>>().join(","),
    );
    PairedDataset::new(spec.classes, eeg, images, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_counts() {
        let ds = synthesize_dataset(&SynthSpec::default()).unwrap();
        assert_eq!(ds.eeg.len(), 230);
        assert_eq!(ds.eeg.test.len(), 23);
        assert_eq!(ds.eeg.train.len(), 207);
        assert_eq!(ds.images.train.len(), 207);
        assert_eq!((ds.channels(), ds.timesteps(), ds.image_size()), (14, 32, 32));
    }

    #[test]
    fn minimal_spec() {
        let spec = SynthSpec { classes: 2, per_class: 2, channels: 1, timesteps: 8, image_size: 8, seed: 0 };
        let ds = synthesize_dataset(&spec).unwrap();
        assert_eq!(ds.eeg.len(), 4);
        assert_eq!(ds.num_classes, 2);
        let labels: Vec<usize> = ds.eeg.train.iter().chain(&ds.eeg.test).map(|s| s.label).collect();
        assert!(labels.contains(&0) && labels.contains(&1));
    }

    #[test]
    fn rejects_non_power_of_two_images() {
        let spec = SynthSpec { image_size: 33, ..SynthSpec::default() };
        assert!(matches!(synthesize_dataset(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        let g = hsv_to_rgb(1.0 / 3.0, 1.0, 1.0);
        assert!((g[1] - 1.0).abs() < 1e-12 && g[0].abs() < 1e-12);
    }
}
