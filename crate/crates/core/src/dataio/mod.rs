//! Paired EEG/image datasets: in-memory types, the on-disk container, a
//! deterministic synthetic generator and PNG export.

mod container;
mod export;
mod synth;

use std::collections::BTreeMap;
use std::path::Path;

use eeg2image_tensor::Tensor;

use crate::error::{Error, Result};

pub use container::{
    read_container, read_manifest, write_container, write_container_atomic, ArrayEntry, Container, ContainerManifest,
    MANIFEST_FILE,
};
pub use export::{image_grid_rgb, write_png_grid};
pub use synth::{synthesize_dataset, SynthSpec};

/// One EEG window: `signal` is `[channels, timesteps]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EegSample {
    pub signal: Tensor<f32>,
    pub label: usize,
    pub subject: usize,
}

impl EegSample {
    pub fn channels(&self) -> usize {
        self.signal.dim(0)
    }

    pub fn timesteps(&self) -> usize {
        self.signal.dim(1)
    }
}

/// One image, `[H, W, 3]` with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub image: Tensor<f32>,
    pub label: usize,
}

impl ImageSample {
    pub fn size(&self) -> usize {
        self.image.dim(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
}

/// Disjoint train/test partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Default for Split<T> {
    fn default() -> Self {
        Self { train: Vec::new(), test: Vec::new() }
    }
}

impl<T> Split<T> {
    pub fn get(&self, kind: SplitKind) -> &[T] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub num_classes: usize,
    pub eeg: Split<EegSample>,
    pub images: Split<ImageSample>,
    pub metadata: BTreeMap<String, String>,
}

impl PairedDataset {
    /// Builds and validates a dataset; records its shape in `metadata`.
    pub fn new(
        num_classes: usize,
        eeg: Split<EegSample>,
        images: Split<ImageSample>,
        mut metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let first = eeg
            .train
            .first()
            .or(eeg.test.first())
            .ok_or_else(|| Error::InvalidData("dataset has no EEG samples".into()))?;
        metadata.insert("num_classes".into(), num_classes.to_string());
        metadata.insert("channels".into(), first.channels().to_string());
        metadata.insert("timesteps".into(), first.timesteps().to_string());
        if let Some(img) = images.train.first().or(images.test.first()) {
            metadata.insert("image_size".into(), img.size().to_string());
        }
        let ds = Self { num_classes, eeg, images, metadata };
        ds.validate()?;
        Ok(ds)
    }

    pub fn channels(&self) -> usize {
        self.eeg.train.first().or(self.eeg.test.first()).map_or(0, EegSample::channels)
    }

    pub fn timesteps(&self) -> usize {
        self.eeg.train.first().or(self.eeg.test.first()).map_or(0, EegSample::timesteps)
    }

    pub fn image_size(&self) -> usize {
        self.images.train.first().or(self.images.test.first()).map_or(0, ImageSample::size)
    }

    pub fn class_names(&self) -> Vec<String> {
        match self.metadata.get("class_names") {
            Some(names) => names.split(',').map(str::to_owned).collect(),
            None => (0..self.num_classes).map(|k| format!("class_{k}")).collect(),
        }
    }

    /// Indices into `images.<kind>` grouped by class.
    pub fn image_pools(&self, kind: SplitKind) -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); self.num_classes];
        for (i, img) in self.images.get(kind).iter().enumerate() {
            pools[img.label].push(i);
        }
        pools
    }

    /// Indices into `eeg.<kind>` grouped by class.
    pub fn eeg_by_class(&self, kind: SplitKind) -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); self.num_classes];
        for (i, s) in self.eeg.get(kind).iter().enumerate() {
            pools[s.label].push(i);
        }
        pools
    }

    /// Checks every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidData("num_classes must be at least 1".into()));
        }
        let (c, t) = (self.channels(), self.timesteps());
        if c == 0 || t == 0 {
            return Err(Error::InvalidData("EEG windows need at least one channel and one timestep".into()));
        }
        for s in self.eeg.train.iter().chain(&self.eeg.test) {
            if s.signal.shape() != [c, t] {
                return Err(Error::InvalidData(format!(
                    "EEG sample of shape {:?} in a dataset of [{c}, {t}] windows",
                    s.signal.shape()
                )));
            }
            if s.label >= self.num_classes {
                return Err(Error::InvalidData(format!("EEG label {} >= {}", s.label, self.num_classes)));
            }
            if !s.signal.all_finite() {
                return Err(Error::InvalidData("EEG signal contains NaN or Inf".into()));
            }
        }
        let h = self.image_size();
        for img in self.images.train.iter().chain(&self.images.test) {
            if img.image.shape() != [h, h, 3] {
                return Err(Error::InvalidData(format!("image of shape {:?}, expected [{h}, {h}, 3]", img.image.shape())));
            }
            if img.label >= self.num_classes {
                return Err(Error::InvalidData(format!("image label {} >= {}", img.label, self.num_classes)));
            }
            if img.image.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::InvalidData("image values must lie in [-1, 1]".into()));
            }
        }
        if h > 0 && !h.is_power_of_two() {
            return Err(Error::InvalidData(format!("image size {h} is not a power of two")));
        }
        for kind in [SplitKind::Train, SplitKind::Test] {
            let eeg = self.eeg_by_class(kind);
            let img = self.image_pools(kind);
            for k in 0..self.num_classes {
                if !eeg[k].is_empty() && img[k].is_empty() {
                    return Err(Error::InvalidData(format!("class {k} has EEG but no images in the {kind:?} split")));
                }
            }
        }
        Ok(())
    }
}

/// Per-channel z-score with population standard deviation; constant
/// channels become zeros.
pub fn normalize_eeg(sample: &EegSample) -> Result<EegSample> {
    if !sample.signal.all_finite() {
        return Err(Error::InvalidData("cannot normalize a signal containing NaN or Inf".into()));
    }
    let t = sample.timesteps();
    let mut out = Vec::with_capacity(sample.signal.numel());
    for row in sample.signal.data().chunks(t) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / t as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / t as f64;
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            out.extend(std::iter::repeat_n(0.0f32, t));
        } else {
            out.extend(row.iter().map(|&v| ((v as f64 - mean) / std) as f32));
        }
    }
    Ok(EegSample { signal: Tensor::new(sample.signal.shape(), out), label: sample.label, subject: sample.subject })
}

/// Applies [`normalize_eeg`] to both splits.
pub fn normalize_dataset(ds: &PairedDataset) -> Result<PairedDataset> {
    let norm = |v: &[EegSample]| v.iter().map(normalize_eeg).collect::<Result<Vec<_>>>();
    Ok(PairedDataset {
        num_classes: ds.num_classes,
        eeg: Split { train: norm(&ds.eeg.train)?, test: norm(&ds.eeg.test)? },
        images: ds.images.clone(),
        metadata: ds.metadata.clone(),
    })
}

fn split_suffix(kind: SplitKind) -> &'static str {
    match kind {
        SplitKind::Train => "train",
        SplitKind::Test => "test",
    }
}

/// Writes the dataset as a container directory.
pub fn save_dataset(ds: &PairedDataset, root: &Path) -> Result<()> {
    let (c, t, h) = (ds.channels(), ds.timesteps(), ds.image_size());
    let mut out = Container { arrays: Vec::new(), metadata: ds.metadata.clone() };
    out.metadata.insert("num_classes".into(), ds.num_classes.to_string());
    for kind in [SplitKind::Train, SplitKind::Test] {
        let sfx = split_suffix(kind);
        let eeg = ds.eeg.get(kind);
        let mut signal = Vec::with_capacity(eeg.len() * c * t);
        for s in eeg {
            signal.extend_from_slice(s.signal.data());
        }
        out.push(format!("eeg_{sfx}"), Tensor::new([eeg.len(), c, t], signal));
        out.push(format!("labels_{sfx}"), Tensor::new([eeg.len()], eeg.iter().map(|s| s.label as f32).collect()));
        out.push(format!("subjects_{sfx}"), Tensor::new([eeg.len()], eeg.iter().map(|s| s.subject as f32).collect()));
        let imgs = ds.images.get(kind);
        let mut pixels = Vec::with_capacity(imgs.len() * h * h * 3);
        for img in imgs {
            pixels.extend_from_slice(img.image.data());
        }
        out.push(format!("images_{sfx}"), Tensor::new([imgs.len(), h, h, 3], pixels));
        out.push(
            format!("image_labels_{sfx}"),
            Tensor::new([imgs.len()], imgs.iter().map(|i| i.label as f32).collect()),
        );
    }
    write_container(root, &out)
}

fn as_index(v: f32, what: &str) -> Result<usize> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidData(format!("{what} value {v} is not a nonnegative integer")))
    }
}

/// Loads a container written by [`save_dataset`] (or any producer of the same
/// array layout). Samples keep their stored order.
pub fn load_dataset(root: &Path) -> Result<PairedDataset> {
    let container = read_container(root)?;
    let num_classes: usize = container
        .metadata
        .get("num_classes")
        .ok_or_else(|| Error::Format("metadata lacks num_classes".into()))?
        .parse()
        .map_err(|e| Error::Format(format!("num_classes: {e}")))?;
    let mut eeg = Split::default();
    let mut images = Split::default();
    for kind in [SplitKind::Train, SplitKind::Test] {
        let sfx = split_suffix(kind);
        let signal = container.require(&format!("eeg_{sfx}"))?;
        let labels = container.require(&format!("labels_{sfx}"))?;
        if signal.ndim() != 3 || labels.shape() != [signal.dim(0)] {
            return Err(Error::Integrity(format!(
                "eeg_{sfx} {:?} and labels_{sfx} {:?} disagree",
                signal.shape(),
                labels.shape()
            )));
        }
        let n = signal.dim(0);
        let subjects = match container.get(&format!("subjects_{sfx}")) {
            Some(s) if s.shape() == [n] => s.data().to_vec(),
            Some(s) => return Err(Error::Integrity(format!("subjects_{sfx} has shape {:?}", s.shape()))),
            None => vec![0.0; n],
        };
        let (c, t) = (signal.dim(1), signal.dim(2));
        let samples = (0..n)
            .map(|i| {
                Ok(EegSample {
                    signal: Tensor::new([c, t], signal.data()[i * c * t..(i + 1) * c * t].to_vec()),
                    label: as_index(labels.data()[i], "label")?,
                    subject: as_index(subjects[i], "subject")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let pix = container.require(&format!("images_{sfx}"))?;
        let img_labels = container.require(&format!("image_labels_{sfx}"))?;
        if pix.ndim() != 4 || pix.dim(3) != 3 || img_labels.shape() != [pix.dim(0)] {
            return Err(Error::Integrity(format!(
                "images_{sfx} {:?} and image_labels_{sfx} {:?} disagree",
                pix.shape(),
                img_labels.shape()
            )));
        }
        let (m, h, w) = (pix.dim(0), pix.dim(1), pix.dim(2));
        let stride = h * w * 3;
        let imgs = (0..m)
            .map(|i| {
                Ok(ImageSample {
                    image: Tensor::new([h, w, 3], pix.data()[i * stride..(i + 1) * stride].to_vec()),
                    label: as_index(img_labels.data()[i], "image label")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match kind {
            SplitKind::Train => {
                eeg.train = samples;
                images.train = imgs;
            }
            SplitKind::Test => {
                eeg.test = samples;
                images.test = imgs;
            }
        }
    }
    if eeg.is_empty() {
        return Err(Error::InvalidData("container holds no EEG samples".into()));
    }
    let ds = PairedDataset { num_classes, eeg, images, metadata: container.metadata };
    ds.validate()?;
    Ok(ds)
}

/// Stacks EEG windows into `[steps, N, channels]`, the recurrent layout.
pub fn stack_time_major(samples: &[&EegSample]) -> Tensor<f32> {
    let n = samples.len();
    let (c, t) = samples.first().map_or((0, 0), |s| (s.channels(), s.timesteps()));
    let mut data = vec![0.0f32; t * n * c];
    for (i, s) in samples.iter().enumerate() {
        for ch in 0..c {
            for step in 0..t {
                data[(step * n + i) * c + ch] = s.signal.data()[ch * t + step];
            }
        }
    }
    Tensor::new([t, n, c], data)
}

/// `[N, H, W, 3]` -> `[N, 3, H, W]`.
pub fn nhwc_to_nchw<T: eeg2image_tensor::Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.permute(&[0, 3, 1, 2])
}

/// `[N, 3, H, W]` -> `[N, H, W, 3]`.
pub fn nchw_to_nhwc<T: eeg2image_tensor::Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.permute(&[0, 2, 3, 1])
}

/// Stacks image samples into `[N, 3, H, W]`.
pub fn stack_images_nchw(images: &[&ImageSample]) -> Tensor<f32> {
    let stacked: Vec<Tensor<f32>> = images.iter().map(|i| i.image.clone()).collect();
    nhwc_to_nchw(&Tensor::stack(&stacked))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_sample(rows: &[&[f32]]) -> EegSample {
        let t = rows[0].len();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        EegSample { signal: Tensor::new([rows.len(), t], data), label: 0, subject: 0 }
    }

    #[test]
    fn normalize_hand_computed_row() {
        let s = normalize_eeg(&row_sample(&[&[1.0, 2.0, 3.0]])).unwrap();
        let want = [-1.224_744_9, 0.0, 1.224_744_9];
        for (a, b) in s.signal.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn normalize_constant_row_is_zero() {
        let s = normalize_eeg(&row_sample(&[&[5.0, 5.0, 5.0]])).unwrap();
        assert_eq!(s.signal.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(matches!(normalize_eeg(&row_sample(&[&[1.0, f32::NAN]])), Err(Error::InvalidData(_))));
        assert!(matches!(normalize_eeg(&row_sample(&[&[f32::INFINITY, 1.0]])), Err(Error::InvalidData(_))));
    }

    #[test]
    fn normalized_rows_have_zero_mean_unit_std() {
        let s = row_sample(&[&[0.3, -2.0, 7.5, 1.25, 4.0], &[1.0, 1.0, 1.0, 1.0, 1.0]]);
        let n = normalize_eeg(&s).unwrap();
        let row = &n.signal.data()[..5];
        let mean: f32 = row.iter().sum::<f32>() / 5.0;
        let std = (row.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / 5.0).sqrt();
        assert!(mean.abs() < 1e-5);
        assert!((std - 1.0).abs() < 1e-3);
        assert!(n.signal.data()[5..].iter().all(|&v| v == 0.0));
    }
}
