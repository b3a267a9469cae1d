//! Small convolutional classifier trained on the real image pools; stands in
//! for a large pretrained network when scoring generated images.

use std::path::Path;

use eeg2image_tensor::layers::{Conv2d, Linear};
use eeg2image_tensor::{softmax_rows, Adam, AdamConfig, Binding, Graph, Mode, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::dataio::{nhwc_to_nchw, PairedDataset};
use crate::error::{Error, Result};
use crate::seed;

/// Anything that maps `[N, H, W, 3]` images to class probabilities `[N, K]`.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn predict_proba(&self, images: &Tensor<f32>) -> Result<Tensor<f64>>;
    /// Identifies the classifier in score reports.
    fn describe(&self) -> String;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub width: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { epochs: 15, batch_size: 32, lr: 1e-3, width: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SurrogateShape {
    num_classes: usize,
    image_size: usize,
    config: SurrogateConfig,
}

pub struct SurrogateClassifier {
    store: ParamStore<f32>,
    convs: Vec<Conv2d>,
    head: Linear,
    shape: SurrogateShape,
    pub test_accuracy: Option<f64>,
}

const MODEL_NAME: &str = "surrogate-classifier";
const PREDICT_CHUNK: usize = 64;

impl SurrogateClassifier {
    /// Stride-2 convolutions down to 4x4, then a linear head. The head starts
    /// at zero, so an untrained classifier predicts the uniform distribution.
    fn build(shape: SurrogateShape, rng: &mut seed::Rng) -> Result<Self> {
        let h = shape.image_size;
        if h < 4 || !h.is_power_of_two() {
            return Err(Error::Config(format!("surrogate classifier needs a power-of-two image size >= 4, got {h}")));
        }
        let mut store = ParamStore::new();
        let mut convs = Vec::new();
        let (mut cin, mut cout, mut side) = (3, shape.config.width.max(1), h);
        while side > 4 {
            let std = (2.0 / (cin * 16) as f64).sqrt();
            convs.push(Conv2d::new(&mut store, &format!("conv{}", convs.len()), cin, cout, 4, 2, 1, true, std, rng));
            cin = cout;
            cout *= 2;
            side /= 2;
        }
        let feat = cin * 16;
        let head = Linear::new(&mut store, "head", feat, shape.num_classes, true, rng);
        *store.get_mut(head.weight) = Tensor::zeros([shape.num_classes, feat]);
        Ok(Self { store, convs, head, shape, test_accuracy: None })
    }

    fn logits(&self, b: &Binding<'_, f32>, x: Var) -> Var {
        let g = b.graph();
        let mut h = x;
        for c in &self.convs {
            h = g.leaky_relu(c.forward(b, h), 0.2);
        }
        let n = g.shape(h)[0];
        let flat = g.reshape(h, &[n, g.shape(h)[1..].iter().product()]);
        self.head.forward(b, flat)
    }

    fn check_images(&self, images: &Tensor<f32>) -> Result<()> {
        let h = self.shape.image_size;
        if images.ndim() != 4 || images.shape()[1..] != [h, h, 3] {
            return Err(Error::Shape(format!("classifier expects [N, {h}, {h}, 3], got {:?}", images.shape())));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.shape).expect("serializable");
        checkpoint::save_store(dir, &self.store, MODEL_NAME, &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let c = checkpoint::read_checkpoint(dir)?;
        let shape: SurrogateShape = serde_json::from_str(checkpoint::config_json(&c)?)
            .map_err(|e| Error::Format(format!("classifier config: {e}")))?;
        let mut model = Self::build(shape, &mut seed::stream(0, "unused"))?;
        checkpoint::load_into_store(&mut model.store, &c, MODEL_NAME)?;
        Ok(model)
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.store
    }
}

impl Classifier for SurrogateClassifier {
    fn num_classes(&self) -> usize {
        self.shape.num_classes
    }

    fn predict_proba(&self, images: &Tensor<f32>) -> Result<Tensor<f64>> {
        self.check_images(images)?;
        let n = images.dim(0);
        let k = self.shape.num_classes;
        let mut out = Vec::with_capacity(n * k);
        for start in (0..n).step_by(PREDICT_CHUNK) {
            let len = PREDICT_CHUNK.min(n - start);
            let g = Graph::new();
            let x = g.constant(nhwc_to_nchw(&images.slice_rows(start, len)));
            let logits = self.logits(&self.store.bind(&g, Mode::Eval), x);
            out.extend(softmax_rows(&g.value(logits).cast::<f64>()).into_data());
        }
        Ok(Tensor::new([n, k], out))
    }

    fn describe(&self) -> String {
        format!("surrogate conv classifier (width {}, {} epochs)", self.shape.config.width, self.shape.config.epochs)
    }
}

/// Trains the surrogate on the training image pool and records its accuracy
/// on the test pool. Deterministic given `seed`.
pub fn train_surrogate_classifier(ds: &PairedDataset, cfg: &SurrogateConfig, seed: u64) -> Result<SurrogateClassifier> {
    if ds.num_classes < 2 {
        return Err(Error::Config(format!("surrogate classifier needs >= 2 classes, got {}", ds.num_classes)));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("surrogate batch size must be positive".into()));
    }
    let shape = SurrogateShape { num_classes: ds.num_classes, image_size: ds.image_size(), config: cfg.clone() };
    let mut rng = seed::stream(seed, "surrogate");
    let mut model = SurrogateClassifier::build(shape, &mut rng)?;
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let train = &ds.images.train;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let imgs: Vec<Tensor<f32>> = batch.iter().map(|&i| train[i].image.clone()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train[i].label).collect();
            let g = Graph::new();
            let x = g.constant(nhwc_to_nchw(&Tensor::stack(&imgs)));
            let b = model.store.bind(&g, Mode::Train);
            let loss = g.softmax_cross_entropy(model.logits(&b, x), &labels);
            epoch_loss += g.value(loss).item() as f64;
            let pg = b.param_grads(&g.backward(loss));
            drop(b);
            adam.step(&mut model.store, &pg);
        }
        log::debug!("surrogate epoch {epoch}: loss {:.4}", epoch_loss / order.len().div_ceil(cfg.batch_size) as f64);
    }
    let test = &ds.images.test;
    if !test.is_empty() {
        let imgs: Vec<Tensor<f32>> = test.iter().map(|s| s.image.clone()).collect();
        let pred = model.predict_proba(&Tensor::stack(&imgs))?.argmax_rows();
        let correct = pred.iter().zip(test).filter(|(p, s)| **p == s.label).count();
        let acc = correct as f64 / test.len() as f64;
        log::info!("surrogate classifier test accuracy {acc:.4}");
        model.test_accuracy = Some(acc);
    }
    Ok(model)
}
