use std::path::Path;

use eeg2image_tensor::layers::{Linear, Lstm};
use eeg2image_tensor::{Binding, Graph, Mode, ParamStore, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::dataio::{stack_time_major, EegSample};
use crate::error::{Error, Result};
use crate::seed;

pub const EMBED_DIM: usize = 128;
const NORM_EPS: f32 = 1e-12;
const EMBED_CHUNK: usize = 256;
const MODEL_NAME: &str = "eeg-encoder";

/// Architecture of an [`EncoderModel`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub channels: usize,
    pub hidden: usize,
    pub output_norm: bool,
    /// Width of the softmax head used by the classification baseline.
    pub head_classes: Option<usize>,
}

impl EncoderSpec {
    pub fn new(channels: usize) -> Self {
        Self { channels, hidden: 128, output_norm: true, head_classes: None }
    }
}

/// One recurrent layer over time, final hidden state projected to
/// [`EMBED_DIM`], optionally L2-normalized.
pub struct EncoderModel {
    pub spec: EncoderSpec,
    store: ParamStore<f32>,
    lstm: Lstm,
    proj: Linear,
    head: Option<Linear>,
}

pub(crate) struct Forward {
    pub embedding: Var,
    pub logits: Option<Var>,
}

impl EncoderModel {
    pub fn new(spec: EncoderSpec, rng: &mut seed::Rng) -> Result<Self> {
        if spec.channels == 0 || spec.hidden == 0 {
            return Err(Error::Config("encoder needs positive channel and hidden sizes".into()));
        }
        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, "lstm", spec.channels, spec.hidden, rng);
        let proj = Linear::new(&mut store, "proj", spec.hidden, EMBED_DIM, true, rng);
        let head = spec.head_classes.map(|k| Linear::new(&mut store, "head", EMBED_DIM, k, true, rng));
        Ok(Self { spec, store, lstm, proj, head })
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }

    /// `seq` is `[steps, N, channels]`.
    pub(crate) fn forward(&self, b: &Binding<'_, f32>, seq: Var) -> Forward {
        let g = b.graph();
        let h = self.lstm.forward(b, seq);
        let feat = self.proj.forward(b, h);
        let logits = self.head.as_ref().map(|head| head.forward(b, feat));
        let embedding = if self.spec.output_norm { g.l2_normalize_rows(feat, NORM_EPS) } else { feat };
        Forward { embedding, logits }
    }

    fn check_samples(&self, samples: &[&EegSample]) -> Result<()> {
        let Some(first) = samples.first() else { return Ok(()) };
        for s in samples {
            if s.signal.ndim() != 2 || s.channels() != self.spec.channels || s.timesteps() != first.timesteps() {
                return Err(Error::Shape(format!(
                    "encoder expects [{}, T] windows of equal length, got {:?}",
                    self.spec.channels,
                    s.signal.shape()
                )));
            }
        }
        if first.timesteps() == 0 {
            return Err(Error::Shape("EEG windows have no time steps".into()));
        }
        Ok(())
    }

    /// `[N, 128]` embeddings; read-only on the parameters.
    pub fn embed(&self, samples: &[&EegSample]) -> Result<Tensor<f32>> {
        self.check_samples(samples)?;
        let mut out = Vec::with_capacity(samples.len() * EMBED_DIM);
        for chunk in samples.chunks(EMBED_CHUNK) {
            let g = Graph::new();
            let b = self.store.bind(&g, Mode::Eval);
            let f = self.forward(&b, g.constant(stack_time_major(chunk)));
            out.extend_from_slice(g.value(f.embedding).data());
        }
        Ok(Tensor::new([samples.len(), EMBED_DIM], out))
    }

    /// Argmax of the softmax head; `None` without a head.
    pub fn classify(&self, samples: &[&EegSample]) -> Result<Option<Vec<usize>>> {
        if self.head.is_none() {
            return Ok(None);
        }
        self.check_samples(samples)?;
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(EMBED_CHUNK) {
            let g = Graph::new();
            let b = self.store.bind(&g, Mode::Eval);
            let f = self.forward(&b, g.constant(stack_time_major(chunk)));
            out.extend(g.value(f.logits.expect("head present")).argmax_rows());
        }
        Ok(Some(out))
    }

    /// Writes the parameters and `{"spec": ..., "training": ...}` as config echo.
    pub fn save(&self, dir: &Path, training: &serde_json::Value) -> Result<()> {
        let echo = serde_json::json!({ "spec": self.spec, "training": training });
        checkpoint::save_store(dir, &self.store, MODEL_NAME, &echo.to_string())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let c = checkpoint::read_checkpoint(dir)?;
        let echo: serde_json::Value = serde_json::from_str(checkpoint::config_json(&c)?)
            .map_err(|e| Error::Format(format!("encoder config echo: {e}")))?;
        let spec: EncoderSpec = serde_json::from_value(echo["spec"].clone())
            .map_err(|e| Error::Format(format!("encoder spec: {e}")))?;
        let mut model = Self::new(spec, &mut seed::stream(0, "unused"))?;
        checkpoint::load_into_store(&mut model.store, &c, MODEL_NAME)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(c: usize, t: usize, offset: f32) -> EegSample {
        EegSample { signal: Tensor::from_fn([c, t], |i| (i as f32 * 0.37 + offset).sin()), label: 0, subject: 0 }
    }

    #[test]
    fn embeddings_are_unit_rows() {
        let m = EncoderModel::new(EncoderSpec::new(3), &mut seed::stream(1, "t")).unwrap();
        let xs = [sample(3, 6, 0.0), sample(3, 6, 1.0), sample(3, 6, 0.0)];
        let refs: Vec<&EegSample> = xs.iter().collect();
        let e = m.embed(&refs).unwrap();
        assert_eq!(e.shape(), [3, EMBED_DIM]);
        for row in e.data().chunks(EMBED_DIM) {
            let n: f32 = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-5);
        }
        assert_eq!(&e.data()[..EMBED_DIM], &e.data()[2 * EMBED_DIM..]);
    }

    #[test]
    fn wrong_channel_count_is_shape_error() {
        let m = EncoderModel::new(EncoderSpec::new(3), &mut seed::stream(1, "t")).unwrap();
        let x = sample(4, 6, 0.0);
        assert!(matches!(m.embed(&[&x]), Err(Error::Shape(_))));
    }
}
