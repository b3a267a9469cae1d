//! Run configuration: one JSON document, flags override fields.

use std::path::{Path, PathBuf};

use anyhow::Context;
use eeg2image::cgan::GanConfig;
use eeg2image::dataio::SynthSpec;
use eeg2image::encoder::{EncoderTrainConfig, TripletConfig};
use eeg2image::metrics::SurrogateConfig;
use eeg2image::seed;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// File name of the resolved configuration written beside every output.
pub const CONFIG_ECHO: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; components draw from named sub-streams of it.
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub gan: GanConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            gan: GanConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

/// A stored dataset, or a synthetic one generated on the fly when `path` is
/// absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub synth: SynthConfig,
    /// Per-channel z-scoring of EEG windows.
    pub normalize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: None, synth: SynthConfig::default(), normalize: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub timesteps: usize,
    pub image_size: usize,
    /// Defaults to the `data` sub-stream of the master seed.
    pub seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let s = SynthSpec::default();
        Self {
            classes: s.classes,
            per_class: s.per_class,
            channels: s.channels,
            timesteps: s.timesteps,
            image_size: s.image_size,
            seed: None,
        }
    }
}

impl SynthConfig {
    pub fn spec(&self, master: u64) -> SynthSpec {
        SynthSpec {
            classes: self.classes,
            per_class: self.per_class,
            channels: self.channels,
            timesteps: self.timesteps,
            image_size: self.image_size,
            seed: self.seed.unwrap_or_else(|| seed::sub_seed(master, "data")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Online triplet mining.
    Triplet,
    /// Softmax classification baseline.
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub regime: Regime,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub output_norm: bool,
    pub triplet: TripletConfig,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let d = EncoderTrainConfig::default();
        Self {
            regime: Regime::Triplet,
            epochs: d.epochs,
            lr: d.lr,
            hidden: d.hidden,
            output_norm: d.output_norm,
            triplet: d.triplet,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub kmeans_restarts: usize,
    /// Inception-score splits, used both during training and by `evaluate`.
    pub is_splits: usize,
    pub surrogate: SurrogateConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { kmeans_restarts: 10, is_splits: 10, surrogate: SurrogateConfig::default() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    pub fn encoder_train(&self) -> EncoderTrainConfig {
        EncoderTrainConfig {
            epochs: self.encoder.epochs,
            lr: self.encoder.lr,
            hidden: self.encoder.hidden,
            output_norm: self.encoder.output_norm,
            triplet: self.encoder.triplet.clone(),
            kmeans_restarts: self.metrics.kmeans_restarts,
        }
    }

    /// GAN settings with the shared metric settings applied.
    pub fn gan_train(&self) -> GanConfig {
        let mut g = self.gan.clone();
        g.eval.is_splits = self.metrics.is_splits;
        g
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_echo(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(CONFIG_ECHO);
        std::fs::write(&path, self.to_json() + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.data.path = Some("data".into());
        cfg.data.synth.seed = Some(3);
        cfg.encoder.regime = Regime::Softmax;
        cfg.gan.use_ms = false;
        assert_eq!(RunConfig::parse(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::parse(r#"{"seed": 3, "gan": {"steps": 10}}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.gan.steps, 10);
        assert_eq!(cfg.gan.batch_size, GanConfig::default().batch_size);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [r#"{"sed": 3}"#, r#"{"gan": {"stepz": 1}}"#, r#"{"data": {"synth": {"hue": 1}}}"#] {
            let err = RunConfig::parse(doc).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{doc}");
        }
    }

    #[test]
    fn synthetic_seed_defaults_to_data_stream() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.data.synth.spec(7).seed, seed::sub_seed(7, "data"));
        let fixed = SynthConfig { seed: Some(7), ..SynthConfig::default() };
        assert_eq!(fixed.spec(99).seed, 7);
    }
}
