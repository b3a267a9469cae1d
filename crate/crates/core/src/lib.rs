//! EEG-conditioned image synthesis: a triplet-trained recurrent EEG encoder,
//! a hinge-loss conditional GAN with mode-seeking regularization and
//! differentiable augmentation, and the metrics used to evaluate both.

pub mod cgan;
pub mod checkpoint;
pub mod dataio;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod seed;

pub use error::{Error, Result};
