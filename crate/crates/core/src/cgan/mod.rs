//! Conditional GAN: generator and discriminator conditioned on EEG
//! embeddings, hinge losses, mode-seeking regularization and differentiable
//! augmentation.

pub mod augment;
mod eval;
mod loss;
mod nets;
mod train;

pub use augment::{AugmentParams, AugmentPolicy};
pub use eval::{evaluate_generator, generate_batched, generate_per_class, sample_grid, EvalConfig, GanEval};
pub use loss::{d_loss_hinge, d_loss_hinge_direct, g_loss_hinge, g_loss_hinge_direct, mode_seeking_loss};
pub use nets::{Discriminator, DiscriminatorNet, GanArch, Generator, GeneratorNet, LATENT_DIM};
pub use train::{
    save_checkpoints, train_gan, write_gan_log, DStepReport, GStepReport, GanConfig, GanLogRow, GanRun, GanRunOptions,
    GanTrainer, LatentSampler,
};
