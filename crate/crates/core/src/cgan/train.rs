use std::path::{Path, PathBuf};

use eeg2image_tensor::{Adam, AdamConfig, Graph, Mode, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::augment::{self, AugmentParams, AugmentPolicy};
use super::eval::{evaluate_generator, sample_grid, EvalConfig, GanEval};
use super::loss::{d_loss_hinge, g_loss_hinge, mode_seeking_loss};
use super::nets::{Discriminator, GanArch, Generator};
use crate::dataio::{nhwc_to_nchw, EegSample, PairedDataset, SplitKind};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::metrics::Classifier;
use crate::seed;

/// Standard-normal latent vectors from a seeded stream.
pub struct LatentSampler {
    pub dim: usize,
    rng: seed::Rng,
}

impl LatentSampler {
    pub fn new(dim: usize, rng: seed::Rng) -> Self {
        Self { dim, rng }
    }

    pub fn sample(&mut self, n: usize) -> Tensor<f32> {
        Tensor::from_fn([n, self.dim], |_| StandardNormal.sample(&mut self.rng))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    /// Generator updates.
    pub steps: usize,
    pub batch_size: usize,
    pub base_channels: usize,
    pub use_ms: bool,
    pub use_aug: bool,
    pub alpha: f64,
    pub eps_ms: f64,
    pub d_steps_per_g_step: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub augment: AugmentPolicy,
    /// Metric evaluation interval in steps (0 disables periodic evaluation).
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub sample_every: usize,
    pub eval: EvalConfig,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            base_channels: 256,
            use_ms: true,
            use_aug: true,
            alpha: 1.0,
            eps_ms: 1e-5,
            d_steps_per_g_step: 1,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            augment: AugmentPolicy::default(),
            eval_every: 500,
            checkpoint_every: 500,
            sample_every: 500,
            eval: EvalConfig::default(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("mode-seeking weight must be >= 0, got {}", self.alpha)));
        }
        if !(self.eps_ms > 0.0) {
            return Err(Error::Config(format!("mode-seeking guard must be > 0, got {}", self.eps_ms)));
        }
        if self.batch_size < 2 || self.d_steps_per_g_step == 0 {
            return Err(Error::Config("GAN batch size must be >= 2 and d_steps_per_g_step >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("GAN learning rate must be positive".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }
}

/// Everything one discriminator update consumed and produced.
#[derive(Clone, Debug)]
pub struct DStepReport {
    pub d_loss: f32,
    pub real: Tensor<f32>,
    pub fake: Tensor<f32>,
    pub psi_real: Tensor<f32>,
    pub psi_fake: Tensor<f32>,
    pub real_aug: Vec<AugmentParams>,
    pub fake_aug: Vec<AugmentParams>,
    pub real_scores: Vec<f32>,
    pub fake_scores: Vec<f32>,
}

/// Everything one generator update produced.
#[derive(Clone, Debug)]
pub struct GStepReport {
    pub g_loss: f32,
    pub ms_loss: f32,
    pub fake_scores: Vec<f32>,
}

/// Conditions precomputed from a frozen encoder.
struct Conditions {
    psi: Tensor<f32>,
    by_class: Vec<Vec<usize>>,
}

impl Conditions {
    fn row(&self, i: usize) -> &[f32] {
        let d = self.psi.dim(1);
        &self.psi.data()[i * d..(i + 1) * d]
    }
}

/// Owns G, D, their optimizers and all random streams of one run.
pub struct GanTrainer<'a> {
    pub cfg: GanConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    ds: &'a PairedDataset,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    train_cond: Conditions,
    batch_rng: seed::Rng,
    aug_rng: seed::Rng,
    latent: LatentSampler,
    pub step: usize,
}

impl<'a> GanTrainer<'a> {
    pub fn new(ds: &'a PairedDataset, encoder: &EncoderModel, cfg: GanConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let arch = GanArch::new(ds.image_size(), cfg.base_channels);
        let train_eeg: Vec<&EegSample> = ds.eeg.train.iter().collect();
        let psi = encoder.embed(&train_eeg)?;
        let by_class = ds.eeg_by_class(SplitKind::Train);
        let image_pools = ds.image_pools(SplitKind::Train);
        for k in 0..ds.num_classes {
            if by_class[k].is_empty() || image_pools[k].is_empty() {
                return Err(Error::Config(format!("class {k} needs training EEG and images for GAN training")));
            }
        }
        let mut init = seed::stream(seed, "gan-init");
        let generator = Generator::new(arch, &mut init)?;
        let discriminator = Discriminator::new(arch, &mut init)?;
        Ok(Self {
            opt_g: Adam::new(cfg.adam()),
            opt_d: Adam::new(cfg.adam()),
            cfg,
            generator,
            discriminator,
            ds,
            train_cond: Conditions { psi, by_class },
            batch_rng: seed::stream(seed, "gan-batch"),
            aug_rng: seed::stream(seed, "augment"),
            latent: LatentSampler::new(arch.latent_dim, seed::stream(seed, "gan-latent")),
            step: 0,
        })
    }

    fn random_conditions(&mut self, n: usize) -> Tensor<f32> {
        let total = self.train_cond.psi.dim(0);
        let rows: Vec<usize> = (0..n).map(|_| self.batch_rng.random_range(0..total)).collect();
        self.train_cond.psi.select_rows(&rows)
    }

    fn draw_aug(&mut self, n: usize) -> Vec<AugmentParams> {
        if self.cfg.use_aug {
            augment::draw_params(&self.cfg.augment, n, self.ds.image_size(), &mut self.aug_rng)
        } else {
            vec![AugmentParams::IDENTITY; n]
        }
    }

    /// Real images with conditions embedded from same-class EEG.
    fn real_batch(&mut self, n: usize) -> (Tensor<f32>, Tensor<f32>) {
        let train = &self.ds.images.train;
        let mut imgs = Vec::with_capacity(n);
        let mut psi = Vec::with_capacity(n * self.train_cond.psi.dim(1));
        for _ in 0..n {
            let i = self.batch_rng.random_range(0..train.len());
            let class = &self.train_cond.by_class[train[i].label];
            let e = class[self.batch_rng.random_range(0..class.len())];
            imgs.push(train[i].image.clone());
            psi.extend_from_slice(self.train_cond.row(e));
        }
        (nhwc_to_nchw(&Tensor::stack(&imgs)), Tensor::new([n, self.train_cond.psi.dim(1)], psi))
    }

    /// One discriminator update on a real batch and a fresh fake batch.
    pub fn d_step(&mut self) -> Result<DStepReport> {
        let n = self.cfg.batch_size;
        let (real, psi_real) = self.real_batch(n);
        let psi_fake = self.random_conditions(n);
        let z = self.latent.sample(n);
        let fake = {
            let g = Graph::new();
            let b = self.generator.store.bind(&g, Mode::Frozen);
            let out = self.generator.net.forward(&b, g.constant(z), g.constant(psi_fake.clone()));
            (*g.value(out)).clone()
        };
        let real_aug = self.draw_aug(n);
        let fake_aug = self.draw_aug(n);
        let g = Graph::new();
        let b = self.discriminator.store.bind(&g, Mode::Train);
        let xr = augment::apply(&g, g.constant(real.clone()), &real_aug);
        let xf = augment::apply(&g, g.constant(fake.clone()), &fake_aug);
        let sr = self.discriminator.net.forward(&b, xr, g.constant(psi_real.clone()));
        let sf = self.discriminator.net.forward(&b, xf, g.constant(psi_fake.clone()));
        let loss = d_loss_hinge(&g, sr, sf);
        let d_loss = g.value(loss).item();
        check(self.step, "d_loss", d_loss)?;
        let grads = b.param_grads(&g.backward(loss));
        let updates = b.take_updates();
        let (real_scores, fake_scores) = (g.value(sr).data().to_vec(), g.value(sf).data().to_vec());
        drop(b);
        self.opt_d.step(&mut self.discriminator.store, &grads);
        self.discriminator.store.apply_updates(updates);
        Ok(DStepReport { d_loss, real, fake, psi_real, psi_fake, real_aug, fake_aug, real_scores, fake_scores })
    }

    /// One generator update: `B/2` conditions, each rendered from two latents.
    pub fn g_step(&mut self) -> Result<GStepReport> {
        let m = (self.cfg.batch_size / 2).max(1);
        let psi = self.random_conditions(m);
        let z1 = self.latent.sample(m);
        let mut z2 = self.latent.sample(m);
        while z1.data() == z2.data() {
            z2 = self.latent.sample(m);
        }
        let aug = self.draw_aug(2 * m);
        let g = Graph::new();
        let bg = self.generator.store.bind(&g, Mode::Train);
        let bd = self.discriminator.store.bind(&g, Mode::Frozen);
        let z = g.constant(Tensor::stack(&[z1.clone(), z2.clone()]).reshape([2 * m, z1.dim(1)]));
        let psi2 = g.constant(Tensor::stack(&[psi.clone(), psi]).reshape([2 * m, self.train_cond.psi.dim(1)]));
        let fake = self.generator.net.forward(&bg, z, psi2);
        let scores = self.discriminator.net.forward(&bd, augment::apply(&g, fake, &aug), psi2);
        let g_loss = g_loss_hinge(&g, scores);
        let ms = mode_seeking_loss(&g, g.narrow(fake, 0, 0, m), g.narrow(fake, 0, m, m), &z1, &z2, self.cfg.eps_ms);
        let (g_val, ms_val) = (g.value(g_loss).item(), g.value(ms).item());
        check(self.step, "g_loss", g_val)?;
        let total = if self.cfg.use_ms {
            check(self.step, "ms_loss", ms_val)?;
            g.add(g_loss, g.scale(ms, self.cfg.alpha as f32))
        } else {
            g_loss
        };
        let grads = bg.param_grads(&g.backward(total));
        let updates = bg.take_updates();
        let fake_scores = g.value(scores).data().to_vec();
        drop((bg, bd));
        self.opt_g.step(&mut self.generator.store, &grads);
        self.generator.store.apply_updates(updates);
        Ok(GStepReport { g_loss: g_val, ms_loss: ms_val, fake_scores })
    }

    /// `d_steps_per_g_step` discriminator updates then one generator update.
    pub fn step(&mut self) -> Result<(f32, GStepReport)> {
        let mut d_sum = 0.0;
        for _ in 0..self.cfg.d_steps_per_g_step {
            d_sum += self.d_step()?.d_loss;
        }
        let g = self.g_step()?;
        self.step += 1;
        Ok((d_sum / self.cfg.d_steps_per_g_step as f32, g))
    }
}

fn check(step: usize, term: &str, v: f32) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Training { step, term: term.into(), value: v as f64 })
    }
}

/// One row of the GAN metric log; evaluation columns are filled only on
/// evaluation steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanLogRow {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub ms_loss: f64,
    pub eval: Option<GanEval>,
}

pub fn write_gan_log(path: &Path, rows: &[GanLogRow]) -> Result<()> {
    let mut out = String::from("step,d_loss,g_loss,ms_loss,is_mean,is_std,class_consistency,diversity\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}", r.step, r.d_loss, r.g_loss, r.ms_loss));
        match &r.eval {
            Some(e) => out.push_str(&format!(",{},{},{},{}\n", e.is_mean, e.is_std, e.class_consistency, e.diversity)),
            None => out.push_str(",,,,\n"),
        }
    }
    std::fs::write(path, out).map_err(Error::write(path))
}

/// Where and with what to report during training.
#[derive(Default)]
pub struct GanRunOptions<'c> {
    pub out_dir: Option<PathBuf>,
    pub classifier: Option<&'c dyn Classifier>,
    /// Echoed into checkpoint metadata.
    pub config_echo: serde_json::Value,
}

pub struct GanRun {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub log: Vec<GanLogRow>,
}

fn due(step: usize, every: usize, last: usize) -> bool {
    step == last || (every > 0 && step % every == 0)
}

/// Alternating hinge-loss training with periodic evaluation, checkpoints
/// (`checkpoints/{generator,discriminator}`) and sample sheets
/// (`samples/step_NNNNNN.png`) under `opts.out_dir`.
pub fn train_gan(
    ds: &PairedDataset,
    encoder: &EncoderModel,
    cfg: &GanConfig,
    seed: u64,
    opts: &GanRunOptions<'_>,
) -> Result<GanRun> {
    let mut trainer = GanTrainer::new(ds, encoder, cfg.clone(), seed)?;
    let mut log = Vec::with_capacity(cfg.steps);
    let eval_seed = seed::sub_seed(seed, "gan-eval");
    for _ in 0..cfg.steps {
        let (d_loss, g) = trainer.step()?;
        let step = trainer.step;
        let mut row = GanLogRow { step, d_loss: d_loss as f64, g_loss: g.g_loss as f64, ms_loss: g.ms_loss as f64, eval: None };
        if let Some(clf) = opts.classifier {
            if due(step, cfg.eval_every, cfg.steps) {
                let e = evaluate_generator(&trainer.generator, ds, encoder, clf, &cfg.eval, eval_seed)?;
                log::info!(
                    "gan step {step}: d {:.3} g {:.3} ms {:.3} IS {:.3} consistency {:.3} diversity {:.4}",
                    row.d_loss,
                    row.g_loss,
                    row.ms_loss,
                    e.is_mean,
                    e.class_consistency,
                    e.diversity
                );
                row.eval = Some(e);
            }
        }
        if step % 100 == 0 {
            log::debug!("gan step {step}: d {:.3} g {:.3} ms {:.3}", row.d_loss, row.g_loss, row.ms_loss);
        }
        if let Some(dir) = &opts.out_dir {
            if due(step, cfg.checkpoint_every, cfg.steps) {
                save_checkpoints(dir, &trainer.generator, &trainer.discriminator, &opts.config_echo)?;
            }
            if due(step, cfg.sample_every, cfg.steps) {
                let path = dir.join("samples").join(format!("step_{step:06}.png"));
                sample_grid(&trainer.generator, ds, encoder, cfg.eval.sheet_per_class, eval_seed, &path)?;
            }
        }
        log.push(row);
    }
    if let Some(dir) = &opts.out_dir {
        if cfg.steps == 0 {
            save_checkpoints(dir, &trainer.generator, &trainer.discriminator, &opts.config_echo)?;
        }
        write_gan_log(&dir.join("gan_log.csv"), &log)?;
    }
    Ok(GanRun { generator: trainer.generator, discriminator: trainer.discriminator, log })
}

pub fn save_checkpoints(dir: &Path, g: &Generator, d: &Discriminator, echo: &serde_json::Value) -> Result<()> {
    let ck = dir.join("checkpoints");
    g.save(&ck.join("generator"), echo)?;
    d.save(&ck.join("discriminator"), echo)
}
