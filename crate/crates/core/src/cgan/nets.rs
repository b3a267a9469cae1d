//! DCGAN-style conditional generator and discriminator.

use std::path::Path;

use eeg2image_tensor::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Linear};
use eeg2image_tensor::{Binding, Graph, Mode, ParamStore, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::dataio::nchw_to_nhwc;
use crate::error::{Error, Result};
use crate::seed;

pub const LATENT_DIM: usize = 128;
const INIT_STD: f64 = 0.02;
const MIN_CHANNELS: usize = 8;

/// Sizes shared by the generator and discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanArch {
    pub image_size: usize,
    /// Channels of the 4x4 map at the generator input and discriminator output.
    pub base_channels: usize,
    pub latent_dim: usize,
    pub cond_dim: usize,
}

impl GanArch {
    pub fn new(image_size: usize, base_channels: usize) -> Self {
        Self { image_size, base_channels, latent_dim: LATENT_DIM, cond_dim: crate::encoder::EMBED_DIM }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.image_size;
        if h < 8 || !h.is_power_of_two() {
            return Err(Error::Config(format!("GAN image size must be a power of two >= 8, got {h}")));
        }
        if self.base_channels == 0 || self.latent_dim == 0 || self.cond_dim == 0 {
            return Err(Error::Config("GAN widths must be positive".into()));
        }
        Ok(())
    }

    /// Number of stride-2 stages between 4x4 and the image side.
    pub fn stages(&self) -> usize {
        (self.image_size / 4).trailing_zeros() as usize
    }
}

fn halve(c: usize) -> usize {
    (c / 2).max(MIN_CHANNELS.min(c))
}

/// Architecture of G over a caller-owned [`ParamStore`].
#[derive(Clone, Debug)]
pub struct GeneratorNet {
    pub arch: GanArch,
    input: Linear,
    input_bn: BatchNorm2d,
    ups: Vec<(ConvTranspose2d, BatchNorm2d)>,
    out: Conv2d,
}

impl GeneratorNet {
    /// `[z || psi] -> affine -> 4x4xF0 -> BN -> ReLU -> (tconv, BN, ReLU) x stages -> 3x3 conv -> tanh`.
    pub fn new<T: Scalar>(arch: GanArch, store: &mut ParamStore<T>, rng: &mut seed::Rng) -> Result<Self> {
        arch.validate()?;
        let f0 = arch.base_channels;
        let input = Linear::normal(store, "g.input", arch.latent_dim + arch.cond_dim, f0 * 16, INIT_STD, rng);
        let input_bn = BatchNorm2d::new(store, "g.input_bn", f0);
        let mut ups = Vec::new();
        let mut c = f0;
        for i in 0..arch.stages() {
            let next = halve(c);
            let conv = ConvTranspose2d::new(store, &format!("g.up{i}"), c, next, 4, 2, 1, false, INIT_STD, rng);
            ups.push((conv, BatchNorm2d::new(store, &format!("g.up{i}_bn"), next)));
            c = next;
        }
        let out = Conv2d::new(store, "g.out", c, 3, 3, 1, 1, true, INIT_STD, rng);
        Ok(Self { arch, input, input_bn, ups, out })
    }

    /// `z [N, latent]`, `psi [N, cond]` -> images `[N, 3, H, W]` in `[-1, 1]`.
    pub fn forward<T: Scalar>(&self, b: &Binding<'_, T>, z: Var, psi: Var) -> Var {
        let g = b.graph();
        let n = g.shape(z)[0];
        let x = g.concat(&[z, scaled_condition(b, &self.arch, psi)], 1);
        let h = self.input.forward(b, x);
        let mut h = g.reshape(h, &[n, self.arch.base_channels, 4, 4]);
        h = g.relu(self.input_bn.forward(b, h));
        for (conv, bn) in &self.ups {
            h = g.relu(bn.forward(b, conv.forward(b, h)));
        }
        g.tanh(self.out.forward(b, h))
    }
}

/// Scales unit-norm conditions by `sqrt(cond_dim)` so their coordinates
/// have the same magnitude as the standard-normal latent.
fn scaled_condition<T: Scalar>(b: &Binding<'_, T>, arch: &GanArch, psi: Var) -> Var {
    b.graph().scale(psi, T::from_f64_lossy((arch.cond_dim as f64).sqrt()))
}

/// Architecture of D over a caller-owned [`ParamStore`].
#[derive(Clone, Debug)]
pub struct DiscriminatorNet {
    pub arch: GanArch,
    blocks: Vec<(Conv2d, Option<BatchNorm2d>)>,
    cond: Linear,
    /// Index of the block whose input is the 8x8 map receiving the condition.
    inject_at: usize,
    head: Linear,
}

impl DiscriminatorNet {
    /// Stride-2 conv blocks down to 4x4 (leaky ReLU 0.2, batch norm on all
    /// but the first); the projected condition is broadcast and concatenated
    /// onto the 8x8 map; a linear head gives one score.
    pub fn new<T: Scalar>(arch: GanArch, store: &mut ParamStore<T>, rng: &mut seed::Rng) -> Result<Self> {
        arch.validate()?;
        let n = arch.stages();
        let widths: Vec<usize> = (0..n).map(|i| (arch.base_channels >> (n - 1 - i)).max(MIN_CHANNELS.min(arch.base_channels))).collect();
        let cond_channels = (arch.base_channels / 2).max(MIN_CHANNELS);
        let inject_at = n - 1;
        let cond = Linear::normal(store, "d.cond", arch.cond_dim, cond_channels, INIT_STD, rng);
        let mut blocks = Vec::new();
        let mut cin = 3;
        for (i, &w) in widths.iter().enumerate() {
            if i == inject_at {
                cin += cond_channels;
            }
            let conv = Conv2d::new(store, &format!("d.down{i}"), cin, w, 4, 2, 1, i == 0, INIT_STD, rng);
            let bn = (i > 0).then(|| BatchNorm2d::new(store, &format!("d.down{i}_bn"), w));
            blocks.push((conv, bn));
            cin = w;
        }
        let head = Linear::normal(store, "d.head", cin * 16, 1, INIT_STD, rng);
        Ok(Self { arch, blocks, cond, inject_at, head })
    }

    /// `x [N, 3, H, W]`, `psi [N, cond]` -> scores `[N]`.
    pub fn forward<T: Scalar>(&self, b: &Binding<'_, T>, x: Var, psi: Var) -> Var {
        let g = b.graph();
        let n = g.shape(x)[0];
        let mut h = x;
        for (i, (conv, bn)) in self.blocks.iter().enumerate() {
            if i == self.inject_at {
                let s = g.shape(h);
                let psi = scaled_condition(b, &self.arch, psi);
                let c = g.broadcast_spatial(self.cond.forward(b, psi), s[2], s[3]);
                h = g.concat(&[h, c], 1);
            }
            h = conv.forward(b, h);
            if let Some(bn) = bn {
                h = bn.forward(b, h);
            }
            h = g.leaky_relu(h, T::from_f64_lossy(0.2));
        }
        let flat = g.reshape(h, &[n, g.shape(h)[1..].iter().product()]);
        let score = self.head.forward(b, flat);
        g.reshape(score, &[n])
    }
}

const GENERATOR_NAME: &str = "generator";
const DISCRIMINATOR_NAME: &str = "discriminator";

/// A generator with its parameters.
pub struct Generator {
    pub net: GeneratorNet,
    pub store: ParamStore<f32>,
}

/// A discriminator with its parameters.
pub struct Discriminator {
    pub net: DiscriminatorNet,
    pub store: ParamStore<f32>,
}

fn read_arch(c: &crate::dataio::Container) -> Result<GanArch> {
    let echo: serde_json::Value = serde_json::from_str(checkpoint::config_json(c)?)
        .map_err(|e| Error::Format(format!("GAN config echo: {e}")))?;
    serde_json::from_value(echo["arch"].clone()).map_err(|e| Error::Format(format!("GAN architecture: {e}")))
}

fn echo(arch: &GanArch, training: &serde_json::Value) -> String {
    serde_json::json!({ "arch": arch, "training": training }).to_string()
}

impl Generator {
    pub fn new(arch: GanArch, rng: &mut seed::Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = GeneratorNet::new(arch, &mut store, rng)?;
        Ok(Self { net, store })
    }

    /// Images `[N, H, W, 3]` for latents `z [N, latent]` and conditions
    /// `psi [N, cond]`, using running batch-norm statistics so every row
    /// depends only on its own inputs.
    pub fn generate(&self, z: &Tensor<f32>, psi: &Tensor<f32>) -> Result<Tensor<f32>> {
        let arch = self.net.arch;
        if z.ndim() != 2 || psi.ndim() != 2 || z.dim(0) != psi.dim(0) || z.dim(1) != arch.latent_dim || psi.dim(1) != arch.cond_dim {
            return Err(Error::Shape(format!(
                "generate needs z [N, {}] and psi [N, {}], got {:?} and {:?}",
                arch.latent_dim,
                arch.cond_dim,
                z.shape(),
                psi.shape()
            )));
        }
        let g = Graph::new();
        let b = self.store.bind(&g, Mode::Eval);
        let out = self.net.forward(&b, g.constant(z.clone()), g.constant(psi.clone()));
        Ok(nchw_to_nhwc(&g.value(out)))
    }

    pub fn save(&self, dir: &Path, training: &serde_json::Value) -> Result<()> {
        checkpoint::save_store(dir, &self.store, GENERATOR_NAME, &echo(&self.net.arch, training))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let c = checkpoint::read_checkpoint(dir)?;
        let mut model = Self::new(read_arch(&c)?, &mut seed::stream(0, "unused"))?;
        checkpoint::load_into_store(&mut model.store, &c, GENERATOR_NAME)?;
        Ok(model)
    }
}

impl Discriminator {
    pub fn new(arch: GanArch, rng: &mut seed::Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = DiscriminatorNet::new(arch, &mut store, rng)?;
        Ok(Self { net, store })
    }

    /// Scores for NCHW images in the given mode (no parameter updates).
    pub fn score(&self, images_nchw: &Tensor<f32>, psi: &Tensor<f32>, mode: Mode) -> Tensor<f32> {
        let g = Graph::new();
        let b = self.store.bind(&g, mode);
        let s = self.net.forward(&b, g.constant(images_nchw.clone()), g.constant(psi.clone()));
        (*g.value(s)).clone()
    }

    pub fn save(&self, dir: &Path, training: &serde_json::Value) -> Result<()> {
        checkpoint::save_store(dir, &self.store, DISCRIMINATOR_NAME, &echo(&self.net.arch, training))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let c = checkpoint::read_checkpoint(dir)?;
        let mut model = Self::new(read_arch(&c)?, &mut seed::stream(0, "unused"))?;
        checkpoint::load_into_store(&mut model.store, &c, DISCRIMINATOR_NAME)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shapes_and_range() {
        let arch = GanArch::new(16, 16);
        let mut rng = seed::stream(1, "t");
        let g = Generator::new(arch, &mut rng).unwrap();
        let d = Discriminator::new(arch, &mut rng).unwrap();
        let z = Tensor::randn([4, LATENT_DIM], 0.0, 1.0, &mut rng);
        let psi = Tensor::randn([4, arch.cond_dim], 0.0, 0.1, &mut rng);
        let imgs = g.generate(&z, &psi).unwrap();
        assert_eq!(imgs.shape(), [4, 16, 16, 3]);
        assert!(imgs.data().iter().all(|v| v.abs() <= 1.0));
        let s = d.score(&crate::dataio::nhwc_to_nchw(&imgs), &psi, Mode::Frozen);
        assert_eq!(s.shape(), [4]);
        assert!(s.all_finite());
    }

    #[test]
    fn rejects_small_or_odd_sizes() {
        let mut rng = seed::stream(1, "t");
        assert!(Generator::new(GanArch::new(4, 8), &mut rng).is_err());
        assert!(Discriminator::new(GanArch::new(24, 8), &mut rng).is_err());
    }

    #[test]
    fn generate_checks_shapes() {
        let arch = GanArch::new(8, 8);
        let g = Generator::new(arch, &mut seed::stream(1, "t")).unwrap();
        let z = Tensor::zeros([2, LATENT_DIM]);
        let psi = Tensor::zeros([3, arch.cond_dim]);
        assert!(matches!(g.generate(&z, &psi), Err(Error::Shape(_))));
    }
}
