//! Differentiable augmentation applied to every image the discriminator sees.
//!
//! Color jitter (brightness, saturation, contrast), a clip to `[-1, 1]`, then
//! an integer translation with zero padding. Parameters are drawn per sample
//! and returned so a pass can be replayed exactly.

use eeg2image_tensor::{Graph, Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    pub translation: bool,
    pub brightness: bool,
    pub saturation: bool,
    pub contrast: bool,
    /// Maximum shift as a fraction of the image side.
    pub translation_ratio: f64,
    /// Brightness offsets are drawn from `[-b, b]`.
    pub brightness_range: f64,
    pub saturation_range: (f64, f64),
    pub contrast_range: (f64, f64),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            translation: true,
            brightness: true,
            saturation: true,
            contrast: true,
            translation_ratio: 0.125,
            brightness_range: 0.5,
            saturation_range: (0.0, 2.0),
            contrast_range: (0.5, 1.5),
        }
    }
}

impl AugmentPolicy {
    /// Every op enabled but with ranges that make it the identity.
    pub fn zero_magnitude() -> Self {
        Self {
            translation_ratio: 0.0,
            brightness_range: 0.0,
            saturation_range: (1.0, 1.0),
            contrast_range: (1.0, 1.0),
            ..Self::default()
        }
    }

    pub fn max_shift(&self, side: usize) -> usize {
        if self.translation {
            (self.translation_ratio * side as f64).floor().max(0.0) as usize
        } else {
            0
        }
    }
}

/// Parameters drawn for one sample; identity values for disabled ops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub brightness: f64,
    pub saturation: f64,
    pub contrast: f64,
    pub shift_y: i64,
    pub shift_x: i64,
}

impl AugmentParams {
    pub const IDENTITY: Self = Self { brightness: 0.0, saturation: 1.0, contrast: 1.0, shift_y: 0, shift_x: 0 };
}

fn draw_range(rng: &mut seed::Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws parameters for `n` images of side `side`.
pub fn draw_params(policy: &AugmentPolicy, n: usize, side: usize, rng: &mut seed::Rng) -> Vec<AugmentParams> {
    let m = policy.max_shift(side) as i64;
    (0..n)
        .map(|_| {
            let mut p = AugmentParams::IDENTITY;
            if policy.brightness {
                let b = policy.brightness_range.abs();
                p.brightness = draw_range(rng, -b, b);
            }
            if policy.saturation {
                p.saturation = draw_range(rng, policy.saturation_range.0, policy.saturation_range.1);
            }
            if policy.contrast {
                p.contrast = draw_range(rng, policy.contrast_range.0, policy.contrast_range.1);
            }
            if m > 0 {
                p.shift_y = rng.random_range(-m..=m);
                p.shift_x = rng.random_range(-m..=m);
            }
            p
        })
        .collect()
}

/// Applies recorded parameters to an NCHW batch with three channels. Ops
/// whose parameters are the identity for the whole batch are skipped, so a
/// zero-magnitude policy returns `x` itself.
pub fn apply<T: Scalar>(g: &Graph<T>, x: Var, params: &[AugmentParams]) -> Var {
    let shape = g.shape(x);
    assert_eq!(shape.len(), 4, "augmentation expects NCHW");
    assert_eq!(shape[0], params.len(), "one parameter record per image");
    let mut y = x;
    let mut colored = false;
    if params.iter().any(|p| p.brightness != 0.0) {
        let b: Vec<T> = params.iter().map(|p| T::from_f64_lossy(p.brightness)).collect();
        y = brightness(g, y, &b);
        colored = true;
    }
    if params.iter().any(|p| p.saturation != 1.0) {
        let s: Vec<T> = params.iter().map(|p| T::from_f64_lossy(p.saturation)).collect();
        y = saturation(g, y, &s);
        colored = true;
    }
    if params.iter().any(|p| p.contrast != 1.0) {
        let c: Vec<T> = params.iter().map(|p| T::from_f64_lossy(p.contrast)).collect();
        y = contrast(g, y, &c);
        colored = true;
    }
    if colored {
        y = clip_unit(g, y);
    }
    if params.iter().any(|p| p.shift_y != 0 || p.shift_x != 0) {
        let shifts: Vec<(i64, i64)> = params.iter().map(|p| (p.shift_y, p.shift_x)).collect();
        y = translate(g, y, &shifts);
    }
    y
}

/// `x + b` per image.
pub fn brightness<T: Scalar>(g: &Graph<T>, x: Var, b: &[T]) -> Var {
    let xv = g.value(x);
    let per = xv.numel() / b.len();
    let out = Tensor::new(xv.shape(), xv.data().iter().enumerate().map(|(i, &v)| v + b[i / per]).collect());
    g.custom(&[x], out, |g| vec![Some(g.clone())])
}

/// `gray + s (x - gray)` where `gray` is the per-pixel channel mean.
pub fn saturation<T: Scalar>(g: &Graph<T>, x: Var, s: &[T]) -> Var {
    let xv = g.value(x);
    let (n, c, hw) = (xv.dim(0), xv.dim(1), xv.dim(2) * xv.dim(3));
    let ct = T::from_usize_lossy(c);
    let mut out = xv.data().to_vec();
    for i in 0..n {
        let img = &mut out[i * c * hw..(i + 1) * c * hw];
        for px in 0..hw {
            let gray = (0..c).map(|ch| img[ch * hw + px]).sum::<T>() / ct;
            for ch in 0..c {
                let v = &mut img[ch * hw + px];
                *v = gray + s[i] * (*v - gray);
            }
        }
    }
    let s = s.to_vec();
    g.custom(&[x], Tensor::new(xv.shape(), out), move |gr| {
        let mut d = gr.data().to_vec();
        for i in 0..n {
            let img = &mut d[i * c * hw..(i + 1) * c * hw];
            let k = (T::one() - s[i]) / ct;
            for px in 0..hw {
                let gsum = (0..c).map(|ch| img[ch * hw + px]).sum::<T>();
                for ch in 0..c {
                    let v = &mut img[ch * hw + px];
                    *v = s[i] * *v + k * gsum;
                }
            }
        }
        vec![Some(Tensor::new(gr.shape(), d))]
    })
}

/// `mean + c (x - mean)` where `mean` is over the whole image.
pub fn contrast<T: Scalar>(g: &Graph<T>, x: Var, c: &[T]) -> Var {
    let xv = g.value(x);
    let n = xv.dim(0);
    let per = xv.numel() / n;
    let pt = T::from_usize_lossy(per);
    let mut out = xv.data().to_vec();
    for (i, img) in out.chunks_mut(per).enumerate() {
        let mean = img.iter().copied().sum::<T>() / pt;
        img.iter_mut().for_each(|v| *v = mean + c[i] * (*v - mean));
    }
    let c = c.to_vec();
    g.custom(&[x], Tensor::new(xv.shape(), out), move |gr| {
        let mut d = gr.data().to_vec();
        for (i, img) in d.chunks_mut(per).enumerate() {
            let k = (T::one() - c[i]) * (img.iter().copied().sum::<T>() / pt);
            img.iter_mut().for_each(|v| *v = c[i] * *v + k);
        }
        vec![Some(Tensor::new(gr.shape(), d))]
    })
}

/// Clamp to `[-1, 1]`; gradient is zero where the input was outside.
pub fn clip_unit<T: Scalar>(g: &Graph<T>, x: Var) -> Var {
    let xv = g.value(x);
    let one = T::one();
    let out = xv.map(|v| v.max(-one).min(one));
    g.custom(&[x], out, move |gr| {
        vec![Some(gr.zip_map(&xv, |gv, v| if v < -one || v > one { T::zero() } else { gv }))]
    })
}

/// Shifts image `i` by `shifts[i] = (dy, dx)` pixels, zero-filling.
pub fn translate<T: Scalar>(g: &Graph<T>, x: Var, shifts: &[(i64, i64)]) -> Var {
    let xv = g.value(x);
    let (n, c, h, w) = (xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3));
    // For each output element, the source element it copies (if any).
    let mut src: Vec<Option<usize>> = Vec::with_capacity(xv.numel());
    for (i, &(dy, dx)) in shifts.iter().enumerate().take(n) {
        for ch in 0..c {
            for y in 0..h as i64 {
                for xx in 0..w as i64 {
                    let (sy, sx) = (y - dy, xx - dx);
                    let inside = (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx);
                    src.push(inside.then(|| ((i * c + ch) * h + sy as usize) * w + sx as usize));
                }
            }
        }
    }
    let out = Tensor::new(xv.shape(), src.iter().map(|s| s.map_or(T::zero(), |j| xv.data()[j])).collect());
    let shape = xv.shape().to_vec();
    g.custom(&[x], out, move |gr| {
        let mut d = vec![T::zero(); gr.numel()];
        for (o, s) in src.iter().enumerate() {
            if let Some(j) = s {
                d[*j] += gr.data()[o];
            }
        }
        vec![Some(Tensor::new(shape.clone(), d))]
    })
}
