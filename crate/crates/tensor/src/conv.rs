//! 2-D convolution and transposed convolution (NCHW) via im2col + GEMM.

use crate::scalar::{gemm, MatRef};
use crate::{Graph, Scalar, Tensor, Var};

/// Geometry of a square-kernel convolution reading a `c x h x w` image and
/// producing an `oh x ow` grid of patches.
#[derive(Clone, Copy, Debug)]
struct Geom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn patches(&self) -> usize {
        self.oh * self.ow
    }

    /// Visits `(col_index, image_offset)` for every in-bounds tap of kernel
    /// position `(ky, kx)` on sample `ni`, channel `ci`.
    #[inline]
    fn for_taps(&self, ni: usize, ci: usize, ky: usize, kx: usize, mut f: impl FnMut(usize, usize)) {
        let p = self.patches();
        let img = (ni * self.c + ci) * self.h * self.w;
        for oy in 0..self.oh {
            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
            if iy < 0 || iy >= self.h as isize {
                continue;
            }
            let row = img + iy as usize * self.w;
            let col = ni * p + oy * self.ow;
            for ox in 0..self.ow {
                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                if ix < 0 || ix >= self.w as isize {
                    continue;
                }
                f(col + ox, row + ix as usize);
            }
        }
    }
}

/// `[n, c, h, w] -> [c*k*k, n*oh*ow]`.
fn im2col<T: Scalar>(x: &[T], g: Geom) -> Vec<T> {
    let cols_n = g.n * g.patches();
    let mut cols = vec![T::zero(); g.c * g.k * g.k * cols_n];
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * cols_n;
                let dst = &mut cols[row..row + cols_n];
                for ni in 0..g.n {
                    g.for_taps(ni, ci, ky, kx, |col, src| dst[col] = x[src]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back into an image.
fn col2im<T: Scalar>(cols: &[T], g: Geom) -> Vec<T> {
    let cols_n = g.n * g.patches();
    let mut x = vec![T::zero(); g.n * g.c * g.h * g.w];
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * cols_n;
                let src = &cols[row..row + cols_n];
                for ni in 0..g.n {
                    g.for_taps(ni, ci, ky, kx, |col, dst| x[dst] += src[col]);
                }
            }
        }
    }
    x
}

/// `[n, c, p] -> [c, n*p]`.
fn to_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let src = &x[(ni * c + ci) * p..(ni * c + ci + 1) * p];
            out[ci * n * p + ni * p..ci * n * p + (ni + 1) * p].copy_from_slice(src);
        }
    }
    out
}

/// `[c, n*p] -> [n, c, p]`.
fn from_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ci in 0..c {
        for ni in 0..n {
            let src = &x[ci * n * p + ni * p..ci * n * p + (ni + 1) * p];
            out[(ni * c + ci) * p..(ni * c + ci + 1) * p].copy_from_slice(src);
        }
    }
    out
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], p: usize) {
    let c = bias.len();
    for (i, chunk) in out.chunks_mut(p).enumerate() {
        let b = bias[i % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Scalar>(g: &[T], c: usize, p: usize) -> Vec<T> {
    let mut db = vec![T::zero(); c];
    for (i, chunk) in g.chunks(p).enumerate() {
        db[i % c] += chunk.iter().copied().sum::<T>();
    }
    db
}

impl<T: Scalar> Graph<T> {
    /// Cross-correlation of `x [N, Cin, H, W]` with `w [Cout, Cin, k, k]`.
    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        assert_eq!(xv.ndim(), 4, "conv2d input must be NCHW, got {:?}", xv.shape());
        let (n, cin, h, wd) = (xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3));
        let (cout, k) = (wv.dim(0), wv.dim(2));
        assert_eq!(wv.shape(), &[cout, cin, k, k], "conv2d weight shape mismatch");
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv2d kernel larger than padded input");
        let geom = Geom {
            n,
            c: cin,
            h,
            w: wd,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (wd + 2 * pad - k) / stride + 1,
        };
        let p = geom.patches();
        let kk = cin * k * k;
        let cols = im2col(xv.data(), geom);
        let mut tmp = vec![T::zero(); cout * n * p];
        gemm(MatRef::new(wv.data(), cout, kk), MatRef::new(&cols, kk, n * p), T::zero(), &mut tmp);
        let mut out = from_channel_major(&tmp, n, cout, p);
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b).data(), p);
        }
        let out = Tensor::new([n, cout, geom.oh, geom.ow], out);
        let mut parents = vec![x, w];
        parents.extend(b);
        let has_bias = b.is_some();
        let x_shape = xv.shape().to_vec();
        let w_shape = wv.shape().to_vec();
        self.custom(&parents, out, move |g| {
            let gt = to_channel_major(g.data(), n, cout, p);
            let mut dw = vec![T::zero(); cout * kk];
            gemm(MatRef::new(&gt, cout, n * p), MatRef::t(&cols, kk, n * p), T::zero(), &mut dw);
            let mut dcols = vec![T::zero(); kk * n * p];
            gemm(MatRef::t(wv.data(), cout, kk), MatRef::new(&gt, cout, n * p), T::zero(), &mut dcols);
            let dx = col2im(&dcols, geom);
            let mut grads = vec![Some(Tensor::new(x_shape.clone(), dx)), Some(Tensor::new(w_shape.clone(), dw))];
            if has_bias {
                grads.push(Some(Tensor::new([cout], bias_grad(g.data(), cout, p))));
            }
            grads
        })
    }

    /// Transposed convolution of `x [N, Cin, H, W]` with `w [Cin, Cout, k, k]`;
    /// output side `(H - 1) * stride - 2 * pad + k`.
    pub fn conv_transpose2d(&self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        assert_eq!(xv.ndim(), 4, "conv_transpose2d input must be NCHW, got {:?}", xv.shape());
        let (n, cin, h, wd) = (xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3));
        let (cout, k) = (wv.dim(1), wv.dim(2));
        assert_eq!(wv.shape(), &[cin, cout, k, k], "conv_transpose2d weight shape mismatch");
        let oh = (h - 1) * stride + k - 2 * pad;
        let ow = (wd - 1) * stride + k - 2 * pad;
        // The forward convolution this operator is the adjoint of.
        let geom = Geom { n, c: cout, h: oh, w: ow, k, stride, pad, oh: h, ow: wd };
        let p = h * wd;
        let kk = cout * k * k;
        let xp = to_channel_major(xv.data(), n, cin, p);
        let mut cols = vec![T::zero(); kk * n * p];
        gemm(MatRef::t(wv.data(), cin, kk), MatRef::new(&xp, cin, n * p), T::zero(), &mut cols);
        let mut out = col2im(&cols, geom);
        drop(cols);
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b).data(), oh * ow);
        }
        let out = Tensor::new([n, cout, oh, ow], out);
        let mut parents = vec![x, w];
        parents.extend(b);
        let has_bias = b.is_some();
        let x_shape = xv.shape().to_vec();
        let w_shape = wv.shape().to_vec();
        self.custom(&parents, out, move |g| {
            let dcols = im2col(g.data(), geom);
            let mut dxp = vec![T::zero(); cin * n * p];
            gemm(MatRef::new(wv.data(), cin, kk), MatRef::new(&dcols, kk, n * p), T::zero(), &mut dxp);
            let mut dw = vec![T::zero(); cin * kk];
            gemm(MatRef::new(&xp, cin, n * p), MatRef::t(&dcols, kk, n * p), T::zero(), &mut dw);
            let dx = from_channel_major(&dxp, n, cin, p);
            let mut grads = vec![Some(Tensor::new(x_shape.clone(), dx)), Some(Tensor::new(w_shape.clone(), dw))];
            if has_bias {
                grads.push(Some(Tensor::new([cout], bias_grad(g.data(), cout, oh * ow))));
            }
            grads
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-loop reference convolution.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let (n, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (cout, k) = (w.dim(0), w.dim(2));
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros([n, cout, oh, ow]);
        for ni in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((ni * cin + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((co * cin + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                        out.data_mut()[((ni * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn det(shape: &[usize], seed: u64) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |i| (((i as u64 * 2654435761 + seed * 97) % 1000) as f64) / 500.0 - 1.0)
    }

    #[test]
    fn conv2d_matches_direct_loops() {
        let x = det(&[2, 3, 7, 6], 1);
        let w = det(&[4, 3, 3, 3], 2);
        let g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        for &(s, p) in &[(1, 0), (1, 1), (2, 1)] {
            let y = g.conv2d(xv, wv, None, s, p);
            let want = naive_conv(&x, &w, s, p);
            let got = g.value(y);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, conv_t(y)> with shared weights.
        let x = det(&[2, 3, 8, 8], 3);
        let w = det(&[5, 3, 4, 4], 4); // conv: 3 -> 5; transpose weight is [5, 3, 4, 4]
        let y = det(&[2, 5, 4, 4], 5);
        let g = Graph::new();
        let cx = g.conv2d(g.constant(x.clone()), g.constant(w.clone()), None, 2, 1);
        let ty = g.conv_transpose2d(g.constant(y.clone()), g.constant(w.clone()), None, 2, 1);
        assert_eq!(g.shape(ty), vec![2, 3, 8, 8]);
        let lhs: f64 = g.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.value(ty).data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}
