//! Elementwise, reduction, shape and dense-layer operations.

use std::rc::Rc;

use crate::scalar::{gemm, MatRef};
use crate::{Graph, Scalar, Tensor, Var};

/// Splits a shape around `axis` into `(outer, axis_len, inner)`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Scalar> Graph<T> {
    fn unary(&self, x: Var, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var {
        let xv = self.value(x);
        let out = xv.map(f);
        let outv = Rc::new(out.clone());
        self.custom(&[x], out, move |g| {
            let data = g
                .data()
                .iter()
                .zip(xv.data())
                .zip(outv.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape(), data))]
        })
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(&self.value(b), |x, y| x + y);
        self.custom(&[a, b], out, |g| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(&self.value(b), |x, y| x - y);
        self.custom(&[a, b], out, |g| vec![Some(g.clone()), Some(g.map(|v| -v))])
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let out = av.zip_map(&bv, |x, y| x * y);
        self.custom(&[a, b], out, move |g| {
            vec![Some(g.zip_map(&bv, |g, y| g * y)), Some(g.zip_map(&av, |g, x| g * x))]
        })
    }

    pub fn scale(&self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.custom(&[x], out, move |g| vec![Some(g.map(|v| v * s))])
    }

    pub fn add_scalar(&self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v + s);
        self.custom(&[x], out, |g| vec![Some(g.clone())])
    }

    pub fn neg(&self, x: Var) -> Var {
        let out = self.value(x).map(|v| -v);
        self.custom(&[x], out, |g| vec![Some(g.map(|v| -v))])
    }

    /// `max(0, x)` with derivative 0 at 0.
    pub fn relu(&self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(&self, x: Var, slope: T) -> Var {
        self.unary(
            x,
            move |v| if v > T::zero() { v } else { v * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), |_, y| T::one() - y * y)
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, |v| T::one() / (T::one() + (-v).exp()), |_, y| y * (T::one() - y))
    }

    /// `|x|` with subgradient 0 at 0.
    pub fn abs(&self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    /// Sum of all elements (sequential, front to back).
    pub fn sum(&self, x: Var) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        self.custom(&[x], Tensor::scalar(xv.sum()), move |g| {
            vec![Some(Tensor::full(shape.clone(), g.item()))]
        })
    }

    /// Mean of all elements: sequential sum divided by the count.
    pub fn mean(&self, x: Var) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        let n = T::from_usize_lossy(xv.numel());
        self.custom(&[x], Tensor::scalar(xv.sum() / n), move |g| {
            vec![Some(Tensor::full(shape.clone(), g.item() / n))]
        })
    }

    /// Mean over every axis but the first: `[N, ...] -> [N]`.
    pub fn mean_rows(&self, x: Var) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        let rows = shape[0];
        let cols = xv.numel() / rows.max(1);
        let n = T::from_usize_lossy(cols);
        let out: Vec<T> = xv.data().chunks(cols.max(1)).take(rows).map(|r| r.iter().copied().sum::<T>() / n).collect();
        self.custom(&[x], Tensor::new([rows], out), move |g| {
            let mut data = Vec::with_capacity(rows * cols);
            for &gv in g.data() {
                data.extend(std::iter::repeat_n(gv / n, cols));
            }
            vec![Some(Tensor::new(shape.clone(), data))]
        })
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Var {
        let xv = self.value(x);
        let old = xv.shape().to_vec();
        let out = (*xv).clone().reshape(shape);
        self.custom(&[x], out, move |g| vec![Some(g.clone().reshape(old.clone()))])
    }

    /// `x [N, in] * w^T [in, out] + b`, with `w` stored `[out, in]`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        assert_eq!(xv.ndim(), 2, "linear input must be 2-D, got {:?}", xv.shape());
        let (n, fin) = (xv.dim(0), xv.dim(1));
        let fout = wv.dim(0);
        assert_eq!(wv.shape(), &[fout, fin], "linear weight shape mismatch");
        let mut out = vec![T::zero(); n * fout];
        if let Some(b) = b {
            let bv = self.value(b);
            assert_eq!(bv.shape(), &[fout]);
            for row in out.chunks_mut(fout) {
                row.copy_from_slice(bv.data());
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        gemm(MatRef::new(xv.data(), n, fin), MatRef::t(wv.data(), fout, fin), beta, &mut out);
        let out = Tensor::new([n, fout], out);
        let mut parents = vec![x, w];
        parents.extend(b);
        let has_bias = b.is_some();
        self.custom(&parents, out, move |g| {
            let mut dx = vec![T::zero(); n * fin];
            gemm(MatRef::new(g.data(), n, fout), MatRef::new(wv.data(), fout, fin), T::zero(), &mut dx);
            let mut dw = vec![T::zero(); fout * fin];
            gemm(MatRef::t(g.data(), n, fout), MatRef::new(xv.data(), n, fin), T::zero(), &mut dw);
            let mut grads = vec![Some(Tensor::new([n, fin], dx)), Some(Tensor::new([fout, fin], dw))];
            if has_bias {
                let mut db = vec![T::zero(); fout];
                for row in g.data().chunks(fout) {
                    db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                }
                grads.push(Some(Tensor::new([fout], db)));
            }
            grads
        })
    }

    /// Plain matrix product `[n, k] x [k, m]`.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let (n, k) = (av.dim(0), av.dim(1));
        let m = bv.dim(1);
        assert_eq!(bv.dim(0), k, "matmul inner dimensions differ");
        let mut out = vec![T::zero(); n * m];
        gemm(MatRef::new(av.data(), n, k), MatRef::new(bv.data(), k, m), T::zero(), &mut out);
        self.custom(&[a, b], Tensor::new([n, m], out), move |g| {
            let mut da = vec![T::zero(); n * k];
            gemm(MatRef::new(g.data(), n, m), MatRef::t(bv.data(), k, m), T::zero(), &mut da);
            let mut db = vec![T::zero(); k * m];
            gemm(MatRef::t(av.data(), n, k), MatRef::new(g.data(), n, m), T::zero(), &mut db);
            vec![Some(Tensor::new([n, k], da)), Some(Tensor::new([k, m], db))]
        })
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty(), "concat of zero tensors");
        let values: Vec<Rc<Tensor<T>>> = xs.iter().map(|&x| self.value(x)).collect();
        let base = values[0].shape().to_vec();
        let lens: Vec<usize> = values
            .iter()
            .map(|v| {
                let s = v.shape();
                assert_eq!(s.len(), base.len(), "concat rank mismatch");
                for (ax, (&a, &b)) in s.iter().zip(&base).enumerate() {
                    assert!(ax == axis || a == b, "concat shape mismatch: {s:?} vs {base:?}");
                }
                s[axis]
            })
            .collect();
        let total: usize = lens.iter().sum();
        let (outer, _, inner) = split_axis(&base, axis);
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &len) in values.iter().zip(&lens) {
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        self.custom(xs, Tensor::new(shape, data), move |g| {
            let mut parts: Vec<Vec<T>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let gd = g.data();
            let mut off = 0;
            for _ in 0..outer {
                for (p, &len) in parts.iter_mut().zip(&lens) {
                    p.extend_from_slice(&gd[off..off + len * inner]);
                    off += len * inner;
                }
            }
            parts.into_iter().zip(&shapes).map(|(p, s)| Some(Tensor::new(s.clone(), p))).collect()
        })
    }

    /// The sub-range `start..start + len` of `axis`.
    pub fn narrow(&self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        assert!(start + len <= shape[axis], "narrow out of range");
        let (outer, full, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&xv.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        self.custom(&[x], Tensor::new(out_shape, data), move |g| {
            let mut dx = vec![T::zero(); outer * full * inner];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                dx[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(Tensor::new(shape.clone(), dx))]
        })
    }

    /// Broadcasts `[N, C]` to `[N, C, h, w]`.
    pub fn broadcast_spatial(&self, x: Var, h: usize, w: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.ndim(), 2);
        let (n, c) = (xv.dim(0), xv.dim(1));
        let hw = h * w;
        let mut data = Vec::with_capacity(n * c * hw);
        for &v in xv.data() {
            data.extend(std::iter::repeat_n(v, hw));
        }
        self.custom(&[x], Tensor::new([n, c, h, w], data), move |g| {
            let d = g.data().chunks(hw).map(|ch| ch.iter().copied().sum::<T>()).collect();
            vec![Some(Tensor::new([n, c], d))]
        })
    }

    /// Scales each row of a 2-D tensor to unit Euclidean norm.
    pub fn l2_normalize_rows(&self, x: Var, eps: T) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.ndim(), 2);
        let cols = xv.dim(1);
        let norms: Vec<T> = xv
            .data()
            .chunks(cols)
            .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt().max(eps))
            .collect();
        let mut out = Vec::with_capacity(xv.numel());
        for (r, &nrm) in xv.data().chunks(cols).zip(&norms) {
            out.extend(r.iter().map(|&v| v / nrm));
        }
        let out = Tensor::new(xv.shape(), out);
        let outv = Rc::new(out.clone());
        self.custom(&[x], out, move |g| {
            // d(x/|x|) = (g - y <g, y>) / |x|
            let mut dx = Vec::with_capacity(g.numel());
            for ((gr, yr), &nrm) in g.data().chunks(cols).zip(outv.data().chunks(cols)).zip(&norms) {
                let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                dx.extend(gr.iter().zip(yr).map(|(&gv, &yv)| (gv - yv * dot) / nrm));
            }
            vec![Some(Tensor::new(g.shape(), dx))]
        })
    }

    /// Mean softmax cross-entropy of `[N, K]` logits against class indices.
    pub fn softmax_cross_entropy(&self, logits: Var, labels: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.ndim(), 2);
        let (n, k) = (lv.dim(0), lv.dim(1));
        assert_eq!(labels.len(), n, "one label per row required");
        let probs = softmax_rows(&lv);
        let mut loss = T::zero();
        for (row, &y) in probs.data().chunks(k).zip(labels) {
            assert!(y < k, "label {y} out of range for {k} classes");
            loss += -row[y].max(T::min_positive_value()).ln();
        }
        let nt = T::from_usize_lossy(n);
        let labels = labels.to_vec();
        self.custom(&[logits], Tensor::scalar(loss / nt), move |g| {
            let scale = g.item() / nt;
            let mut d = probs.data().to_vec();
            for (row, &y) in d.chunks_mut(k).zip(&labels) {
                row[y] -= T::one();
                row.iter_mut().for_each(|v| *v *= scale);
            }
            vec![Some(Tensor::new([n, k], d))]
        })
    }
}

/// Numerically stable row-wise softmax of a 2-D tensor.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let k = logits.dim(1);
    let mut out = Vec::with_capacity(logits.numel());
    for row in logits.data().chunks(k) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let exps: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
        let s: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / s));
    }
    Tensor::new(logits.shape(), out)
}
