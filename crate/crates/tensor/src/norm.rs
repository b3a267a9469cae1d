use crate::{Graph, Scalar, Tensor, Var};

/// Per-channel statistics of one batch-norm call in training mode.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    /// Elements reduced per channel.
    pub count: usize,
}

impl<T: Scalar> Graph<T> {
    /// Batch normalization over `(N, H, W)` of an NCHW tensor.
    ///
    /// With `running = None` the batch statistics are used (and returned);
    /// otherwise the supplied `(mean, var)` are treated as constants.
    pub fn batch_norm2d(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
        running: Option<(&[T], &[T])>,
    ) -> (Var, Option<BatchStats<T>>) {
        let xv = self.value(x);
        assert_eq!(xv.ndim(), 4, "batch_norm2d input must be NCHW");
        let (n, c) = (xv.dim(0), xv.dim(1));
        let p = xv.dim(2) * xv.dim(3);
        let m = n * p;
        let mt = T::from_usize_lossy(m);
        let channel = move |i: usize| (i / p) % c;

        let (mean, var, stats) = match running {
            Some((rm, rv)) => (rm.to_vec(), rv.to_vec(), None),
            None => {
                let mut mean = vec![T::zero(); c];
                for (i, chunk) in xv.data().chunks(p).enumerate() {
                    mean[i % c] += chunk.iter().copied().sum::<T>();
                }
                mean.iter_mut().for_each(|v| *v /= mt);
                let mut var = vec![T::zero(); c];
                for (i, chunk) in xv.data().chunks(p).enumerate() {
                    let mu = mean[i % c];
                    var[i % c] += chunk.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
                }
                var.iter_mut().for_each(|v| *v /= mt);
                let stats = BatchStats { mean: mean.clone(), var: var.clone(), count: m };
                (mean, var, Some(stats))
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let xhat: Vec<T> = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - mean[channel(i)]) * inv_std[channel(i)])
            .collect();
        let gv = self.value(gamma);
        let bv = self.value(beta);
        assert_eq!(gv.shape(), &[c]);
        assert_eq!(bv.shape(), &[c]);
        let out: Vec<T> = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| h * gv.data()[channel(i)] + bv.data()[channel(i)])
            .collect();
        let shape = xv.shape().to_vec();
        let training = running.is_none();
        let out_var = self.custom(&[x, gamma, beta], Tensor::new(shape.clone(), out), move |g| {
            let gd = g.data();
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            for (i, (&gy, &h)) in gd.iter().zip(&xhat).enumerate() {
                let ch = channel(i);
                dgamma[ch] += gy * h;
                dbeta[ch] += gy;
            }
            let dx: Vec<T> = if training {
                // dx = gamma * inv_std / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
                gd.iter()
                    .zip(&xhat)
                    .enumerate()
                    .map(|(i, (&gy, &h))| {
                        let ch = channel(i);
                        gv.data()[ch] * inv_std[ch] / mt * (mt * gy - dbeta[ch] - h * dgamma[ch])
                    })
                    .collect()
            } else {
                gd.iter().enumerate().map(|(i, &gy)| gy * gv.data()[channel(i)] * inv_std[channel(i)]).collect()
            };
            vec![
                Some(Tensor::new(shape.clone(), dx)),
                Some(Tensor::new([c], dgamma)),
                Some(Tensor::new([c], dbeta)),
            ]
        });
        (out_var, stats)
    }
}
