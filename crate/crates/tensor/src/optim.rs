use crate::params::{ParamId, ParamStore};
use crate::{Scalar, Tensor};

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moment buffers are created lazily per parameter.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    cfg: AdamConfig,
    step: u64,
    moments: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, step: 0, moments: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)]) {
        self.step += 1;
        let t = self.step as i32;
        let lr = self.cfg.lr;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let corr1 = 1.0 - b1.powi(t);
        let corr2 = 1.0 - b2.powi(t);
        let step_size = T::from_f64_lossy(lr / corr1);
        let corr2 = T::from_f64_lossy(corr2);
        let (b1t, b2t) = (T::from_f64_lossy(b1), T::from_f64_lossy(b2));
        let eps = T::from_f64_lossy(self.cfg.eps);
        for (id, g) in grads {
            let idx = id.index();
            if self.moments.len() <= idx {
                self.moments.resize_with(idx + 1, || None);
            }
            let (m, v) = self.moments[idx].get_or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let p = store.get_mut(*id);
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch for parameter");
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mv = b1t * *mv + (T::one() - b1t) * gv;
                *vv = b2t * *vv + (T::one() - b2t) * gv * gv;
                *pv -= step_size * *mv / ((*vv / corr2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add_param("x", Tensor::new([2], vec![3.0, -2.0]));
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..500 {
            let g = store.get(id).map(|v| 2.0 * v);
            opt.step(&mut store, &[(id, g)]);
        }
        assert!(store.get(id).max_abs() < 1e-2);
    }
}
