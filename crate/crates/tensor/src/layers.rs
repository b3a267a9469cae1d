//! Parameterized layers. Each layer owns [`ParamId`]s into a shared
//! [`ParamStore`] and runs against a [`Binding`].

use rand::Rng;

use crate::params::{Binding, Mode, ParamId, ParamStore};
use crate::{Scalar, Tensor, Var};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero bias.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self::with_weight(store, name, Tensor::uniform([fan_out, fan_in], bound, rng), bias)
    }

    /// Weights `N(0, std^2)`, zero bias.
    pub fn normal<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Self::with_weight(store, name, Tensor::randn([fan_out, fan_in], 0.0, std, rng), true)
    }

    fn with_weight<T: Scalar>(store: &mut ParamStore<T>, name: &str, w: Tensor<T>, bias: bool) -> Self {
        let (fan_out, fan_in) = (w.dim(0), w.dim(1));
        let weight = store.add_param(format!("{name}.weight"), w);
        let bias = bias.then(|| store.add_param(format!("{name}.bias"), Tensor::zeros([fan_out])));
        Self { weight, bias, fan_in, fan_out }
    }

    pub fn forward<T: Scalar>(&self, b: &Binding<'_, T>, x: Var) -> Var {
        b.graph().linear(x, b.var(self.weight), self.bias.map(|id| b.var(id)))
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_param(format!("{name}.weight"), Tensor::randn([cout, cin, kernel, kernel], 0.0, std, rng));
        let bias = bias.then(|| store.add_param(format!("{name}.bias"), Tensor::zeros([cout])));
        Self { weight, bias, stride, pad }
    }

    pub fn forward<T: Scalar>(&self, b: &Binding<'_, T>, x: Var) -> Var {
        b.graph().conv2d(x, b.var(self.weight), self.bias.map(|id| b.var(id)), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_param(format!("{name}.weight"), Tensor::randn([cin, cout, kernel, kernel], 0.0, std, rng));
        let bias = bias.then(|| store.add_param(format!("{name}.bias"), Tensor::zeros([cout])));
        Self { weight, bias, stride, pad }
    }

    pub fn forward<T: Scalar>(&self, b: &Binding<'_, T>, x: Var) -> Var {
        b.graph().conv_transpose2d(x, b.var(self.weight), self.bias.map(|id| b.var(id)), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add_param(format!("{name}.gamma"), Tensor::ones([channels])),
            beta: store.add_param(format!("{name}.beta"), Tensor::zeros([channels])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros([channels])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::ones([channels])),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward<T: Scalar>(&self, b: &Binding<'_, T>, x: Var) -> Var {
        let g = b.graph();
        let eps = T::from_f64_lossy(self.eps);
        let (gamma, beta) = (b.var(self.gamma), b.var(self.beta));
        if b.mode() == Mode::Eval {
            let rm = b.buffer(self.running_mean).data();
            let rv = b.buffer(self.running_var).data();
            return g.batch_norm2d(x, gamma, beta, eps, Some((rm, rv))).0;
        }
        let (y, stats) = g.batch_norm2d(x, gamma, beta, eps, None);
        if b.mode() == Mode::Train {
            let stats = stats.expect("training mode returns batch statistics");
            let mom = T::from_f64_lossy(self.momentum);
            let keep = T::one() - mom;
            let unbias = if stats.count > 1 {
                T::from_usize_lossy(stats.count) / T::from_usize_lossy(stats.count - 1)
            } else {
                T::one()
            };
            let rm = b.buffer(self.running_mean);
            let rv = b.buffer(self.running_var);
            let new_mean = Tensor::new(
                rm.shape(),
                rm.data().iter().zip(&stats.mean).map(|(&r, &m)| keep * r + mom * m).collect(),
            );
            let new_var = Tensor::new(
                rv.shape(),
                rv.data().iter().zip(&stats.var).map(|(&r, &v)| keep * r + mom * v * unbias).collect(),
            );
            b.record_update(self.running_mean, new_mean);
            b.record_update(self.running_var, new_var);
        }
        y
    }
}

/// Single-layer LSTM (gate order: input, forget, cell, output).
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.add_param(format!("{name}.w_ih"), Tensor::uniform([4 * hidden, input], bound, rng));
        let w_hh = store.add_param(format!("{name}.w_hh"), Tensor::uniform([4 * hidden, hidden], bound, rng));
        // forget-gate bias starts at 1
        let bias = Tensor::from_fn([4 * hidden], |i| {
            if (hidden..2 * hidden).contains(&i) {
                T::one()
            } else {
                T::zero()
            }
        });
        let bias = store.add_param(format!("{name}.bias"), bias);
        Self { w_ih, w_hh, bias, input, hidden }
    }

    /// Runs over `seq [steps, N, input]` and returns the final hidden state `[N, hidden]`.
    pub fn forward<T: Scalar>(&self, b: &Binding<'_, T>, seq: Var) -> Var {
        let g = b.graph();
        let shape = g.shape(seq);
        assert_eq!(shape.len(), 3, "lstm input must be [steps, batch, features]");
        let (steps, n, input) = (shape[0], shape[1], shape[2]);
        assert_eq!(input, self.input, "lstm input width mismatch");
        let h4 = 4 * self.hidden;
        let flat = g.reshape(seq, &[steps * n, input]);
        let projected = g.linear(flat, b.var(self.w_ih), Some(b.var(self.bias)));
        let mut h = g.constant(Tensor::zeros([n, self.hidden]));
        let mut c = g.constant(Tensor::zeros([n, self.hidden]));
        for t in 0..steps {
            let xt = g.narrow(projected, 0, t * n, n);
            let gates = g.add(xt, g.linear(h, b.var(self.w_hh), None));
            debug_assert_eq!(g.shape(gates), vec![n, h4]);
            let i = g.sigmoid(g.narrow(gates, 1, 0, self.hidden));
            let f = g.sigmoid(g.narrow(gates, 1, self.hidden, self.hidden));
            let cell = g.tanh(g.narrow(gates, 1, 2 * self.hidden, self.hidden));
            let o = g.sigmoid(g.narrow(gates, 1, 3 * self.hidden, self.hidden));
            c = g.add(g.mul(f, c), g.mul(i, cell));
            h = g.mul(o, g.tanh(c));
        }
        h
    }
}
