//! Central finite differences, for testing analytic gradients.

use crate::Tensor;

/// Numerical gradient of `f` at `x` by central differences with step `h`.
pub fn central_difference(x: &Tensor<f64>, h: f64, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape(), grad)
}

/// `max |a - b| / max(max |b|, floor)`: error relative to the gradient scale.
pub fn relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let diff = analytic.data().iter().zip(numeric.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    diff / numeric.max_abs().max(floor)
}
