//! Hinge adversarial losses and the mode-seeking regularizer.

use eeg2image_tensor::{Graph, Scalar, Tensor, Var};

/// `mean(max(0, 1 - s_real)) + mean(max(0, 1 + s_fake))`.
pub fn d_loss_hinge<T: Scalar>(g: &Graph<T>, real_scores: Var, fake_scores: Var) -> Var {
    let real = g.mean(g.relu(g.add_scalar(g.neg(real_scores), T::one())));
    let fake = g.mean(g.relu(g.add_scalar(fake_scores, T::one())));
    g.add(real, fake)
}

/// `-mean(s_fake)`.
pub fn g_loss_hinge<T: Scalar>(g: &Graph<T>, fake_scores: Var) -> Var {
    g.neg(g.mean(fake_scores))
}

/// Direct evaluation of the discriminator hinge loss on plain score slices.
pub fn d_loss_hinge_direct<T: Scalar>(real_scores: &[T], fake_scores: &[T]) -> T {
    let real = real_scores.iter().fold(T::zero(), |acc, &s| acc + (T::one() - s).max(T::zero()));
    let fake = fake_scores.iter().fold(T::zero(), |acc, &s| acc + (T::one() + s).max(T::zero()));
    real / T::from_usize_lossy(real_scores.len()) + fake / T::from_usize_lossy(fake_scores.len())
}

/// Direct evaluation of the generator hinge loss.
pub fn g_loss_hinge_direct<T: Scalar>(fake_scores: &[T]) -> T {
    let sum = fake_scores.iter().fold(T::zero(), |acc, &s| acc + s);
    -(sum / T::from_usize_lossy(fake_scores.len()))
}

fn mean_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    let sum: T = a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum();
    sum / T::from_usize_lossy(a.len())
}

/// Mode-seeking term `mean_i d_z(i) / (d_I(i) + eps)`, with `d_I` and `d_z`
/// mean absolute differences between paired images and paired latents.
/// `img1`/`img2` are `[N, ...]` graph nodes; `z1`/`z2` are `[N, dz]`.
pub fn mode_seeking_loss<T: Scalar>(g: &Graph<T>, img1: Var, img2: Var, z1: &Tensor<T>, z2: &Tensor<T>, eps: f64) -> Var {
    let (a, b) = (g.value(img1), g.value(img2));
    assert_eq!(a.shape(), b.shape(), "mode-seeking pairs must have equal shapes");
    let n = a.dim(0);
    assert_eq!(z1.dim(0), n);
    let per = a.numel() / n;
    let dz_per = z1.numel() / n;
    let eps = T::from_f64_lossy(eps);
    let nt = T::from_usize_lossy(n);
    let mut ratios = Vec::with_capacity(n);
    let mut denoms = Vec::with_capacity(n);
    let mut total = T::zero();
    for i in 0..n {
        let di = mean_abs_diff(&a.data()[i * per..(i + 1) * per], &b.data()[i * per..(i + 1) * per]);
        let dz = mean_abs_diff(&z1.data()[i * dz_per..(i + 1) * dz_per], &z2.data()[i * dz_per..(i + 1) * dz_per]);
        let r = dz / (di + eps);
        total += r;
        ratios.push(r);
        denoms.push(di + eps);
    }
    let shape = a.shape().to_vec();
    let pt = T::from_usize_lossy(per);
    g.custom(&[img1, img2], Tensor::scalar(total / nt), move |gr| {
        let up = gr.item() / nt;
        let mut d1 = vec![T::zero(); n * per];
        for i in 0..n {
            // d r / d a_j = -dz / (dI + eps)^2 * sign(a_j - b_j) / P
            let k = -(ratios[i] / denoms[i]) / pt * up;
            for j in i * per..(i + 1) * per {
                let diff = a.data()[j] - b.data()[j];
                d1[j] = if diff > T::zero() {
                    k
                } else if diff < T::zero() {
                    -k
                } else {
                    T::zero()
                };
            }
        }
        let d2: Vec<T> = d1.iter().map(|&v| -v).collect();
        vec![Some(Tensor::new(shape.clone(), d1)), Some(Tensor::new(shape.clone(), d2))]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_margins_met_gives_zero() {
        let g = Graph::<f64>::new();
        let r = g.variable(Tensor::full([4], 1.0));
        let f = g.variable(Tensor::full([4], -1.0));
        let l = d_loss_hinge(&g, r, f);
        assert_eq!(g.value(l).item(), 0.0);
        let grads = g.backward(l);
        assert!(grads.get(r).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(grads.get(f).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_scores() {
        let g = Graph::<f64>::new();
        let r = g.constant(Tensor::zeros([3]));
        let f = g.constant(Tensor::zeros([5]));
        assert_eq!(g.value(d_loss_hinge(&g, r, f)).item(), 2.0);
        assert_eq!(g.value(g_loss_hinge(&g, f)).item(), 0.0);
        let c = g.constant(Tensor::full([5], 0.7));
        assert_eq!(g.value(g_loss_hinge(&g, c)).item(), -0.7);
    }

    #[test]
    fn mode_seeking_hand_values() {
        let g = Graph::<f64>::new();
        let z1 = Tensor::full([1, 4], 0.5);
        let z2 = Tensor::full([1, 4], -0.5);
        // collapsed generator: d_I = 0, d_z = 1
        let a = g.constant(Tensor::full([1, 3, 2, 2], 0.3));
        let l = mode_seeking_loss(&g, a, a, &z1, &z2, 1e-5);
        assert!((g.value(l).item() - 1e5).abs() < 1e-6);
        // d_I = 2, d_z = 1
        let b = g.constant(Tensor::full([1, 3, 2, 2], 1.0));
        let c = g.constant(Tensor::full([1, 3, 2, 2], -1.0));
        let l = mode_seeking_loss(&g, b, c, &z1, &z2, 1e-5);
        assert!((g.value(l).item() - 0.5).abs() < 1e-5);
    }
}
