//! Algebraic properties of the dense ops.

use eeg2image_tensor::{softmax_rows, Graph, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand_t(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(shape.to_vec(), 0.0, 1.0, &mut rng)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// <conv(x, w), y> == <x, conv_transpose(y, w)>.
    #[test]
    fn conv_transpose_is_adjoint(
        seed in 0u64..10_000,
        n in 1usize..3,
        cin in 1usize..4,
        cout in 1usize..4,
        half in 2usize..5,
        stride in 1usize..3,
    ) {
        let (k, pad) = (4, 1);
        let h = half * 2;
        let x = rand_t(&[n, cin, h, h], seed);
        let w = rand_t(&[cout, cin, k, k], seed + 1);
        let g = Graph::new();
        let y_fwd = g.conv2d(g.constant(x.clone()), g.constant(w.clone()), None, stride, pad);
        let y_shape = g.shape(y_fwd);
        let y = rand_t(&y_shape, seed + 2);
        let back = g.conv_transpose2d(g.constant(y.clone()), g.constant(w), None, stride, pad);
        let back = g.value(back);
        // transposed output may be smaller than x when stride does not divide evenly
        prop_assume!(back.shape() == x.shape());
        let lhs = dot(&g.value(y_fwd), &y);
        let rhs = dot(&x, &back);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn softmax_rows_normalized_and_shift_invariant(seed in 0u64..10_000, rows in 1usize..6, k in 1usize..12, shift in -50.0f64..50.0) {
        let x = rand_t(&[rows, k], seed);
        let p = softmax_rows(&x);
        for r in p.data().chunks(k) {
            let s: f64 = r.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(r.iter().all(|&v| v >= 0.0));
        }
        let q = softmax_rows(&x.map(|v| v + shift));
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_normalize_is_idempotent(seed in 0u64..10_000, rows in 1usize..6, d in 1usize..20) {
        let x = rand_t(&[rows, d], seed);
        let g = Graph::new();
        let once = g.l2_normalize_rows(g.constant(x), 1e-12);
        let twice = g.l2_normalize_rows(once, 1e-12);
        for (a, b) in g.value(once).data().iter().zip(g.value(twice).data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for r in g.value(once).data().chunks(d) {
            let n: f64 = r.iter().map(|v| v * v).sum();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
