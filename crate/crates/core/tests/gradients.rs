//! Training losses and augmentation ops against central finite differences
//! in double precision.

use eeg2image::cgan::augment::{self, AugmentParams, AugmentPolicy};
use eeg2image::cgan::{d_loss_hinge, g_loss_hinge, mode_seeking_loss};
use eeg2image::encoder::{mine_semi_hard, triplet_loss, triplet_loss_var};
use eeg2image::seed;
use eeg2image_tensor::check::{central_difference, relative_error};
use eeg2image_tensor::{Graph, Tensor, Var};

const TOL: f64 = 1e-4;
const H: f64 = 1e-6;

fn randn(shape: &[usize], name: &str) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 0.0, 1.0, &mut seed::stream(11, name))
}

fn uniform(shape: &[usize], bound: f64, name: &str) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), bound, &mut seed::stream(11, name))
}

/// Compares the graph gradient of `sum(op(x) * w)` with finite differences
/// for every input of `op`.
fn check(inputs: &[Tensor<f64>], op: impl Fn(&Graph<f64>, &[Var]) -> Var) -> f64 {
    let scalarize = |g: &Graph<f64>, y: Var| {
        let shape = g.shape(y);
        if shape.is_empty() {
            return y;
        }
        let w = g.constant(randn(&shape, "weights"));
        g.sum(g.mul(y, w))
    };
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let grads = g.backward(scalarize(&g, op(&g, &vars)));
    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
        let numeric = central_difference(x, H, |probe| {
            let g = Graph::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, t)| g.constant(if j == i { probe.clone() } else { t.clone() }))
                .collect();
            let y = op(&g, &vars);
            g.value(scalarize(&g, y)).item()
        });
        worst = worst.max(relative_error(&analytic, &numeric, 1e-3));
    }
    worst
}

#[test]
fn triplet_loss_gradient() {
    let emb = randn(&[8, 128], "emb").map(|v| v * 0.1);
    let labels = [0, 0, 1, 1, 2, 2, 0, 1];
    let batch = mine_semi_hard(&emb, &labels, 0.2).unwrap();
    let (loss, _) = triplet_loss(&emb, &batch, 0.2);
    assert!(loss > 0.0, "at least one active triplet is needed for a meaningful check");
    let err = check(&[emb], |g, v| triplet_loss_var(g, v[0], &batch, 0.2));
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn triplet_loss_gradient_with_large_margin() {
    let emb = randn(&[6, 16], "emb-margin");
    let labels = [0, 1, 0, 1, 2, 2];
    let batch = mine_semi_hard(&emb, &labels, 5.0).unwrap();
    let err = check(&[emb], |g, v| triplet_loss_var(g, v[0], &batch, 5.0));
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn hinge_loss_gradients() {
    let real = randn(&[8], "real");
    let fake = randn(&[8], "fake");
    let err = check(&[real, fake.clone()], |g, v| d_loss_hinge(g, v[0], v[1]));
    assert!(err < TOL, "discriminator: relative error {err}");
    let err = check(&[fake], |g, v| g_loss_hinge(g, v[0]));
    assert!(err < TOL, "generator: relative error {err}");
}

#[test]
fn mode_seeking_gradient() {
    let a = uniform(&[4, 3, 8, 8], 1.0, "ms-a");
    let b = uniform(&[4, 3, 8, 8], 1.0, "ms-b");
    let z1 = randn(&[4, 128], "z1");
    let z2 = randn(&[4, 128], "z2");
    let err = check(&[a, b], |g, v| mode_seeking_loss(g, v[0], v[1], &z1, &z2, 1e-5));
    assert!(err < TOL, "relative error {err}");
}

fn images() -> Tensor<f64> {
    uniform(&[4, 3, 8, 8], 0.6, "images")
}

#[test]
fn brightness_gradient() {
    let b = [0.3, -0.2, 0.0, 0.45];
    let err = check(&[images()], |g, v| augment::brightness(g, v[0], &b));
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn saturation_gradient() {
    let s = [0.1, 1.7, 1.0, 0.6];
    let err = check(&[images()], |g, v| augment::saturation(g, v[0], &s));
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn contrast_gradient() {
    let c = [0.5, 1.4, 0.9, 1.2];
    let err = check(&[images()], |g, v| augment::contrast(g, v[0], &c));
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn translate_gradient() {
    let shifts = [(1, -1), (0, 0), (-1, 1), (1, 1)];
    let err = check(&[images()], |g, v| augment::translate(g, v[0], &shifts));
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn clip_gradient() {
    // values well away from the kinks at +-1
    let x = uniform(&[4, 3, 8, 8], 1.0, "clip").map(|v| if v.abs() > 0.5 { v * 3.0 } else { v });
    let err = check(&[x], |g, v| augment::clip_unit(g, v[0]));
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn composed_policy_gradient() {
    let mut rng = seed::stream(11, "policy");
    let params: Vec<AugmentParams> = augment::draw_params(&AugmentPolicy::default(), 4, 8, &mut rng);
    let err = check(&[images()], |g, v| augment::apply(g, v[0], &params));
    assert!(err < TOL, "relative error {err}");
}
