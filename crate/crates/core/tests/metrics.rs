//! Metric closed forms, brute-force matching oracles and invariants.

use eeg2image::metrics::{
    export_embedding_2d, inception_score_from_probs, kmeans_accuracy, max_weight_assignment, pairwise_diversity,
    ContingencyTable, KMeansConfig,
};
use eeg2image::{seed, Error};
use eeg2image_tensor::Tensor;
use proptest::prelude::*;
use rand::Rng;

/// Best matching by trying every permutation of the zero-padded square.
fn brute_force_matched(counts: &[Vec<u64>]) -> u64 {
    let rows = counts.len();
    let cols = counts[0].len();
    let n = rows.max(cols);
    let w = |r: usize, c: usize| if r < rows && c < cols { counts[r][c] } else { 0 };
    fn search(perm: &mut Vec<usize>, used: &mut [bool], n: usize, w: &dyn Fn(usize, usize) -> u64) -> u64 {
        if perm.len() == n {
            return perm.iter().enumerate().map(|(r, &c)| w(r, c)).sum();
        }
        let mut best = 0;
        for c in 0..n {
            if !used[c] {
                used[c] = true;
                perm.push(c);
                best = best.max(search(perm, used, n, w));
                perm.pop();
                used[c] = false;
            }
        }
        best
    }
    search(&mut Vec::new(), &mut vec![false; n], n, &w)
}

#[test]
fn matching_equals_exhaustive_search_on_50_tables() {
    let mut rng = seed::stream(5, "tables");
    for t in 0..50 {
        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=6);
        let max = rng.random_range(1..=30);
        let counts: Vec<Vec<u64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0..=max)).collect()).collect();
        let table = ContingencyTable { counts: counts.clone() };
        assert_eq!(table.matched(), brute_force_matched(&counts), "table {t}: {counts:?}");
        let assignment = max_weight_assignment(&counts);
        let mut seen = vec![false; cols];
        for c in assignment.iter().flatten() {
            assert!(!seen[*c], "column {c} matched twice");
            seen[*c] = true;
        }
    }
}

#[test]
fn kmeans_accuracy_uses_optimal_matching() {
    let mut rng = seed::stream(5, "points");
    let centers = [[0.0f32, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]];
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..80 {
        let c = i % 4;
        data.push(centers[c][0] + rng.random_range(-1.4f32..1.4));
        data.push(centers[c][1] + rng.random_range(-1.4f32..1.4));
        labels.push(c);
    }
    let emb = Tensor::new([80, 2], data);
    let (acc, table) = kmeans_accuracy(&emb, &labels, 4, KMeansConfig::default(), 9).unwrap();
    assert_eq!(table.total(), 80);
    assert_eq!(acc, brute_force_matched(&table.counts) as f64 / 80.0);
    assert!(acc > 0.5);
}

#[test]
fn inception_closed_forms() {
    let uniform = Tensor::full([200, 10], 0.1f64);
    let (m, s) = inception_score_from_probs(&uniform, 10).unwrap();
    assert!((m - 1.0).abs() < 1e-9 && s.abs() < 1e-9);
    // one-hot, classes interleaved so every split is balanced
    let one_hot = Tensor::from_fn([100, 10], |i| if (i / 10) % 10 == i % 10 { 1.0f64 } else { 0.0 });
    let (m, s) = inception_score_from_probs(&one_hot, 10).unwrap();
    assert!((m - 10.0).abs() < 1e-6 && s.abs() < 1e-6);
}

#[test]
fn inception_hand_computed_values() {
    let p = Tensor::new([2, 2], vec![0.9f64, 0.1, 0.1, 0.9]);
    let (m, _) = inception_score_from_probs(&p, 1).unwrap();
    assert!((m - 1.4449348111684153).abs() < 1e-12);
    let p = Tensor::new([3, 3], vec![0.7f64, 0.2, 0.1, 0.2, 0.5, 0.3, 0.1, 0.1, 0.8]);
    let (m, _) = inception_score_from_probs(&p, 1).unwrap();
    assert!((m - 1.2991204660034252).abs() < 1e-12);
}

#[test]
fn inception_rejects_invalid_rows() {
    for bad in [vec![0.5f64, 0.6], vec![-0.1, 1.1], vec![f64::NAN, 1.0]] {
        let p = Tensor::new([1, 2], bad);
        assert!(matches!(inception_score_from_probs(&p, 1), Err(Error::InvalidClassifier(_))));
    }
}

fn probability_rows(n: usize, k: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(0.01f64..1.0, n * k).prop_map(move |v| {
        let mut out = v.clone();
        for row in out.chunks_mut(k) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
        }
        Tensor::new([n, k], out)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inception_bounded_by_one_and_k(p in probability_rows(20, 5), splits in 1usize..5) {
        let (m, s) = inception_score_from_probs(&p, splits).unwrap();
        prop_assert!((1.0..=5.0 + 1e-9).contains(&m));
        prop_assert!(s >= 0.0);
    }

    /// Relabeling classes permutes columns; the score is unchanged.
    #[test]
    fn inception_invariant_to_class_relabeling(
        p in probability_rows(12, 4),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let q = Tensor::from_fn([12, 4], |i| p.data()[(i / 4) * 4 + perm[i % 4]]);
        let (a, _) = inception_score_from_probs(&p, 3).unwrap();
        let (b, _) = inception_score_from_probs(&q, 3).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    /// With one split, the order of images is irrelevant.
    #[test]
    fn single_split_invariant_to_row_order(p in probability_rows(10, 3), rot in 0usize..10) {
        let rows: Vec<usize> = (0..10).map(|i| (i + rot) % 10).collect();
        let (a, _) = inception_score_from_probs(&p, 1).unwrap();
        let (b, _) = inception_score_from_probs(&p.select_rows(&rows), 1).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn matching_is_at_least_the_diagonal_and_at_most_the_row_maxima(
        counts in prop::collection::vec(prop::collection::vec(0u64..20, 4), 4),
    ) {
        let table = ContingencyTable { counts: counts.clone() };
        let matched = table.matched();
        let diag: u64 = (0..4).map(|i| counts[i][i]).sum();
        let row_max: u64 = counts.iter().map(|r| *r.iter().max().unwrap()).sum();
        prop_assert!(diag <= matched && matched <= row_max);
    }

    #[test]
    fn diversity_scales_with_amplitude(
        v in prop::collection::vec(-1.0f32..1.0, 3 * 2 * 2 * 3),
        c in 0.0f32..1.0,
    ) {
        let x = Tensor::new([3, 2, 2, 3], v);
        let d = pairwise_diversity(&x).unwrap();
        let dc = pairwise_diversity(&x.map(|p| p * c)).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((dc - c as f64 * d).abs() < 1e-5);
        let rev = x.select_rows(&[2, 1, 0]);
        prop_assert!((pairwise_diversity(&rev).unwrap() - d).abs() < 1e-12);
    }

    /// Projection coordinates ignore a common offset.
    #[test]
    fn projection_is_translation_invariant(
        v in prop::collection::vec(-1.0f32..1.0, 8 * 5),
        shift in -3.0f32..3.0,
    ) {
        let emb = Tensor::new([8, 5], v);
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let a = match export_embedding_2d(&emb, &labels) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let b = export_embedding_2d(&emb.map(|x| x + shift), &labels).unwrap();
        for (p, q) in a.coords.iter().zip(&b.coords) {
            prop_assert!((p[0] - q[0]).abs() < 1e-3);
        }
    }
}
