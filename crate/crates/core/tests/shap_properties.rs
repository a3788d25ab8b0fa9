mod common;

use common::*;
use force_core::dataset::{fit_transform, handle_missing, load_dataset, split_holdout, Schema, SplitSpec};
use force_core::gbm::{self, GbmConfig, TreeEnsemble};
use force_core::shap::{exact_shapley_oracle, shap_matrix, tree_shap, Background};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fast_path_matches_brute_force(
        seed in any::<u64>(),
        p in 1usize..=10,
        n_trees in 0usize..=5,
        depth in 1usize..=3,
        n_bg in 1usize..=20,
    ) {
        let mut r = rng(seed);
        let e = random_ensemble(p, n_trees, depth, &mut r);
        let bg = random_background(p, n_bg, &mut r);
        let x = random_row(p, &mut r);
        let fast = tree_shap(&e, &x, &bg).unwrap();
        let slow = exact_shapley_oracle(&e, &x, &bg).unwrap();
        for f in 0..p {
            prop_assert!((fast.values[f] - slow.values[f]).abs() <= 1e-9,
                "feature {f}: {} vs {}", fast.values[f], slow.values[f]);
        }
        prop_assert!((fast.base_value - slow.base_value).abs() <= 1e-12);
    }

    #[test]
    fn attributions_sum_to_margin(seed in any::<u64>(), p in 1usize..=12, n_trees in 0usize..=8) {
        let mut r = rng(seed);
        let e = random_ensemble(p, n_trees, 3, &mut r);
        let bg = random_background(p, 15, &mut r);
        let x = random_row(p, &mut r);
        let s = tree_shap(&e, &x, &bg).unwrap();
        prop_assert!((s.reconstructed_margin() - e.predict_margin(&x).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn unused_feature_gets_exactly_zero(seed in any::<u64>(), p in 2usize..=8) {
        let mut r = rng(seed);
        // trees draw features from 0..p-1 only; the last column is never split on
        let inner = random_ensemble(p - 1, 4, 3, &mut r);
        let e = TreeEnsemble::new(inner.base_margin, inner.learning_rate, inner.trees, p).unwrap();
        let bg = random_background(p, 10, &mut r);
        let x = random_row(p, &mut r);
        prop_assert_eq!(tree_shap(&e, &x, &bg).unwrap().values[p - 1], 0.0);
    }

    #[test]
    fn ensemble_attribution_is_sum_over_trees(seed in any::<u64>(), p in 1usize..=8, n_trees in 1usize..=5) {
        let mut r = rng(seed);
        let e = random_ensemble(p, n_trees, 3, &mut r);
        let bg = random_background(p, 12, &mut r);
        let x = random_row(p, &mut r);
        let whole = tree_shap(&e, &x, &bg).unwrap();
        let mut summed = vec![0.0; p];
        for t in &e.trees {
            let single = TreeEnsemble::new(0.0, e.learning_rate, vec![t.clone()], p).unwrap();
            for (acc, v) in summed.iter_mut().zip(tree_shap(&single, &x, &bg).unwrap().values) {
                *acc += v;
            }
        }
        for f in 0..p {
            prop_assert!((whole.values[f] - summed[f]).abs() <= 1e-9);
        }
    }
}

#[test]
fn oracle_refuses_wide_inputs() {
    let mut r = rng(1);
    let e = random_ensemble(16, 1, 2, &mut r);
    let bg = random_background(16, 2, &mut r);
    assert!(exact_shapley_oracle(&e, &random_row(16, &mut r), &bg).is_err());
}

#[test]
fn heart_rows_satisfy_local_accuracy_and_match_rowwise_calls() {
    let (table, _) = handle_missing(load_dataset(heart_path(), Schema::Heart).unwrap()).unwrap();
    let labels = table.labels();
    let (train, test) = split_holdout(&labels, &SplitSpec::default()).unwrap();
    let m = fit_transform(&table, &train).unwrap();
    let e = gbm::fit(&m, &train, &GbmConfig::default()).unwrap();
    let bg = Background::from_training(&m, &train, 1000, 0).unwrap();
    assert_eq!(bg.len(), train.len());
    let all: Vec<usize> = (0..m.n_rows()).collect();
    let s = shap_matrix(&e, &m, &all, &bg).unwrap();
    for (k, &i) in all.iter().enumerate() {
        let margin = e.predict_margin(m.row(i)).unwrap();
        assert!((s.vector(k).reconstructed_margin() - margin).abs() < 1e-6);
        if test.binary_search(&i).is_err() && k % 20 == 0 {
            assert_eq!(s.rows[k], tree_shap(&e, m.row(i), &bg).unwrap().values);
        }
    }
}

#[test]
fn identical_rows_get_identical_vectors() {
    let mut r = rng(9);
    let e = random_ensemble(5, 5, 3, &mut r);
    let bg = random_background(5, 10, &mut r);
    let x = random_row(5, &mut r);
    assert_eq!(tree_shap(&e, &x, &bg).unwrap(), tree_shap(&e, &x.clone(), &bg).unwrap());
}

#[test]
fn background_sample_is_seeded_and_drawn_from_training_rows() {
    let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
    let m = force_core::dataset::FeatureMatrix::from_rows(&rows, vec![0; 50]).unwrap();
    let train: Vec<usize> = (0..50).filter(|i| i % 3 != 0).collect();
    let a = Background::from_training(&m, &train, 10, 4).unwrap();
    let b = Background::from_training(&m, &train, 10, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 10);
    for row in a.rows() {
        assert!(train.contains(&(row[0] as usize)));
    }
}
