mod common;

use common::*;
use force_core::metrics::{classification_metrics, evaluate, rank_auc, roc_curve, trapezoid_area};
use proptest::prelude::*;
use rand::Rng;

fn random_case(seed: u64, n: usize, coarse: bool) -> (Vec<f64>, Vec<u8>) {
    let mut r = rng(seed);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n)
        .map(|_| if coarse { f64::from(r.random_range(0..5)) / 4.0 } else { r.random() })
        .collect();
    (scores, labels)
}

#[test]
fn weighted_recall_is_accuracy_on_random_trials() {
    for seed in 0..1000 {
        let (scores, labels) = random_case(seed, 2 + (seed as usize % 50), seed % 3 == 0);
        let m = classification_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.recall, m.accuracy);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_survives_monotone_transforms(seed in any::<u64>(), n in 2usize..80, coarse in any::<bool>()) {
        let (scores, labels) = random_case(seed, n, coarse);
        let a = rank_auc(&scores, &labels).unwrap();
        let t1: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 2.0).collect();
        let t2: Vec<f64> = scores.iter().map(|s| s * s * s + 10.0).collect();
        prop_assert_eq!(rank_auc(&t1, &labels).unwrap(), a);
        prop_assert_eq!(rank_auc(&t2, &labels).unwrap(), a);
    }

    #[test]
    fn flipping_labels_and_negating_scores_keeps_auc(seed in any::<u64>(), n in 2usize..80, coarse in any::<bool>()) {
        let (scores, labels) = random_case(seed, n, coarse);
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        prop_assert!((rank_auc(&neg, &flipped).unwrap() - rank_auc(&scores, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone_and_agrees_with_ranks(seed in any::<u64>(), n in 2usize..120, coarse in any::<bool>()) {
        let (scores, labels) = random_case(seed, n, coarse);
        let pts = roc_curve(&scores, &labels).unwrap();
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        prop_assert!((trapezoid_area(&pts) - rank_auc(&scores, &labels).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn reports_stay_in_unit_range(seed in any::<u64>(), n in 2usize..60, coarse in any::<bool>()) {
        let (scores, labels) = random_case(seed, n, coarse);
        let r = evaluate(&scores, &labels).unwrap();
        for v in [r.precision, r.recall, r.f1, r.accuracy, r.auc] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(r.recall, r.accuracy);
        prop_assert_eq!(r.threshold, 0.5);
    }
}
