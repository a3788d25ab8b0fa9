mod common;

use common::*;
use force_core::net::{
    attention_gate, forward, loss_and_gradient, predict, train, AttentionMode, NetConfig, NetInput,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn analytic_gradient_matches_central_differences() {
    for draw in 0..12u64 {
        let worst = gradient_check(draw);
        assert!(worst <= 1e-4, "draw {draw}: relative error {worst}");
    }
}

#[test]
fn ungated_network_is_the_plain_mlp() {
    let cfg = net_config(AttentionMode::Off, false, 3);
    let params = randomized_params(5, 0, &cfg, 9);
    let (inputs, _) = random_inputs(4, 50, 5, 0);
    for input in &inputs {
        let plain = NetInput::plain(input.x.clone());
        let out = forward(&params, &plain, &cfg).unwrap();
        assert_eq!(out.to_bits(), params.mlp.forward(&input.x).to_bits());
    }
}

#[test]
fn xor_is_learned_without_gate_or_clusters() {
    let mut r = rng(11);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..200 {
        let a: f64 = r.random_range(-1.0..1.0);
        let b: f64 = r.random_range(-1.0..1.0);
        inputs.push(NetInput::plain(vec![a, b]));
        labels.push(u8::from((a > 0.0) != (b > 0.0)));
    }
    let cfg = NetConfig {
        learning_rate: 1e-2,
        ..net_config(AttentionMode::Off, false, 1)
    };
    let trained = train(&inputs, &labels, &[], &[], 0, &cfg).unwrap();
    let probs = predict(&trained.params, &inputs, &cfg).unwrap();
    let correct = probs.iter().zip(&labels).filter(|(p, y)| u8::from(**p >= 0.5) == **y).count();
    assert!(correct as f64 / 200.0 >= 0.95, "accuracy {}", correct as f64 / 200.0);
}

#[test]
fn same_seed_gives_identical_training() {
    let cfg = NetConfig {
        max_epochs: 15,
        ..net_config(AttentionMode::Shap, true, 21)
    };
    let (inputs, labels) = random_inputs(2, 80, 4, 3);
    let a = train(&inputs[..60], &labels[..60], &inputs[60..], &labels[60..], 3, &cfg).unwrap();
    let b = train(&inputs[..60], &labels[..60], &inputs[60..], &labels[60..], 3, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    let other = train(&inputs[..60], &labels[..60], &inputs[60..], &labels[60..], 3, &NetConfig { seed: 22, ..cfg }).unwrap();
    assert_ne!(a.params, other.params);
}

#[test]
fn early_stopping_restores_the_best_validation_epoch() {
    let cfg = NetConfig {
        max_epochs: 60,
        patience: 5,
        learning_rate: 5e-3,
        ..net_config(AttentionMode::Shap, true, 8)
    };
    let (inputs, labels) = random_inputs(6, 120, 4, 2);
    let (fit, val) = inputs.split_at(90);
    let (fit_y, val_y) = labels.split_at(90);
    let trained = train(fit, fit_y, val, val_y, 2, &cfg).unwrap();
    let h = &trained.history;
    let best = h.validation_loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(h.validation_loss[h.best_epoch - 1], best);
    let all: Vec<usize> = (0..val.len()).collect();
    let (loss, _) = loss_and_gradient(&trained.params, val, val_y, &all, &cfg).unwrap();
    assert!((loss - best).abs() < 1e-12);
    assert!(h.validation_loss.len() <= h.best_epoch + cfg.patience + 1);
}

#[test]
fn prediction_is_pointwise() {
    let cfg = net_config(AttentionMode::Random, true, 5);
    let params = randomized_params(3, 4, &cfg, 1);
    let (mut inputs, _) = random_inputs(3, 30, 3, 4);
    let batch = predict(&params, &inputs, &cfg).unwrap();
    for (input, b) in inputs.iter().zip(&batch) {
        assert!((forward(&params, input, &cfg).unwrap() - b).abs() <= 1e-12);
    }
    assert_eq!(predict(&params, &inputs[..1], &cfg).unwrap(), vec![batch[0]]);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng(2));
    let permuted: Vec<NetInput> = order.iter().map(|&i| inputs[i].clone()).collect();
    let out = predict(&params, &permuted, &cfg).unwrap();
    for (j, &i) in order.iter().enumerate() {
        assert_eq!(out[j], batch[i]);
    }
    inputs[0].x[0] = f64::NAN;
    assert!(forward(&params, &inputs[0], &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gate_is_sigmoid_times_value(w in prop::collection::vec(-30.0f64..30.0, 1..10), seed in any::<u64>()) {
        let mut r = rng(seed);
        let x: Vec<f64> = w.iter().map(|_| r.random_range(-5.0..5.0)).collect();
        let a = attention_gate(&w, &x).unwrap();
        for i in 0..w.len() {
            let s = 1.0 / (1.0 + (-w[i]).exp());
            prop_assert!((a[i] - s * x[i]).abs() <= 1e-15 * x[i].abs().max(1.0));
        }
    }

    #[test]
    fn output_is_a_probability(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let cfg = net_config(AttentionMode::Shap, true, seed);
        let params = randomized_params(3, 2, &cfg, seed);
        let (mut inputs, _) = random_inputs(seed, 5, 3, 2);
        for input in &mut inputs {
            input.x.iter_mut().for_each(|v| *v *= scale);
            let out = forward(&params, input, &cfg).unwrap();
            prop_assert!(out.is_finite() && (0.0..=1.0).contains(&out));
        }
    }
}
