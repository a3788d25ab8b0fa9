#![allow(dead_code)]

use std::path::PathBuf;

use force_core::gbm::{DecisionTree, Node, Split, TreeEnsemble};
use force_core::shap::Background;
use force_core::net::{loss_and_gradient, AttentionMode, NetConfig, NetInput, NetParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coarse grid of values so that thresholds, inputs and background rows
/// frequently coincide and routing ties get exercised.
pub fn grid_value(rng: &mut impl Rng) -> f64 {
    f64::from(rng.random_range(-4i32..=4)) * 0.5
}

fn grow(nodes: &mut Vec<Node>, p: usize, depth_left: usize, rng: &mut impl Rng) -> usize {
    let id = nodes.len();
    nodes.push(Node {
        split: None,
        value: rng.random_range(-2.0..2.0),
        n_samples: 0,
        cover: 0.0,
    });
    if depth_left > 0 && rng.random_bool(0.8) {
        let feature = rng.random_range(0..p);
        let threshold = grid_value(rng) + 0.25 * f64::from(rng.random_range(0i32..2));
        let left = grow(nodes, p, depth_left - 1, rng);
        let right = grow(nodes, p, depth_left - 1, rng);
        nodes[id].split = Some(Split {
            feature,
            threshold,
            left,
            right,
        });
    }
    id
}

pub fn random_tree(p: usize, max_depth: usize, rng: &mut impl Rng) -> DecisionTree {
    let mut nodes = Vec::new();
    grow(&mut nodes, p, max_depth, rng);
    DecisionTree { nodes }
}

pub fn random_ensemble(p: usize, n_trees: usize, max_depth: usize, rng: &mut impl Rng) -> TreeEnsemble {
    let trees = (0..n_trees).map(|_| random_tree(p, max_depth, rng)).collect();
    TreeEnsemble::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(0.05..1.0),
        trees,
        p,
    )
    .unwrap()
}

pub fn random_row(p: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..p).map(|_| grid_value(rng)).collect()
}

pub fn random_background(p: usize, n: usize, rng: &mut impl Rng) -> Background {
    Background::new((0..n).map(|_| random_row(p, rng)).collect()).unwrap()
}

pub fn data_dir() -> PathBuf {
    std::env::var_os("FORCE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn heart_path() -> PathBuf {
    data_dir().join("processed.cleveland.data")
}

pub fn random_points(seed: u64, n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| (0..p).map(|_| r.random_range(-3.0..3.0)).collect()).collect()
}


pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn means(points: &[Vec<f64>], assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let p = points[0].len();
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (x, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    sums
}

pub fn repair(assignment: &mut [usize], own: &[f64], k: usize) {
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    let mut moved = vec![false; assignment.len()];
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut pick: Option<usize> = None;
        for i in 0..assignment.len() {
            if !moved[i] && sizes[assignment[i]] >= 2 && pick.is_none_or(|p| own[i] > own[p]) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        sizes[assignment[i]] -= 1;
        assignment[i] = c;
        sizes[c] = 1;
        moved[i] = true;
    }
}

/// Textbook k-means with explicit centroids, same tie and empty-cluster rules.
pub fn plain_kmeans(points: &[Vec<f64>], k: usize, mut assignment: Vec<usize>, max_iter: usize) -> (Vec<usize>, f64) {
    repair(&mut assignment, &vec![0.0; points.len()], k);
    for _ in 0..max_iter {
        let mu = means(points, &assignment, k);
        let mut next = vec![0; points.len()];
        let mut own = vec![0.0; points.len()];
        for (i, x) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, m) in mu.iter().enumerate() {
                let d = sq_dist(x, m);
                if d < best.0 {
                    best = (d, c);
                }
            }
            next[i] = best.1;
            own[i] = best.0;
        }
        repair(&mut next, &own, k);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let mu = means(points, &assignment, k);
    let inertia = points.iter().zip(&assignment).map(|(x, &a)| sq_dist(x, &mu[a])).sum();
    (assignment, inertia)
}

pub fn quadratic_map(x: &[f64], coef0: f64) -> Vec<f64> {
    let mut out = vec![coef0];
    out.extend(x.iter().map(|v| (2.0 * coef0).sqrt() * v));
    for a in x {
        for b in x {
            out.push(a * b);
        }
    }
    out
}

pub fn random_inputs(seed: u64, n: usize, p: usize, k: usize) -> (Vec<NetInput>, Vec<u8>) {
    let mut r = rng(seed);
    let inputs = (0..n)
        .map(|_| {
            let mut onehot = vec![0.0; k];
            if k > 0 {
                onehot[r.random_range(0..k)] = 1.0;
            }
            NetInput {
                x: (0..p).map(|_| r.sample(StandardNormal)).collect(),
                shap: (0..p).map(|_| r.random_range(-1.5..1.5)).collect(),
                cluster_onehot: onehot,
            }
        })
        .collect();
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.5))).collect();
    labels[0] = 0;
    labels[1] = 1;
    (inputs, labels)
}

pub fn randomized_params(p: usize, k: usize, cfg: &NetConfig, seed: u64) -> NetParams {
    let mut params = NetParams::init(p, k, cfg);
    let mut r = rng(seed);
    let flat: Vec<f64> = params
        .flatten()
        .iter()
        .map(|_| 0.4 * r.sample::<f64, _>(StandardNormal))
        .collect();
    params.set_flat(&flat).unwrap();
    params
}

pub fn net_config(attention: AttentionMode, cluster_feature: bool, seed: u64) -> NetConfig {
    NetConfig {
        attention,
        cluster_feature,
        seed,
        ..NetConfig::default()
    }
}

/// Worst relative disagreement between the analytic gradient and central
/// differences (step 1e-5) over every parameter, for one random draw.
pub fn gradient_check(draw: u64) -> f64 {
    let modes = [
        (AttentionMode::Shap, true),
        (AttentionMode::Random, true),
        (AttentionMode::Shap, false),
        (AttentionMode::Off, false),
    ];
    let h = 1e-5;
    let (attention, cluster) = modes[draw as usize % modes.len()];
    let (p, k) = (4, 3);
    let cfg = net_config(attention, cluster, draw);
    let n_k = if cluster { k } else { 0 };
    let (inputs, labels) = random_inputs(draw, 6, p, k);
    let mut params = randomized_params(p, n_k, &cfg, 100 + draw);
    let batch: Vec<usize> = (0..inputs.len()).collect();
    let (_, grad) = loss_and_gradient(&params, &inputs, &labels, &batch, &cfg).unwrap();
    if attention != AttentionMode::Off {
        assert!(grad.gate_offset.iter().any(|g| *g != 0.0));
    }
    let analytic = grad.flatten();
    let base = params.flatten();
    let mut worst: f64 = 0.0;
    for j in 0..base.len() {
        let mut shifted = base.clone();
        shifted[j] = base[j] + h;
        params.set_flat(&shifted).unwrap();
        let lp = loss_and_gradient(&params, &inputs, &labels, &batch, &cfg).unwrap().0;
        shifted[j] = base[j] - h;
        params.set_flat(&shifted).unwrap();
        let lm = loss_and_gradient(&params, &inputs, &labels, &batch, &cfg).unwrap().0;
        let numeric = (lp - lm) / (2.0 * h);
        let scale = analytic[j].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[j] - numeric).abs() / scale);
    }
    worst
}
