//! The gated network: a per-feature sigmoid attention gate over the
//! preprocessed features, an optional one-hot cluster block, two ReLU layers
//! and a sigmoid output, trained with Adam on binary cross-entropy.
//!
//! Gate weights are per observation: `w(x) = source(x) + offset`, where the
//! source is the observation's SHAP vector (`Shap`), one fixed seeded
//! standard-normal vector shared by all rows (`Random`), and `offset` is a
//! trainable per-feature vector starting at zero. With `Off` the gate is the
//! identity and the network reduces to the plain MLP.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ForceError, Result};
use crate::gbm::{sigmoid, softplus};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Shap,
    Random,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: (usize, usize),
    pub attention: AttentionMode,
    pub cluster_feature: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: (50, 30),
            attention: AttentionMode::Shap,
            cluster_feature: true,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            seed: 0,
        }
    }
}

impl NetConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(ForceError::InvalidArgument("hidden sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ForceError::InvalidArgument(
                "learning_rate, batch_size and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One observation. `shap` is only read in `Shap` mode and `cluster_onehot`
/// only when the cluster feature is on; other paths may leave them empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetInput {
    pub x: Vec<f64>,
    pub shap: Vec<f64>,
    pub cluster_onehot: Vec<f64>,
}

impl NetInput {
    pub fn plain(x: Vec<f64>) -> Self {
        NetInput {
            x,
            shap: Vec::new(),
            cluster_onehot: Vec::new(),
        }
    }
}

pub fn attention_gate(w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if w.len() != x.len() {
        return Err(ForceError::Dimension {
            expected: x.len(),
            got: w.len(),
        });
    }
    Ok(w.iter().zip(x).map(|(&wi, &xi)| sigmoid(wi) * xi).collect())
}

/// Fully connected layer, weights row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    /// He-uniform weights, zero bias.
    fn init(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / n_in as f64).sqrt();
        let weights = (0..n_in * n_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Dense {
            n_in,
            n_out,
            weights,
            bias: vec![0.0; n_out],
        }
    }

    pub fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        for (o, z) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *z = acc;
        }
    }
}

/// `dense+ReLU -> dense+ReLU -> dense+sigmoid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: [Dense; 3],
}

impl Mlp {
    pub fn forward_logit(&self, input: &[f64]) -> f64 {
        let mut h1 = vec![0.0; self.layers[0].n_out];
        let mut h2 = vec![0.0; self.layers[1].n_out];
        let mut z3 = [0.0];
        self.layers[0].forward_into(input, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        self.layers[1].forward_into(&h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        self.layers[2].forward_into(&h2, &mut z3);
        z3[0]
    }

    pub fn forward(&self, input: &[f64]) -> f64 {
        sigmoid(self.forward_logit(input))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub n_features: usize,
    pub n_clusters: usize,
    pub gate_offset: Vec<f64>,
    /// Fixed gate source in `Random` mode; empty otherwise.
    pub gate_noise: Vec<f64>,
    pub mlp: Mlp,
}

impl NetParams {
    pub fn init(n_features: usize, n_clusters: usize, config: &NetConfig) -> Self {
        let mut rng = seed::rng(seed::derive(config.seed, seed::tags::NET));
        let width = n_features + if config.cluster_feature { n_clusters } else { 0 };
        let (h1, h2) = config.hidden;
        let mlp = Mlp {
            layers: [
                Dense::init(width, h1, &mut rng),
                Dense::init(h1, h2, &mut rng),
                Dense::init(h2, 1, &mut rng),
            ],
        };
        let gate_noise = if config.attention == AttentionMode::Random {
            let mut noise_rng = seed::rng(seed::derive(config.seed, seed::tags::RANDOM_GATE));
            (0..n_features)
                .map(|_| noise_rng.sample(StandardNormal))
                .collect()
        } else {
            Vec::new()
        };
        NetParams {
            n_features,
            n_clusters,
            gate_offset: vec![0.0; n_features],
            gate_noise,
            mlp,
        }
    }

    /// Same shapes, every trainable value zero.
    pub fn zeros_like(&self) -> Self {
        let l = &self.mlp.layers;
        NetParams {
            n_features: self.n_features,
            n_clusters: self.n_clusters,
            gate_offset: vec![0.0; self.gate_offset.len()],
            gate_noise: self.gate_noise.clone(),
            mlp: Mlp {
                layers: [
                    Dense::zeros(l[0].n_in, l[0].n_out),
                    Dense::zeros(l[1].n_in, l[1].n_out),
                    Dense::zeros(l[2].n_in, l[2].n_out),
                ],
            },
        }
    }

    /// Trainable blocks in a fixed order: offset, then weights/bias per layer.
    pub fn blocks(&self) -> [&[f64]; 7] {
        let l = &self.mlp.layers;
        [
            &self.gate_offset,
            &l[0].weights,
            &l[0].bias,
            &l[1].weights,
            &l[1].bias,
            &l[2].weights,
            &l[2].bias,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 7] {
        let [l0, l1, l2] = &mut self.mlp.layers;
        [
            &mut self.gate_offset,
            &mut l0.weights,
            &mut l0.bias,
            &mut l1.weights,
            &mut l1.bias,
            &mut l2.weights,
            &mut l2.bias,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.blocks().iter().map(|b| b.len()).sum();
        if flat.len() != total {
            return Err(ForceError::Dimension {
                expected: total,
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Plain-text dump: a header line per block with its shape, then the
    /// values row-major on one line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "force-net 1 {} {}", self.n_features, self.n_clusters);
        let line = |s: &mut String, name: &str, rows: usize, cols: usize, v: &[f64]| {
            let _ = writeln!(s, "{name} {rows} {cols}");
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", vals.join(" "));
        };
        line(&mut s, "gate_offset", 1, self.gate_offset.len(), &self.gate_offset);
        line(&mut s, "gate_noise", 1, self.gate_noise.len(), &self.gate_noise);
        for (i, l) in self.mlp.layers.iter().enumerate() {
            line(&mut s, &format!("dense{i}.weights"), l.n_out, l.n_in, &l.weights);
            line(&mut s, &format!("dense{i}.bias"), 1, l.n_out, &l.bias);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let bad = |line: usize, message: &str| ForceError::ModelFormat {
            line,
            message: message.to_string(),
        };
        let header: Vec<&str> = lines
            .first()
            .ok_or_else(|| bad(1, "empty input"))?
            .split_whitespace()
            .collect();
        if header.len() != 4 || header[0] != "force-net" || header[1] != "1" {
            return Err(bad(1, "expected 'force-net 1 <features> <clusters>'"));
        }
        let n_features: usize = header[2].parse().map_err(|_| bad(1, "bad feature count"))?;
        let n_clusters: usize = header[3].parse().map_err(|_| bad(1, "bad cluster count"))?;

        let mut blocks: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        let mut i = 1;
        while i < lines.len() {
            if lines[i].trim().is_empty() {
                i += 1;
                continue;
            }
            let shape: Vec<&str> = lines[i].split_whitespace().collect();
            if shape.len() != 3 {
                return Err(bad(i + 1, "expected '<name> <rows> <cols>'"));
            }
            let rows: usize = shape[1].parse().map_err(|_| bad(i + 1, "bad row count"))?;
            let cols: usize = shape[2].parse().map_err(|_| bad(i + 1, "bad column count"))?;
            let values: Vec<f64> = lines
                .get(i + 1)
                .unwrap_or(&"")
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(i + 2, "bad value"))?;
            if values.len() != rows * cols {
                return Err(bad(i + 2, "value count does not match shape"));
            }
            blocks.push((rows, cols, values));
            i += 2;
        }
        if blocks.len() != 8 {
            return Err(bad(lines.len(), "expected 8 blocks"));
        }
        let mut it = blocks.into_iter();
        let gate_offset = it.next().expect("len checked").2;
        let gate_noise = it.next().expect("len checked").2;
        let mut layer = || -> Dense {
            let (n_out, n_in, weights) = it.next().expect("len checked");
            let bias = it.next().expect("len checked").2;
            Dense {
                n_in,
                n_out,
                weights,
                bias,
            }
        };
        let mlp = Mlp {
            layers: [layer(), layer(), layer()],
        };
        Ok(NetParams {
            n_features,
            n_clusters,
            gate_offset,
            gate_noise,
            mlp,
        })
    }
}

/// Scratch buffers for one forward/backward pass.
struct Workspace {
    gate: Vec<f64>,
    h0: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Workspace {
    fn new(params: &NetParams) -> Self {
        let l = &params.mlp.layers;
        Workspace {
            gate: vec![0.0; params.n_features],
            h0: vec![0.0; l[0].n_in],
            z1: vec![0.0; l[0].n_out],
            h1: vec![0.0; l[0].n_out],
            z2: vec![0.0; l[1].n_out],
            h2: vec![0.0; l[1].n_out],
            d1: vec![0.0; l[0].n_out],
            d2: vec![0.0; l[1].n_out],
        }
    }
}

fn check_input(params: &NetParams, input: &NetInput, config: &NetConfig) -> Result<()> {
    let p = params.n_features;
    let dim = |expected: usize, got: usize| {
        if expected == got {
            Ok(())
        } else {
            Err(ForceError::Dimension { expected, got })
        }
    };
    dim(p, input.x.len())?;
    if config.attention == AttentionMode::Shap {
        dim(p, input.shap.len())?;
    }
    if config.attention == AttentionMode::Random {
        dim(p, params.gate_noise.len())?;
    }
    let width = p + if config.cluster_feature { params.n_clusters } else { 0 };
    dim(width, params.mlp.layers[0].n_in)?;
    if config.cluster_feature {
        dim(params.n_clusters, input.cluster_onehot.len())?;
    }
    Ok(())
}

fn check_finite(input: &NetInput) -> Result<()> {
    if input.x.iter().chain(&input.shap).chain(&input.cluster_onehot).any(|v| !v.is_finite()) {
        return Err(ForceError::NonFinite("network input"));
    }
    Ok(())
}

/// Fills `ws` through the output logit and returns it.
fn forward_pass(params: &NetParams, input: &NetInput, config: &NetConfig, ws: &mut Workspace) -> f64 {
    let p = params.n_features;
    match config.attention {
        AttentionMode::Off => ws.h0[..p].copy_from_slice(&input.x),
        AttentionMode::Shap | AttentionMode::Random => {
            let source = if config.attention == AttentionMode::Shap {
                &input.shap
            } else {
                &params.gate_noise
            };
            for i in 0..p {
                let s = sigmoid(source[i] + params.gate_offset[i]);
                ws.gate[i] = s;
                ws.h0[i] = s * input.x[i];
            }
        }
    }
    if config.cluster_feature {
        ws.h0[p..].copy_from_slice(&input.cluster_onehot);
    }
    let [l0, l1, l2] = &params.mlp.layers;
    l0.forward_into(&ws.h0, &mut ws.z1);
    for (h, z) in ws.h1.iter_mut().zip(&ws.z1) {
        *h = z.max(0.0);
    }
    l1.forward_into(&ws.h1, &mut ws.z2);
    for (h, z) in ws.h2.iter_mut().zip(&ws.z2) {
        *h = z.max(0.0);
    }
    let mut z3 = [0.0];
    l2.forward_into(&ws.h2, &mut z3);
    z3[0]
}

/// Output probability for one observation.
pub fn forward(params: &NetParams, input: &NetInput, config: &NetConfig) -> Result<f64> {
    check_input(params, input, config)?;
    check_finite(input)?;
    let mut ws = Workspace::new(params);
    let z = forward_pass(params, input, config, &mut ws);
    let out = sigmoid(z);
    if !z.is_finite() || !out.is_finite() {
        return Err(ForceError::NonFinite("network forward"));
    }
    Ok(out)
}

pub fn predict(params: &NetParams, inputs: &[NetInput], config: &NetConfig) -> Result<Vec<f64>> {
    inputs.iter().map(|x| forward(params, x, config)).collect()
}

/// Mean binary cross-entropy over `batch` and its gradient with respect to
/// every trainable parameter.
pub fn loss_and_gradient(
    params: &NetParams,
    inputs: &[NetInput],
    labels: &[u8],
    batch: &[usize],
    config: &NetConfig,
) -> Result<(f64, NetParams)> {
    for &i in batch {
        check_input(params, &inputs[i], config)?;
        check_finite(&inputs[i])?;
    }
    let mut grad = params.zeros_like();
    let mut ws = Workspace::new(params);
    let loss = accumulate(params, inputs, labels, batch, config, &mut ws, &mut grad);
    Ok((loss, grad))
}

fn accumulate(
    params: &NetParams,
    inputs: &[NetInput],
    labels: &[u8],
    batch: &[usize],
    config: &NetConfig,
    ws: &mut Workspace,
    grad: &mut NetParams,
) -> f64 {
    let p = params.n_features;
    let scale = 1.0 / batch.len() as f64;
    let [l0, l1, l2] = &params.mlp.layers;
    let mut loss = 0.0;

    for &i in batch {
        let input = &inputs[i];
        let y = f64::from(labels[i]);
        let z3 = forward_pass(params, input, config, ws);
        loss += softplus(z3) - y * z3;

        let g3 = (sigmoid(z3) - y) * scale;
        {
            let g = &mut grad.mlp.layers[2];
            for (gw, h) in g.weights.iter_mut().zip(&ws.h2) {
                *gw += g3 * h;
            }
            g.bias[0] += g3;
        }
        for (j, d) in ws.d2.iter_mut().enumerate() {
            *d = if ws.z2[j] > 0.0 { g3 * l2.weights[j] } else { 0.0 };
        }
        {
            let g = &mut grad.mlp.layers[1];
            for (o, &d) in ws.d2.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut g.weights[o * l1.n_in..(o + 1) * l1.n_in];
                for (gw, h) in row.iter_mut().zip(&ws.h1) {
                    *gw += d * h;
                }
                g.bias[o] += d;
            }
        }
        ws.d1.iter_mut().for_each(|d| *d = 0.0);
        for (o, &d) in ws.d2.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &l1.weights[o * l1.n_in..(o + 1) * l1.n_in];
            for (acc, w) in ws.d1.iter_mut().zip(row) {
                *acc += d * w;
            }
        }
        for (j, d) in ws.d1.iter_mut().enumerate() {
            if ws.z1[j] <= 0.0 {
                *d = 0.0;
            }
        }
        {
            let g = &mut grad.mlp.layers[0];
            for (o, &d) in ws.d1.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut g.weights[o * l0.n_in..(o + 1) * l0.n_in];
                for (gw, h) in row.iter_mut().zip(&ws.h0) {
                    *gw += d * h;
                }
                g.bias[o] += d;
            }
        }
        if config.attention != AttentionMode::Off {
            // d loss / d offset_i = (sum_o d1_o * W0[o][i]) * x_i * s_i * (1 - s_i)
            for i in 0..p {
                let mut dh0 = 0.0;
                for (o, &d) in ws.d1.iter().enumerate() {
                    dh0 += d * l0.weights[o * l0.n_in + i];
                }
                let s = ws.gate[i];
                grad.gate_offset[i] += dh0 * input.x[i] * s * (1.0 - s);
            }
        }
    }
    loss * scale
}

fn mean_loss(params: &NetParams, inputs: &[NetInput], labels: &[u8], config: &NetConfig, ws: &mut Workspace) -> f64 {
    let total: f64 = inputs
        .iter()
        .zip(labels)
        .map(|(input, &y)| {
            let z = forward_pass(params, input, config, ws);
            softplus(z) - f64::from(y) * z
        })
        .sum();
    total / inputs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNet {
    pub params: NetParams,
    pub history: TrainHistory,
}

struct Adam {
    m: NetParams,
    v: NetParams,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut NetParams, grad: &NetParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let grads = grad.blocks();
        for (((p, g), m), v) in params
            .blocks_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut())
        {
            for k in 0..p.len() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Mini-batch Adam on mean binary cross-entropy with early stopping on the
/// validation loss. Returns the parameters of the best validation epoch (the
/// last epoch when no validation rows are given).
pub fn train(
    train_inputs: &[NetInput],
    train_labels: &[u8],
    validation_inputs: &[NetInput],
    validation_labels: &[u8],
    n_clusters: usize,
    config: &NetConfig,
) -> Result<TrainedNet> {
    config.validate()?;
    if train_inputs.len() != train_labels.len() || validation_inputs.len() != validation_labels.len()
    {
        return Err(ForceError::InvalidArgument("inputs and labels differ in length".into()));
    }
    let positives = train_labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == train_labels.len() {
        return Err(ForceError::SingleClass);
    }
    let n_features = train_inputs[0].x.len();
    let mut params = NetParams::init(n_features, n_clusters, config);
    for input in train_inputs.iter().chain(validation_inputs) {
        check_input(&params, input, config)?;
        check_finite(input)?;
    }

    let mut rng = seed::rng(seed::derive(config.seed, seed::tags::SHUFFLE));
    let mut adam = Adam {
        m: params.zeros_like(),
        v: params.zeros_like(),
        t: 0,
    };
    let mut ws = Workspace::new(&params);
    let mut grad = params.zeros_like();
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, NetParams)> = None;
    let mut stale = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            for block in grad.blocks_mut() {
                block.iter_mut().for_each(|g| *g = 0.0);
            }
            let loss = accumulate(&params, train_inputs, train_labels, batch, config, &mut ws, &mut grad);
            if !loss.is_finite() {
                return Err(ForceError::Divergence { epoch });
            }
            adam.step(&mut params, &grad, config.learning_rate);
        }
        if !params.is_finite() {
            return Err(ForceError::Divergence { epoch });
        }
        let train_loss = mean_loss(&params, train_inputs, train_labels, config, &mut ws);
        if !train_loss.is_finite() {
            return Err(ForceError::Divergence { epoch });
        }
        history.train_loss.push(train_loss);

        if validation_inputs.is_empty() {
            history.best_epoch = epoch;
            continue;
        }
        let val_loss = mean_loss(&params, validation_inputs, validation_labels, config, &mut ws);
        if !val_loss.is_finite() {
            return Err(ForceError::Divergence { epoch });
        }
        history.validation_loss.push(val_loss);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }

    if let Some((_, p)) = best {
        params = p;
    }
    Ok(TrainedNet { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(attention: AttentionMode, cluster_feature: bool) -> NetConfig {
        NetConfig {
            attention,
            cluster_feature,
            ..NetConfig::default()
        }
    }

    #[test]
    fn gate_values() {
        let x = [2.0, -4.0, 0.5];
        assert_eq!(attention_gate(&[0.0; 3], &x).unwrap(), vec![1.0, -2.0, 0.25]);
        let hi = attention_gate(&[20.0; 3], &x).unwrap();
        let lo = attention_gate(&[-20.0; 3], &x).unwrap();
        for i in 0..3 {
            assert!((hi[i] - x[i]).abs() < 1e-8 * x[i].abs().max(1.0));
            assert!(lo[i].abs() < 1e-8 * x[i].abs());
        }
        assert!(attention_gate(&[0.0], &x).is_err());
    }

    #[test]
    fn zero_params_output_half() {
        let c = cfg(AttentionMode::Shap, true);
        let params = NetParams::init(3, 2, &c).zeros_like();
        let input = NetInput {
            x: vec![1.0, -2.0, 3.0],
            shap: vec![0.3, 0.1, -0.2],
            cluster_onehot: vec![0.0, 1.0],
        };
        assert_eq!(forward(&params, &input, &c).unwrap(), 0.5);
    }

    #[test]
    fn missing_shap_is_a_dimension_error() {
        let c = cfg(AttentionMode::Shap, false);
        let params = NetParams::init(3, 0, &c);
        let input = NetInput::plain(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            forward(&params, &input, &c),
            Err(ForceError::Dimension { .. })
        ));
    }

    #[test]
    fn constant_labels_rejected() {
        let c = cfg(AttentionMode::Off, false);
        let inputs: Vec<NetInput> = (0..4).map(|i| NetInput::plain(vec![i as f64])).collect();
        assert!(matches!(
            train(&inputs, &[1, 1, 1, 1], &[], &[], 0, &c),
            Err(ForceError::SingleClass)
        ));
    }

    #[test]
    fn text_round_trip() {
        let c = cfg(AttentionMode::Random, true);
        let params = NetParams::init(4, 3, &c);
        let back = NetParams::from_text(&params.to_text()).unwrap();
        assert_eq!(back, params);
    }
}
