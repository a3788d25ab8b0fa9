//! Interventional SHAP values for [`TreeEnsemble`] models.
//!
//! The value function of a coalition `S` is the mean, over background rows
//! `r`, of the margin evaluated at the composite point that takes `x` on `S`
//! and `r` elsewhere. For a single `(x, r)` pair a tree only depends on the
//! features whose split decisions differ between `x` and `r` along a path, so
//! each leaf reachable by some composite contributes in closed form:
//! with `a` features taken from `x` and `b` from `r` on the path,
//!
//! * each `x`-side feature gains `v * (a-1)! b! / (a+b)!`,
//! * each `r`-side feature loses `v * a! (b-1)! / (a+b)!`.
//!
//! Attributions are in margin (log-odds) units and include the learning rate.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{ForceError, Result};
use crate::gbm::{DecisionTree, TreeEnsemble};
use crate::seed;

pub const EXACT_FEATURE_LIMIT: usize = 15;
pub const DEFAULT_BACKGROUND_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapVector {
    pub values: Vec<f64>,
    pub base_value: f64,
}

impl ShapVector {
    /// `base_value + sum(values)`; equals the explained margin.
    pub fn reconstructed_margin(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>()
    }
}

/// Reference rows defining the value function's expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    rows: Vec<Vec<f64>>,
    pub source_rows: Vec<usize>,
}

impl Background {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(ForceError::EmptyBackground);
        }
        let p = rows[0].len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(ForceError::Dimension {
                expected: p,
                got: r.len(),
            });
        }
        let source_rows = (0..rows.len()).collect();
        Ok(Background { rows, source_rows })
    }

    /// All of `train` when it fits under `cap`, otherwise a seeded sample of
    /// `cap` rows.
    pub fn from_training(
        matrix: &FeatureMatrix,
        train: &[usize],
        cap: usize,
        seed_value: u64,
    ) -> Result<Self> {
        if train.is_empty() || cap == 0 {
            return Err(ForceError::EmptyBackground);
        }
        let mut chosen: Vec<usize> = if train.len() <= cap {
            train.to_vec()
        } else {
            let mut rng = seed::rng(seed::derive(seed_value, seed::tags::BACKGROUND));
            index::sample(&mut rng, train.len(), cap)
                .into_iter()
                .map(|k| train[k])
                .collect()
        };
        chosen.sort_unstable();
        let rows = chosen.iter().map(|&i| matrix.row(i).to_vec()).collect();
        Ok(Background {
            rows,
            source_rows: chosen,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub rows: Vec<Vec<f64>>,
    pub base_value: f64,
    /// Index of each row in the source [`FeatureMatrix`].
    pub row_ids: Vec<usize>,
}

impl ShapMatrix {
    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Row for source index `id`, if present.
    pub fn row_for(&self, id: usize) -> Option<&[f64]> {
        self.row_ids
            .iter()
            .position(|&r| r == id)
            .map(|k| self.rows[k].as_slice())
    }

    pub fn vector(&self, k: usize) -> ShapVector {
        ShapVector {
            values: self.rows[k].clone(),
            base_value: self.base_value,
        }
    }

    /// CSV with one column per feature followed by `base_value`.
    pub fn to_csv(&self, feature_names: &[String]) -> String {
        let mut out = String::new();
        out.push_str("row_id,");
        out.push_str(&feature_names.join(","));
        out.push_str(",base_value\n");
        for (id, row) in self.row_ids.iter().zip(&self.rows) {
            out.push_str(&id.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push(',');
            out.push_str(&self.base_value.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, feature_names: &[String]) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv(feature_names)).map_err(|e| ForceError::io(path, e))
    }
}

fn check_inputs(ensemble: &TreeEnsemble, x: &[f64], bg: &Background) -> Result<()> {
    if bg.is_empty() {
        return Err(ForceError::EmptyBackground);
    }
    ensemble.check_dim(x)?;
    if bg.n_features() != ensemble.n_features {
        return Err(ForceError::Dimension {
            expected: ensemble.n_features,
            got: bg.n_features(),
        });
    }
    Ok(())
}

/// Mean margin over the background rows.
pub fn expected_margin(ensemble: &TreeEnsemble, bg: &Background) -> f64 {
    bg.rows.iter().map(|r| ensemble.margin_unchecked(r)).sum::<f64>() / bg.len() as f64
}

/// Shapley weight `a! b! / (a + b + 1)!` of a coalition holding `a` of the
/// other path features, with `b` excluded.
fn coalition_weight(a: usize, b: usize) -> f64 {
    // 1 / ((a+b+1) * C(a+b, a))
    let (small, m) = (a.min(b), a + b);
    let mut binom = 1.0;
    for i in 0..small {
        binom = binom * (m - i) as f64 / (i + 1) as f64;
    }
    1.0 / ((m + 1) as f64 * binom)
}

struct PairWalk<'a> {
    tree: &'a DecisionTree,
    x: &'a [f64],
    r: &'a [f64],
    /// (feature, taken from x)
    path: Vec<(usize, bool)>,
}

impl PairWalk<'_> {
    fn walk(&mut self, id: usize, out: &mut [f64]) {
        let node = &self.tree.nodes[id];
        let Some(s) = node.split else {
            let a = self.path.iter().filter(|(_, from_x)| *from_x).count();
            let b = self.path.len() - a;
            if a + b == 0 {
                return;
            }
            let v = node.value;
            let gain = if a > 0 { v * coalition_weight(a - 1, b) } else { 0.0 };
            let loss = if b > 0 { v * coalition_weight(a, b - 1) } else { 0.0 };
            for &(f, from_x) in &self.path {
                if from_x {
                    out[f] += gain;
                } else {
                    out[f] -= loss;
                }
            }
            return;
        };
        let x_left = self.x[s.feature] <= s.threshold;
        let r_left = self.r[s.feature] <= s.threshold;
        let child = |left: bool| if left { s.left } else { s.right };
        if x_left == r_left {
            return self.walk(child(x_left), out);
        }
        if let Some(&(_, from_x)) = self.path.iter().find(|(f, _)| *f == s.feature) {
            let go_left = if from_x { x_left } else { r_left };
            return self.walk(child(go_left), out);
        }
        self.path.push((s.feature, true));
        self.walk(child(x_left), out);
        self.path.pop();
        self.path.push((s.feature, false));
        self.walk(child(r_left), out);
        self.path.pop();
    }
}

/// Unscaled per-tree attributions averaged over the background.
fn tree_attributions(tree: &DecisionTree, x: &[f64], bg: &Background, out: &mut [f64]) {
    let mut acc = vec![0.0; out.len()];
    for r in &bg.rows {
        let mut w = PairWalk {
            tree,
            x,
            r,
            path: Vec::with_capacity(8),
        };
        w.walk(0, &mut acc);
    }
    let scale = 1.0 / bg.len() as f64;
    for (o, a) in out.iter_mut().zip(acc) {
        *o += a * scale;
    }
}

pub fn tree_shap(ensemble: &TreeEnsemble, x: &[f64], bg: &Background) -> Result<ShapVector> {
    check_inputs(ensemble, x, bg)?;
    Ok(tree_shap_with_base(ensemble, x, bg, expected_margin(ensemble, bg)))
}

fn tree_shap_with_base(
    ensemble: &TreeEnsemble,
    x: &[f64],
    bg: &Background,
    base_value: f64,
) -> ShapVector {
    let mut per_tree = vec![0.0; ensemble.n_features];
    for tree in &ensemble.trees {
        tree_attributions(tree, x, bg, &mut per_tree);
    }
    let values = per_tree
        .into_iter()
        .map(|v| v * ensemble.learning_rate)
        .collect();
    ShapVector { values, base_value }
}

/// SHAP rows for `rows` of `matrix`, in the given order.
pub fn shap_matrix(
    ensemble: &TreeEnsemble,
    matrix: &FeatureMatrix,
    rows: &[usize],
    bg: &Background,
) -> Result<ShapMatrix> {
    if bg.is_empty() {
        return Err(ForceError::EmptyBackground);
    }
    if matrix.n_cols() != ensemble.n_features || bg.n_features() != ensemble.n_features {
        return Err(ForceError::Dimension {
            expected: ensemble.n_features,
            got: matrix.n_cols(),
        });
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= matrix.n_rows()) {
        return Err(ForceError::InvalidArgument(format!("row {bad} out of range")));
    }
    let base_value = expected_margin(ensemble, bg);
    let out: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&i| tree_shap_with_base(ensemble, matrix.row(i), bg, base_value).values)
        .collect();
    Ok(ShapMatrix {
        rows: out,
        base_value,
        row_ids: rows.to_vec(),
    })
}

/// Brute-force Shapley values over all `2^p` coalitions with the same
/// interventional value function as [`tree_shap`].
pub fn exact_shapley_oracle(
    ensemble: &TreeEnsemble,
    x: &[f64],
    bg: &Background,
) -> Result<ShapVector> {
    let p = ensemble.n_features;
    if p > EXACT_FEATURE_LIMIT {
        return Err(ForceError::TooManyFeatures(p));
    }
    check_inputs(ensemble, x, bg)?;

    let n_sets = 1usize << p;
    let mut composite = vec![0.0; p];
    let value: Vec<f64> = (0..n_sets)
        .map(|mask| {
            let mut total = 0.0;
            for r in &bg.rows {
                for j in 0..p {
                    composite[j] = if mask >> j & 1 == 1 { x[j] } else { r[j] };
                }
                total += ensemble.margin_unchecked(&composite);
            }
            total / bg.len() as f64
        })
        .collect();

    // weight[s] = s! (p - s - 1)! / p!
    let weight: Vec<f64> = (0..p).map(|s| coalition_weight(s, p - s - 1)).collect();
    let mut values = vec![0.0; p];
    for (f, phi) in values.iter_mut().enumerate() {
        let bit = 1usize << f;
        for mask in 0..n_sets {
            if mask & bit != 0 {
                continue;
            }
            let size = mask.count_ones() as usize;
            *phi += weight[size] * (value[mask | bit] - value[mask]);
        }
    }
    Ok(ShapVector {
        values,
        base_value: value[0],
    })
}
