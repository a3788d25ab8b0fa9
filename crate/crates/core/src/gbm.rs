//! Gradient boosting over depth-limited regression trees with binary log loss.
//!
//! Each stage fits a tree to the residuals `y - p` using squared-error split
//! gain, then sets leaf values with a single Newton step
//! `sum(residual) / sum(p * (1 - p))`. The additive model is
//! `margin(x) = base_margin + learning_rate * sum_t tree_t(x)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{ForceError, Result};

const HESSIAN_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Kept for manifest completeness; fitting has no random component.
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl GbmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ForceError::InvalidArgument(
                "learning_rate must be positive".into(),
            ));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(ForceError::InvalidArgument(
                "max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub split: Option<Split>,
    /// Newton value of the node's training members; only read at leaves.
    pub value: f64,
    pub n_samples: usize,
    /// Sum of `p * (1 - p)` over the node's training members.
    pub cover: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// Binary tree stored as a node array, root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// A single-split tree; handy for hand-built models.
    pub fn stump(feature: usize, threshold: f64, left_value: f64, right_value: f64) -> Self {
        let leaf = |value| Node {
            split: None,
            value,
            n_samples: 0,
            cover: 0.0,
        };
        DecisionTree {
            nodes: vec![
                Node {
                    split: Some(Split {
                        feature,
                        threshold,
                        left: 1,
                        right: 2,
                    }),
                    value: 0.0,
                    n_samples: 0,
                    cover: 0.0,
                },
                leaf(left_value),
                leaf(right_value),
            ],
        }
    }

    /// Routes `x` to a leaf: left iff `x[feature] <= threshold`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let Some(s) = &self.nodes[id].split {
            id = if x[s.feature] <= s.threshold {
                s.left
            } else {
                s.right
            };
        }
        id
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, id: usize) -> usize {
            match &t.nodes[id].split {
                None => 0,
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
            }
        }
        go(self, 0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| n.split.map(|s| s.feature))
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base_margin: f64,
    pub learning_rate: f64,
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl TreeEnsemble {
    pub fn new(
        base_margin: f64,
        learning_rate: f64,
        trees: Vec<DecisionTree>,
        n_features: usize,
    ) -> Result<Self> {
        if let Some(f) = trees.iter().filter_map(DecisionTree::max_feature).max() {
            if f >= n_features {
                return Err(ForceError::Dimension {
                    expected: n_features,
                    got: f + 1,
                });
            }
        }
        Ok(TreeEnsemble {
            base_margin,
            learning_rate,
            trees,
            n_features,
        })
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(ForceError::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn margin_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.value(x)).sum();
        self.base_margin + self.learning_rate * sum
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ForceError::NonFinite("predict_margin input"));
        }
        Ok(self.margin_unchecked(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.predict_margin(x).map(sigmoid)
    }

    /// Line-oriented text form; see the README for the layout.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "force-gbm 1");
        let _ = writeln!(s, "n_features {}", self.n_features);
        let _ = writeln!(s, "base_margin {}", self.base_margin);
        let _ = writeln!(s, "learning_rate {}", self.learning_rate);
        let _ = writeln!(s, "trees {}", self.trees.len());
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {} {}", t, tree.nodes.len());
            for (id, n) in tree.nodes.iter().enumerate() {
                let (f, thr, l, r) = match n.split {
                    Some(sp) => (
                        sp.feature as i64,
                        sp.threshold,
                        sp.left as i64,
                        sp.right as i64,
                    ),
                    None => (-1, 0.0, -1, -1),
                };
                let _ = writeln!(
                    s,
                    "{id} {f} {thr} {l} {r} {} {} {}",
                    n.value, n.cover, n.n_samples
                );
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let bad = |line: usize, message: &str| ForceError::ModelFormat {
            line,
            message: message.to_string(),
        };
        let mut keyed = |key: &str| -> Result<(usize, String)> {
            let (no, l) = lines.next().ok_or_else(|| bad(0, "unexpected end of input"))?;
            let rest = l
                .strip_prefix(key)
                .ok_or_else(|| bad(no, &format!("expected '{key}'")))?;
            Ok((no, rest.trim().to_string()))
        };
        fn num<T: std::str::FromStr>(no: usize, s: &str) -> Result<T> {
            s.parse().map_err(|_| ForceError::ModelFormat {
                line: no,
                message: format!("cannot parse '{s}'"),
            })
        }

        let (no, v) = keyed("force-gbm")?;
        if v != "1" {
            return Err(bad(no, "unsupported version"));
        }
        let (no, v) = keyed("n_features")?;
        let n_features: usize = num(no, &v)?;
        let (no, v) = keyed("base_margin")?;
        let base_margin: f64 = num(no, &v)?;
        let (no, v) = keyed("learning_rate")?;
        let learning_rate: f64 = num(no, &v)?;
        let (no, v) = keyed("trees")?;
        let n_trees: usize = num(no, &v)?;

        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let (no, v) = keyed("tree")?;
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 2 || num::<usize>(no, parts[0])? != t {
                return Err(bad(no, "bad tree header"));
            }
            let n_nodes: usize = num(no, parts[1])?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for id in 0..n_nodes {
                let (no, v) = keyed("")?;
                let p: Vec<&str> = v.split_whitespace().collect();
                if p.len() != 8 || num::<usize>(no, p[0])? != id {
                    return Err(bad(no, "bad node line"));
                }
                let feature: i64 = num(no, p[1])?;
                let split = if feature < 0 {
                    None
                } else {
                    let left: usize = num(no, p[3])?;
                    let right: usize = num(no, p[4])?;
                    if left >= n_nodes || right >= n_nodes {
                        return Err(bad(no, "child id out of range"));
                    }
                    Some(Split {
                        feature: feature as usize,
                        threshold: num(no, p[2])?,
                        left,
                        right,
                    })
                };
                nodes.push(Node {
                    split,
                    value: num(no, p[5])?,
                    cover: num(no, p[6])?,
                    n_samples: num(no, p[7])?,
                });
            }
            trees.push(DecisionTree { nodes });
        }
        TreeEnsemble::new(base_margin, learning_rate, trees, n_features)
    }
}

/// Mean binary log loss of margins against labels.
pub fn log_loss_from_margins(margins: &[f64], labels: &[u8]) -> f64 {
    let n = margins.len() as f64;
    margins
        .iter()
        .zip(labels)
        .map(|(&f, &y)| softplus(f) - f64::from(y) * f)
        .sum::<f64>()
        / n
}

pub fn fit(matrix: &FeatureMatrix, train: &[usize], config: &GbmConfig) -> Result<TreeEnsemble> {
    fit_traced(matrix, train, config).map(|(e, _)| e)
}

/// Like [`fit`], also returning the training log loss before the first stage
/// and after every stage.
pub fn fit_traced(
    matrix: &FeatureMatrix,
    train: &[usize],
    config: &GbmConfig,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    config.validate()?;
    let mut rows = train.to_vec();
    rows.sort_unstable();
    rows.dedup();
    if rows.is_empty() {
        return Err(ForceError::InvalidArgument("no training rows".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= matrix.n_rows()) {
        return Err(ForceError::InvalidArgument(format!("row {bad} out of range")));
    }
    let labels: Vec<u8> = rows.iter().map(|&i| matrix.labels[i]).collect();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(ForceError::SingleClass);
    }

    let p_bar = positives as f64 / labels.len() as f64;
    let base_margin = (p_bar / (1.0 - p_bar)).ln();
    let mut margins = vec![base_margin; rows.len()];
    let mut trace = vec![log_loss_from_margins(&margins, &labels)];

    let xs: Vec<&[f64]> = rows.iter().map(|&i| matrix.row(i)).collect();
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut residual = vec![0.0; rows.len()];
    let mut hessian = vec![0.0; rows.len()];

    for _ in 0..config.n_trees {
        for (k, &f) in margins.iter().enumerate() {
            let p = sigmoid(f);
            residual[k] = f64::from(labels[k]) - p;
            hessian[k] = p * (1.0 - p);
        }
        let builder = TreeBuilder {
            xs: &xs,
            residual: &residual,
            hessian: &hessian,
            n_features: matrix.n_cols(),
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf,
        };
        let tree = builder.build();
        for (k, m) in margins.iter_mut().enumerate() {
            *m += config.learning_rate * tree.value(xs[k]);
        }
        if margins.iter().any(|m| !m.is_finite()) {
            return Err(ForceError::NonFinite("boosting margins"));
        }
        trace.push(log_loss_from_margins(&margins, &labels));
        trees.push(tree);
    }

    let ensemble = TreeEnsemble::new(base_margin, config.learning_rate, trees, matrix.n_cols())?;
    Ok((ensemble, trace))
}

struct TreeBuilder<'a> {
    xs: &'a [&'a [f64]],
    residual: &'a [f64],
    hessian: &'a [f64],
    n_features: usize,
    max_depth: usize,
    min_samples_leaf: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn build(&self) -> DecisionTree {
        let mut nodes = Vec::new();
        let members: Vec<usize> = (0..self.xs.len()).collect();
        self.grow(&mut nodes, members, 0);
        DecisionTree { nodes }
    }

    fn grow(&self, nodes: &mut Vec<Node>, members: Vec<usize>, depth: usize) -> usize {
        let sum_r: f64 = members.iter().map(|&k| self.residual[k]).sum();
        let cover: f64 = members.iter().map(|&k| self.hessian[k]).sum();
        let id = nodes.len();
        nodes.push(Node {
            split: None,
            value: sum_r / cover.max(HESSIAN_FLOOR),
            n_samples: members.len(),
            cover,
        });

        if depth >= self.max_depth || members.len() < 2 * self.min_samples_leaf {
            return id;
        }
        let Some(best) = self.best_split(&members, sum_r) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = members
            .iter()
            .partition(|&&k| self.xs[k][best.feature] <= best.threshold);
        let l = self.grow(nodes, left, depth + 1);
        let r = self.grow(nodes, right, depth + 1);
        nodes[id].split = Some(Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        });
        id
    }

    fn best_split(&self, members: &[usize], sum_r: f64) -> Option<BestSplit> {
        let n = members.len();
        let parent_score = sum_r * sum_r / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut order = members.to_vec();

        for f in 0..self.n_features {
            order.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                left_sum += self.residual[order[pos]];
                let lo = self.xs[order[pos]][f];
                let hi = self.xs[order[pos + 1]][f];
                if lo == hi {
                    continue;
                }
                let n_left = pos + 1;
                let n_right = n - n_left;
                if n_left < self.min_samples_leaf || n_right < self.min_samples_leaf {
                    continue;
                }
                let right_sum = sum_r - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / n_right as f64
                    - parent_score;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}
