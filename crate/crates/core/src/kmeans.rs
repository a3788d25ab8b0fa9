//! Kernel k-means over SHAP vectors.
//!
//! Centroids live in the kernel's feature space and are never materialized.
//! The squared distance from `x` to the mean of cluster `c` is
//!
//! ```text
//! H(x,x) - 2/|c| * sum_{j in c} H(x, x_j) + 1/|c|^2 * sum_{j,l in c} H(x_j, x_l)
//! ```
//!
//! and the last term is cached per cluster so that out-of-sample points can
//! be assigned after fitting.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ForceError, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32, coef0: f64 },
    Radial { gamma: f64 },
}

impl KernelSpec {
    /// Linear, polynomial `d in {2,3} x c in {0,1}`, radial `gamma in {0.01, 0.1, 1, 10}`.
    pub fn standard_grid() -> Vec<KernelSpec> {
        let mut grid = vec![KernelSpec::Linear];
        for degree in [2, 3] {
            for coef0 in [0.0, 1.0] {
                grid.push(KernelSpec::Polynomial { degree, coef0 });
            }
        }
        for gamma in [0.01, 0.1, 1.0, 10.0] {
            grid.push(KernelSpec::Radial { gamma });
        }
        grid
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, coef0 } => {
                if degree == 0 || !coef0.is_finite() {
                    Err(ForceError::InvalidArgument(
                        "polynomial kernel needs degree >= 1 and finite coef0".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Radial { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(ForceError::InvalidArgument("radial gamma must be positive".into()))
                }
            }
        }
    }

    /// Kernel value without dimension checks.
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(u, v),
            KernelSpec::Polynomial { degree, coef0 } => (dot(u, v) + coef0).powi(degree as i32),
            KernelSpec::Radial { gamma } => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree, coef0 } => write!(f, "poly(d={degree},c={coef0})"),
            KernelSpec::Radial { gamma } => write!(f, "rbf(gamma={gamma})"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = ForceError;

    /// Parses the `Display` form: `linear`, `poly(d=2,c=1)`, `rbf(gamma=0.1)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || ForceError::InvalidArgument(format!("cannot parse kernel '{s}'"));
        let s = s.trim();
        if s == "linear" {
            return Ok(KernelSpec::Linear);
        }
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let mut degree = None;
        let mut coef0 = None;
        let mut gamma = None;
        for part in args.split(',') {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key.trim() {
                "d" => degree = Some(value.trim().parse::<u32>().map_err(|_| bad())?),
                "c" => coef0 = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                "gamma" => gamma = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let spec = match (name.trim(), degree, coef0, gamma) {
            ("poly", Some(degree), Some(coef0), None) => KernelSpec::Polynomial { degree, coef0 },
            ("rbf", None, None, Some(gamma)) => KernelSpec::Radial { gamma },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn kernel_eval(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(ForceError::Dimension {
            expected: u.len(),
            got: v.len(),
        });
    }
    if u.iter().chain(v).any(|a| !a.is_finite()) {
        return Err(ForceError::NonFinite("kernel input"));
    }
    Ok(spec.eval(u, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansOptions {
    pub max_iter: usize,
    pub n_restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 300,
            n_restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub spec: KernelSpec,
    pub k: usize,
    points: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    sizes: Vec<usize>,
    /// `sum_{j,l in c} H(x_j, x_l)` per cluster.
    within_sums: Vec<f64>,
    objective: f64,
    /// Objective of the starting assignment and after every Lloyd sweep.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    fn new(spec: &KernelSpec, points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = spec.eval(&points[i], &points[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Gram { n, k }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    fn point_distance(&self, i: usize, j: usize) -> f64 {
        (self.at(i, i) - 2.0 * self.at(i, j) + self.at(j, j)).max(0.0)
    }
}

/// Per-cluster statistics of a given assignment.
struct Stats {
    sizes: Vec<usize>,
    /// `row_sums[i * k + c] = sum_{j in c} K(i, j)`
    row_sums: Vec<f64>,
    within: Vec<f64>,
}

impl Stats {
    fn compute(gram: &Gram, assignment: &[usize], k: usize) -> Self {
        let n = gram.n;
        let mut sizes = vec![0usize; k];
        for &a in assignment {
            sizes[a] += 1;
        }
        let mut row_sums = vec![0.0; n * k];
        for i in 0..n {
            let row = &mut row_sums[i * k..(i + 1) * k];
            for (j, &a) in assignment.iter().enumerate() {
                row[a] += gram.at(i, j);
            }
        }
        let mut within = vec![0.0; k];
        for (i, &a) in assignment.iter().enumerate() {
            within[a] += row_sums[i * k + a];
        }
        Stats {
            sizes,
            row_sums,
            within,
        }
    }

    fn distance(&self, gram: &Gram, i: usize, c: usize) -> f64 {
        let k = self.sizes.len();
        let m = self.sizes[c] as f64;
        (gram.at(i, i) - 2.0 * self.row_sums[i * k + c] / m + self.within[c] / (m * m)).max(0.0)
    }

    fn objective(&self, gram: &Gram, assignment: &[usize]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .map(|(i, &a)| self.distance(gram, i, a))
            .sum()
    }
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    let n = points.len();
    if k == 0 {
        return Err(ForceError::InvalidArgument("k must be positive".into()));
    }
    if k > n {
        return Err(ForceError::TooManyClusters { k, n });
    }
    let p = points[0].len();
    for r in points {
        if r.len() != p {
            return Err(ForceError::Dimension {
                expected: p,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ForceError::NonFinite("clustering input"));
        }
    }
    Ok(p)
}

/// Lloyd iterations from `init` until the assignment is a fixed point or
/// `max_iter` sweeps have run.
fn lloyd(gram: &Gram, k: usize, init: Vec<usize>, max_iter: usize) -> (Vec<usize>, Vec<f64>, bool) {
    let n = gram.n;
    let mut assignment = init;
    let mut stats = Stats::compute(gram, &assignment, k);
    let mut trace = vec![stats.objective(gram, &assignment)];
    let mut converged = false;

    for _ in 0..max_iter {
        let mut next = vec![0usize; n];
        let mut own = vec![0.0; n];
        for i in 0..n {
            let mut best = (f64::INFINITY, 0usize);
            for c in 0..k {
                let d = stats.distance(gram, i, c);
                if d < best.0 {
                    best = (d, c);
                }
            }
            next[i] = best.1;
            own[i] = best.0;
        }
        repair_empty(&mut next, &own, k);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
        stats = Stats::compute(gram, &assignment, k);
        trace.push(stats.objective(gram, &assignment));
    }
    (assignment, trace, converged)
}

/// Gives each empty cluster the point farthest from its current centroid,
/// taken from clusters that keep at least one member.
fn repair_empty(assignment: &mut [usize], own_distance: &[f64], k: usize) {
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
            if moved[i] || sizes[assignment[i]] < 2 {
                continue;
            }
            if pick.is_none_or(|p| own_distance[i] > own_distance[p]) {
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

/// Greedy k-means++ seeding in feature space; returns the initial assignment
/// (each point to its nearest seed, each seed to its own cluster).
fn plus_plus_init(gram: &Gram, k: usize, seed_value: u64) -> Vec<usize> {
    let n = gram.n;
    let mut rng = seed::rng(seed_value);
    let mut seeds = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    seeds.push(first);
    chosen[first] = true;
    let mut nearest: Vec<f64> = (0..n).map(|i| gram.point_distance(i, first)).collect();

    while seeds.len() < k {
        let total: f64 = (0..n).filter(|&i| !chosen[i]).map(|i| nearest[i]).sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for i in (0..n).filter(|&i| !chosen[i]) {
                if nearest[i] <= 0.0 {
                    continue;
                }
                pick = Some(i);
                target -= nearest[i];
                if target < 0.0 {
                    break;
                }
            }
            pick.expect("positive total implies a candidate")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        seeds.push(next);
        chosen[next] = true;
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(gram.point_distance(i, next));
        }
    }

    let mut assignment: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = (f64::INFINITY, 0usize);
            for (c, &s) in seeds.iter().enumerate() {
                let d = gram.point_distance(i, s);
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect();
    for (c, &s) in seeds.iter().enumerate() {
        assignment[s] = c;
    }
    assignment
}

impl ClusterModel {
    fn from_gram(
        spec: KernelSpec,
        k: usize,
        points: Vec<Vec<f64>>,
        gram: &Gram,
        assignment: Vec<usize>,
        trace: Vec<f64>,
        converged: bool,
    ) -> Result<Self> {
        let stats = Stats::compute(gram, &assignment, k);
        if let Some(c) = stats.sizes.iter().position(|&s| s == 0) {
            return Err(ForceError::EmptyCluster(c));
        }
        let objective = stats.objective(gram, &assignment);
        Ok(ClusterModel {
            spec,
            k,
            points,
            assignment,
            sizes: stats.sizes,
            within_sums: stats.within,
            objective,
            objective_trace: trace,
            converged,
        })
    }

    /// Best of `n_restarts` k-means++ seeded Lloyd runs by final objective
    /// (earliest restart wins ties).
    pub fn fit(
        points: &[Vec<f64>],
        k: usize,
        spec: KernelSpec,
        seed_value: u64,
        options: &KMeansOptions,
    ) -> Result<Self> {
        check_points(points, k)?;
        spec.validate()?;
        if options.max_iter == 0 || options.n_restarts == 0 {
            return Err(ForceError::InvalidArgument(
                "max_iter and n_restarts must be at least 1".into(),
            ));
        }
        let gram = Gram::new(&spec, points);
        let runs: Vec<(Vec<usize>, Vec<f64>, bool)> = (0..options.n_restarts)
            .into_par_iter()
            .map(|r| {
                let init = plus_plus_init(&gram, k, seed::derive(seed_value, r as u64));
                lloyd(&gram, k, init, options.max_iter)
            })
            .collect();
        let mut best = 0;
        for (r, run) in runs.iter().enumerate() {
            let obj = *run.1.last().expect("trace is never empty");
            if obj < *runs[best].1.last().expect("trace is never empty") {
                best = r;
            }
        }
        let (assignment, trace, converged) = runs.into_iter().nth(best).expect("index in range");
        Self::from_gram(spec, k, points.to_vec(), &gram, assignment, trace, converged)
    }

    /// Lloyd iterations from a caller-supplied initial assignment.
    pub fn fit_from_assignment(
        points: &[Vec<f64>],
        k: usize,
        spec: KernelSpec,
        init: Vec<usize>,
        max_iter: usize,
    ) -> Result<Self> {
        check_points(points, k)?;
        spec.validate()?;
        if init.len() != points.len() {
            return Err(ForceError::Dimension {
                expected: points.len(),
                got: init.len(),
            });
        }
        if let Some(&bad) = init.iter().find(|&&a| a >= k) {
            return Err(ForceError::InvalidArgument(format!("cluster id {bad} >= k")));
        }
        let gram = Gram::new(&spec, points);
        let mut init = init;
        let empty_fix = vec![0.0; points.len()];
        repair_empty(&mut init, &empty_fix, k);
        let (assignment, trace, converged) = lloyd(&gram, k, init, max_iter.max(1));
        Self::from_gram(spec, k, points.to_vec(), &gram, assignment, trace, converged)
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn cluster_size(&self, c: usize) -> usize {
        self.sizes[c]
    }

    pub fn feature_distance2(&self, x: &[f64], c: usize) -> Result<f64> {
        self.check_dim(x)?;
        if c >= self.k {
            return Err(ForceError::InvalidArgument(format!("cluster {c} >= k")));
        }
        if self.sizes[c] == 0 {
            return Err(ForceError::EmptyCluster(c));
        }
        let mut cross = 0.0;
        for (j, &a) in self.assignment.iter().enumerate() {
            if a == c {
                cross += self.spec.eval(x, &self.points[j]);
            }
        }
        Ok(self.distance_from_cross(x, c, cross))
    }

    fn distance_from_cross(&self, x: &[f64], c: usize, cross: f64) -> f64 {
        let m = self.sizes[c] as f64;
        (self.spec.eval(x, x) - 2.0 * cross / m + self.within_sums[c] / (m * m)).max(0.0)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        let p = self.points[0].len();
        if x.len() != p {
            return Err(ForceError::Dimension {
                expected: p,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Nearest implicit centroid; ties go to the lowest cluster id.
    pub fn assign(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        let mut cross = vec![0.0; self.k];
        for (j, &a) in self.assignment.iter().enumerate() {
            cross[a] += self.spec.eval(x, &self.points[j]);
        }
        let mut best = (f64::INFINITY, 0usize);
        for (c, &s) in cross.iter().enumerate() {
            let d = self.distance_from_cross(x, c, s);
            if d < best.0 {
                best = (d, c);
            }
        }
        Ok(best.1)
    }

    /// Within-cluster sum of squared feature-space distances.
    pub fn objective(&self) -> f64 {
        self.objective
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let rbf = KernelSpec::Radial { gamma: 0.5 };
        assert_eq!(kernel_eval(&rbf, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        let poly = KernelSpec::Polynomial {
            degree: 2,
            coef0: 1.0,
        };
        assert_eq!(kernel_eval(&poly, &[1.0, 0.0], &[1.0, 5.0]).unwrap(), 4.0);
        assert_eq!(
            kernel_eval(&KernelSpec::Linear, &[1.0, 0.0], &[0.0, 3.0]).unwrap(),
            0.0
        );
        assert!(matches!(
            kernel_eval(&KernelSpec::Linear, &[1.0], &[1.0, 2.0]),
            Err(ForceError::Dimension { .. })
        ));
    }

    #[test]
    fn grid_has_nine_kernels() {
        let g = KernelSpec::standard_grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], KernelSpec::Linear);
    }

    #[test]
    fn kernel_names_round_trip() {
        for spec in KernelSpec::standard_grid() {
            assert_eq!(spec.to_string().parse::<KernelSpec>().unwrap(), spec);
        }
        assert!("poly(d=2)".parse::<KernelSpec>().is_err());
        assert!("rbf(gamma=-1)".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn k_equals_n_is_zero_objective() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let m = ClusterModel::fit(&pts, 6, KernelSpec::Linear, 1, &KMeansOptions::default())
            .unwrap();
        assert_eq!(m.objective(), 0.0);
        let mut seen = m.assignment.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            ClusterModel::fit(&pts, 3, KernelSpec::Linear, 0, &KMeansOptions::default()),
            Err(ForceError::TooManyClusters { k: 3, n: 2 })
        ));
    }

    #[test]
    fn singleton_self_distance_is_zero() {
        let pts = vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![5.1, 5.0]];
        let m = ClusterModel::fit_from_assignment(
            &pts,
            2,
            KernelSpec::Radial { gamma: 0.1 },
            vec![0, 1, 1],
            10,
        )
        .unwrap();
        assert_eq!(m.feature_distance2(&[0.0, 0.0], m.assignment[0]).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_tie_goes_to_cluster_zero() {
        let pts = vec![vec![-1.0], vec![1.0]];
        let m = ClusterModel::fit_from_assignment(&pts, 2, KernelSpec::Linear, vec![0, 1], 5)
            .unwrap();
        assert_eq!(m.assign(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn empty_initial_cluster_is_repaired() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.2]];
        let m = ClusterModel::fit_from_assignment(&pts, 2, KernelSpec::Linear, vec![0, 0, 0, 0], 50)
            .unwrap();
        assert!(m.cluster_size(0) > 0 && m.cluster_size(1) > 0);
        assert_eq!(m.assignment[0], m.assignment[1]);
        assert_eq!(m.assignment[2], m.assignment[3]);
        assert_ne!(m.assignment[0], m.assignment[2]);
    }
}
