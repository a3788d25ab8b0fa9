//! Support-weighted classification metrics and ROC AUC.

use serde::{Deserialize, Serialize};

use crate::error::{ForceError, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub n: usize,
    /// Set when some class had no predicted members and its precision was taken as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub roc_points: Vec<(f64, f64)>,
    pub threshold: f64,
    pub n: usize,
    pub zero_division: bool,
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(ForceError::InvalidArgument("no predictions to score".into()));
    }
    if scores.len() != labels.len() {
        return Err(ForceError::Dimension {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(ForceError::InvalidArgument(format!("label {l} is not binary")));
    }
    Ok(())
}

/// Thresholded metrics (`p >= threshold` predicts class 1), averaged over the
/// two classes with support weights.
pub fn classification_metrics(
    probabilities: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ClassificationMetrics> {
    check_lengths(probabilities, labels)?;
    // confusion[true][pred]
    let mut confusion = [[0usize; 2]; 2];
    for (&p, &y) in probabilities.iter().zip(labels) {
        let pred = usize::from(p >= threshold);
        confusion[y as usize][pred] += 1;
    }
    let n = labels.len();
    let nf = n as f64;
    let mut precision = 0.0;
    let mut f1 = 0.0;
    let mut correct = 0usize;
    let mut zero_division = false;
    for c in 0..2 {
        let tp = confusion[c][c];
        let support = confusion[c][0] + confusion[c][1];
        let predicted = confusion[0][c] + confusion[1][c];
        correct += tp;
        if support == 0 {
            continue;
        }
        let p_c = if predicted == 0 {
            zero_division = true;
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let r_c = tp as f64 / support as f64;
        let f_c = if p_c + r_c > 0.0 {
            2.0 * p_c * r_c / (p_c + r_c)
        } else {
            0.0
        };
        precision += support as f64 * p_c;
        f1 += support as f64 * f_c;
    }
    let accuracy = correct as f64 / nf;
    // support_c * (tp_c / support_c) = tp_c, so the weighted recall is the accuracy.
    let recall = accuracy;
    Ok(ClassificationMetrics {
        precision: precision / nf,
        recall,
        f1: f1 / nf,
        accuracy,
        threshold,
        n,
        zero_division,
    })
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(ForceError::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC from mid-ranks: `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn rank_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Tie-aware ROC curve from `(0,0)` to `(1,1)`, one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// AUC (rank form) and the ROC points.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<(f64, Vec<(f64, f64)>)> {
    let auc = rank_auc(scores, labels)?;
    let points = roc_curve(scores, labels)?;
    Ok((auc, points))
}

pub fn evaluate(probabilities: &[f64], labels: &[u8]) -> Result<EvalReport> {
    let m = classification_metrics(probabilities, labels, DEFAULT_THRESHOLD)?;
    let (auc, roc_points) = roc_auc(probabilities, labels)?;
    Ok(EvalReport {
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        accuracy: m.accuracy,
        auc,
        roc_points,
        threshold: m.threshold,
        n: m.n,
        zero_division: m.zero_division,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = classification_metrics(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_confusion_matrix() {
        // predictions: 1,0,0,0 vs truth 1,1,0,0
        let m = classification_metrics(&[0.9, 0.4, 0.4, 0.1], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.recall, 0.75);
        // class 0: P = 2/3, R = 1, F = 0.8; class 1: P = 1, R = 1/2, F = 2/3
        assert!((m.precision - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
        assert!((m.f1 - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_division_is_flagged() {
        let m = classification_metrics(&[0.9, 0.9, 0.9], &[1, 0, 1], 0.5).unwrap();
        assert!(m.zero_division);
        assert!((m.precision - 2.0 / 3.0 * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(classification_metrics(&[], &[], 0.5).is_err());
        assert!(classification_metrics(&[0.1], &[0, 1], 0.5).is_err());
        assert!(matches!(rank_auc(&[0.1, 0.2], &[1, 1]), Err(ForceError::SingleClass)));
    }

    #[test]
    fn auc_reference_cases() {
        assert_eq!(rank_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(rank_auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        // pairs (0.35,0.1) win, (0.35,0.4) loss, (0.8,0.1) win, (0.8,0.4) win
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0, 0, 1, 1];
        assert_eq!(rank_auc(&scores, &labels).unwrap(), 0.75);
        let (auc, pts) = roc_auc(&scores, &labels).unwrap();
        assert_eq!(auc, 0.75);
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        assert!((trapezoid_area(&pts) - 0.75).abs() < 1e-12);
    }
}
