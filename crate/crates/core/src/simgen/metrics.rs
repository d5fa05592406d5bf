//! Graph recovery and estimation error summaries.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{BlockModel, EdgeSets};

/// Area under the ROC curve of `scores` (higher = more likely an edge)
/// against `labels`. Tied scores enter the curve as one diagonal segment,
/// and the curve runs from (0, 0) to (1, 1).
pub fn auc_from_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch("one label per score required".into()));
    }
    let positives = labels.iter().filter(|&&b| b).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateTruth);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        let s = scores[order[idx]];
        while idx < order.len() && scores[order[idx]] == s {
            if labels[order[idx]] {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let tpr = tp as f64 / positives as f64;
        let fpr = fp as f64 / negatives as f64;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}

/// Ranking score from a sequence of group norms along a path: earlier first
/// activation ranks higher, then larger norm at activation. Never-active
/// entities score 0.
fn activation_score(norms: impl Iterator<Item = f64>, len: usize) -> f64 {
    for (idx, norm) in norms.enumerate() {
        if norm > 0.0 {
            return (len - idx) as f64 + norm / (1.0 + norm);
        }
    }
    0.0
}

/// AUC of the response graph along a path of models ordered from the
/// largest penalty to the smallest.
pub fn path_auc_undirected(path: &[&BlockModel], truth: &EdgeSets) -> Result<f64> {
    let p = path.first().ok_or(Error::EmptyPath)?.p;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            scores.push(activation_score(path.iter().map(|m| m.theta_group_norm(i, j)), path.len()));
            labels.push(truth.undirected.contains(&(i, j)));
        }
    }
    auc_from_scores(&scores, &labels)
}

/// AUC of the covariate-to-response arrows along a path of models.
pub fn path_auc_directed(path: &[&BlockModel], truth: &EdgeSets) -> Result<f64> {
    let first = path.first().ok_or(Error::EmptyPath)?;
    let (p, q) = (first.p, first.q);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for k in 0..q {
        for i in 0..p {
            scores.push(activation_score(path.iter().map(|m| m.b_group_norm(k, i)), path.len()));
            labels.push(truth.directed.contains(&(k, i)));
        }
    }
    auc_from_scores(&scores, &labels)
}

/// `L^{-1} sum_l ||estimate_l - truth_l||_F^2`.
pub fn amse(estimates: &[Mat], truth: &[Mat]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::DimensionMismatch("need the same non-zero number of blocks".into()));
    }
    let mut acc = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        if e.shape() != t.shape() {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", e.shape(), t.shape())));
        }
        acc += (e - t).norm_squared();
    }
    Ok(acc / estimates.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Slot-wise confusion counts over the `p(p-1)/2` response pairs and the
/// `p q` covariate-response arrows.
pub fn classification(estimated: &EdgeSets, truth: &EdgeSets, p: usize, q: usize) -> Classification {
    fn count(est: &BTreeSet<(usize, usize)>, truth: &BTreeSet<(usize, usize)>) -> (usize, usize, usize) {
        let tp = est.intersection(truth).count();
        (tp, est.len() - tp, truth.len() - tp)
    }
    let (tp1, fp1, fn1) = count(&estimated.undirected, &truth.undirected);
    let (tp2, fp2, fn2) = count(&estimated.directed, &truth.directed);
    let (tp, fp, fn_) = (tp1 + tp2, fp1 + fp2, fn1 + fn2);
    let slots = p * p.saturating_sub(1) / 2 + p * q;
    let tn = slots - tp - fp - fn_;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Classification {
        tp,
        fp,
        tn,
        fn_,
        accuracy: ratio(tp + tn, slots),
        tpr: recall,
        fpr: ratio(fp, fp + tn),
        f1: if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        },
    }
}

/// Proportion of correctly classified edge slots.
pub fn recovery_accuracy(estimated: &EdgeSets, truth: &EdgeSets, p: usize, q: usize) -> f64 {
    classification(estimated, truth, p, q).accuracy
}
