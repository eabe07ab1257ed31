//! Threshold and ranking metrics for binary scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_pos: usize,
}

impl Confusion {
    /// Predicted positive when `score >= threshold`.
    pub fn at_threshold(labels: &[u8], scores: &[f64], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&y, &s) in labels.iter().zip(scores) {
            match (y == 1, s >= threshold) {
                (false, false) => c.true_neg += 1,
                (false, true) => c.false_pos += 1,
                (true, false) => c.false_neg += 1,
                (true, true) => c.true_pos += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.true_neg + self.false_pos + self.false_neg + self.true_pos
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.true_neg + self.true_pos, self.total())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
    pub accuracy: f64,
    /// `None` when only one class is present.
    pub roc_auc: Option<f64>,
    pub average_precision: Option<f64>,
    pub confusion: Confusion,
    pub precision_pos: f64,
    pub recall_pos: f64,
    pub precision_neg: f64,
    pub recall_neg: f64,
}

fn check(labels: &[u8], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::Shape {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("metrics need at least one score".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::parse("labels", "labels must be 0 or 1"));
    }
    Ok(())
}

/// Area under the ROC curve from mid-ranks, so tied scores count one half.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Non-interpolated average precision: the sum over distinct score
/// thresholds, highest first, of precision times the recall gained there.
pub fn average_precision(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Some(ap)
}

pub fn compute_metrics(labels: &[u8], scores: &[f64], threshold: f64) -> Result<Metrics> {
    check(labels, scores)?;
    let c = Confusion::at_threshold(labels, scores, threshold);
    let n_pos = c.true_pos + c.false_neg;
    let n_neg = c.true_neg + c.false_pos;
    Ok(Metrics {
        n: labels.len(),
        n_pos,
        n_neg,
        threshold,
        accuracy: c.accuracy(),
        roc_auc: roc_auc(labels, scores),
        average_precision: average_precision(labels, scores),
        confusion: c,
        precision_pos: ratio(c.true_pos, c.true_pos + c.false_pos),
        recall_pos: ratio(c.true_pos, n_pos),
        precision_neg: ratio(c.true_neg, c.true_neg + c.false_neg),
        recall_neg: ratio(c.true_neg, n_neg),
    })
}
