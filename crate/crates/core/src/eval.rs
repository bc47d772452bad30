//! ROC curves, AUROC, TPR − FPR threshold selection and confusion reports.
//!
//! Anomaly is the positive class throughout and a row is predicted anomalous
//! when `score >= threshold`.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Candidate range for thresholds on probability-valued scores.
pub const PROBABILITY_THRESHOLD_RANGE: (f64, f64) = (0.001, 0.999);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn at(scores: &[f64], labels: &[Label], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y.is_anomaly()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        Self::ratio(self.fp, self.fp + self.tn)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// `0.5·FNR + 0.5·FPR`; an absent class contributes 0.
    pub fn balanced_risk(&self) -> f64 {
        0.5 * Self::ratio(self.fn_, self.tp + self.fn_) + 0.5 * self.fpr()
    }
}

/// Balanced risk of the rule `score >= threshold`.
pub fn balanced_risk_at(scores: &[f64], labels: &[Label], threshold: f64) -> f64 {
    Confusion::at(scores, labels, threshold).balanced_risk()
}

fn check(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores", "NaN score"));
    }
    let pos = labels.iter().filter(|l| l.is_anomaly()).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(Error::SingleClass(Label::Inline));
    }
    if neg == 0 {
        return Err(Error::SingleClass(Label::Anomaly));
    }
    Ok((pos, neg))
}

/// Cumulative (threshold, tp, fp) at each unique score, descending.
fn sweep(scores: &[f64], labels: &[Label]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_anomaly() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

/// ROC staircase from `(0, 0)` (threshold above every score) to `(1, 1)`.
pub fn roc_points(scores: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check(scores, labels)?;
    let mut pts = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    for (t, tp, fp) in sweep(scores, labels) {
        pts.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: t,
        });
    }
    Ok(pts)
}

/// Trapezoidal area under [`roc_points`].
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let pts = roc_points(scores, labels)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum())
}

/// Threshold maximizing TPR − FPR over the unique scores. Ties go to the
/// smallest threshold.
pub fn optimal_threshold(scores: &[f64], labels: &[Label]) -> Result<f64> {
    best_threshold(scores, labels, None)
}

/// As [`optimal_threshold`], with candidates clamped into `range` first.
pub fn optimal_threshold_in(scores: &[f64], labels: &[Label], range: (f64, f64)) -> Result<f64> {
    if !(range.0 <= range.1) {
        return Err(Error::param("range", "lower bound exceeds upper bound"));
    }
    best_threshold(scores, labels, Some(range))
}

fn best_threshold(scores: &[f64], labels: &[Label], range: Option<(f64, f64)>) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let (pos, neg) = (pos as i128, neg as i128);
    // J = tp/pos − fp/neg, compared exactly as tp·neg − fp·pos
    let j_of = |tp: usize, fp: usize| tp as i128 * neg - fp as i128 * pos;

    let mut best: Option<(i128, f64)> = None;
    let mut consider = |t: f64, j: i128| match best {
        Some((bj, bt)) if j < bj || (j == bj && t >= bt) => {}
        _ => best = Some((j, t)),
    };
    match range {
        None => {
            for (t, tp, fp) in sweep(scores, labels) {
                consider(t, j_of(tp, fp));
            }
        }
        Some((lo, hi)) => {
            let mut candidates: Vec<f64> = scores.iter().map(|s| s.clamp(lo, hi)).collect();
            candidates.sort_by(f64::total_cmp);
            candidates.dedup();
            for t in candidates {
                let c = Confusion::at(scores, labels, t);
                consider(t, j_of(c.tp, c.fp));
            }
        }
    }
    Ok(best.expect("at least one candidate").1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
    pub balanced_risk: f64,
}

/// Confusion-derived metrics at `threshold`; AUROC is included only when both
/// classes are present.
pub fn report(scores: &[f64], labels: &[Label], threshold: f64) -> Result<EvaluationReport> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let c = Confusion::at(scores, labels, threshold);
    let auroc = match auroc(scores, labels) {
        Ok(a) => Some(a),
        Err(Error::SingleClass(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvaluationReport {
        threshold,
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        auroc,
        balanced_risk: c.balanced_risk(),
    })
}
