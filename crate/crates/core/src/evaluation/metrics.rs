use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fneg: usize,
}

/// Accuracy, precision, recall and F1 for the positive (MW) class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Confusion,
    /// A 0/0 ratio was reported as 0.
    pub undefined: bool,
}

pub fn confusion_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Invalid("metrics need at least one sample".into()));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fneg: 0,
    };
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == 1, p == 1) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fneg += 1,
        }
    }
    let mut undefined = false;
    let mut ratio = |a: usize, b: usize| {
        if b == 0 {
            undefined = true;
            0.0
        } else {
            a as f64 / b as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fneg);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fneg);
    Ok(ConfusionMetrics {
        accuracy: (c.tp + c.tn) as f64 / y_true.len() as f64,
        precision,
        recall,
        f1,
        counts: c,
        undefined,
    })
}

/// Mann-Whitney AUC via midranks: the fraction of (positive, negative) pairs
/// ordered correctly, ties counting one half.
pub fn auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("AUC scores contain NaN".into()));
    }
    let n_pos = y_true.iter().filter(|&&l| l == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y_true[k] == 1 {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Expected F1 of a random predictor that flags positives at the prevalence
/// rate, which is the prevalence itself.
pub fn chance_f1(prevalence: f64) -> Result<f64> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::Invalid(format!("prevalence must be in (0, 1), got {prevalence}")));
    }
    Ok(prevalence)
}

/// `(actual - chance) / (perfect - chance)`; negative below chance.
pub fn above_chance(actual: f64, chance: f64, perfect: f64) -> Result<f64> {
    if !(chance < perfect) {
        return Err(Error::Invalid(format!("chance {chance} must be below perfect {perfect}")));
    }
    Ok((actual - chance) / (perfect - chance))
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}
