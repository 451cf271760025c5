use crate::error::{Error, Result};

/// Classification metrics for one evaluation at a fixed threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    /// Absent when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

pub const THRESHOLD: f64 = 0.5;

/// Metric names in report column order.
pub const METRIC_NAMES: [&str; 6] = ["auc", "ba", "accuracy", "f1", "precision", "recall"];

impl MetricsReport {
    pub fn compute(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        check(scores, labels)?;
        let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let recall = ratio(tp, tp + fn_);
        let specificity = ratio(tn, tn + fp);
        let precision = ratio(tp, tp + fp);
        let n_pos = tp + fn_;
        let n_neg = tn + fp;
        let balanced_accuracy = match (n_pos > 0, n_neg > 0) {
            (true, true) => (recall + specificity) / 2.0,
            (true, false) => recall,
            (false, _) => specificity,
        };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Ok(Self {
            auc: auc(scores, labels)?,
            balanced_accuracy,
            accuracy: ratio(tp + tn, scores.len()),
            f1,
            precision,
            recall,
        })
    }

    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 6] {
        [
            self.auc,
            Some(self.balanced_accuracy),
            Some(self.accuracy),
            Some(self.f1),
            Some(self.precision),
            Some(self.recall),
        ]
    }
}

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(Error::Empty("no scores to evaluate".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` for single-class input.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check(scores, labels)?;
    let mut neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| !y).map(|(&s, _)| s).collect();
    let n_pos = labels.len() - neg.len();
    if n_pos == 0 || neg.is_empty() {
        return Ok(None);
    }
    neg.sort_by(f64::total_cmp);
    // twice the pair score, so ties stay integral
    let mut doubled: u64 = 0;
    for (&s, _) in scores.iter().zip(labels).filter(|(_, &y)| y) {
        let below = neg.partition_point(|&v| v < s);
        let equal = neg.partition_point(|&v| v <= s) - below;
        doubled += 2 * below as u64 + equal as u64;
    }
    Ok(Some(doubled as f64 / (2 * n_pos * neg.len()) as f64))
}

/// Pairwise reference definition of [`auc`].
pub fn auc_brute_force(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut doubled = 0u64;
    let mut pairs = 0u64;
    for (i, &yi) in labels.iter().enumerate() {
        if !yi {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                doubled += 2;
            } else if scores[i] == scores[j] {
                doubled += 1;
            }
        }
    }
    (pairs > 0).then(|| doubled as f64 / (2 * pairs) as f64)
}

/// Mean and population standard deviation; `None` for no values.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Per-metric mean ± std over reports; AUC skips folds where it is absent.
pub fn aggregate(reports: &[MetricsReport]) -> [Option<(f64, f64)>; 6] {
    let mut out = [None; 6];
    for (m, slot) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = reports.iter().filter_map(|r| r.values()[m]).collect();
        *slot = mean_std(&vals);
    }
    out
}
