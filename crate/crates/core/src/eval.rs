//! Precision/recall/F1 metrics and the stratified cross-validation
//! protocol. Phishing (label 1) is the positive class throughout.

use crate::corpus::{stratified_kfold, Dataset, LABEL_PHISH};
use crate::error::{Error, Result};

/// Confusion counts and the derived metrics. The 0/0 cases resolve to 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        if total == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        }
    }
}

/// Scores binary predictions against labels.
pub fn score(predictions: &[u8], labels: &[u8]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::ShapeMismatch("empty prediction list".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fn_ += 1,
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "labels must be binary, got prediction {p} / label {y}"
                )))
            }
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

/// Unweighted mean of per-fold metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-fold metrics, their unweighted mean, and the pooled-prediction
/// metrics over all folds (the mean is what gets reported by default).
#[derive(Clone, Debug)]
pub struct CvReport {
    pub per_fold: Vec<Metrics>,
    pub mean: MeanMetrics,
    pub pooled: Metrics,
}

/// Stratified k-fold cross-validation. `fit_predict(train, test, fold)`
/// trains on `train` and returns one binary prediction per `test` email;
/// training errors come back with the fold index attached.
pub fn cross_validate<F>(
    dataset: &Dataset,
    k: usize,
    seed: u64,
    mut fit_predict: F,
) -> Result<CvReport>
where
    F: FnMut(&Dataset, &Dataset, usize) -> Result<Vec<u8>>,
{
    dataset.require_labels()?;
    let folds = stratified_kfold(dataset, k, seed)?;

    let mut per_fold = Vec::with_capacity(k);
    let mut pooled_preds = Vec::new();
    let mut pooled_labels = Vec::new();
    for fold in 0..k {
        let (train_idx, test_idx) = folds.split_indices(dataset, fold);
        let train = dataset.subset(&train_idx);
        let test = dataset.subset(&test_idx);
        let preds = fit_predict(&train, &test, fold).map_err(|e| e.in_fold(fold))?;
        let labels: Vec<u8> = test.emails.iter().map(|e| e.label.unwrap()).collect();
        let metrics = score(&preds, &labels).map_err(|e| e.in_fold(fold))?;
        per_fold.push(metrics);
        pooled_preds.extend(preds);
        pooled_labels.extend(labels);
    }

    let n = per_fold.len() as f64;
    let mean = MeanMetrics {
        precision: per_fold.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: per_fold.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: per_fold.iter().map(|m| m.f1).sum::<f64>() / n,
    };
    let pooled = score(&pooled_preds, &pooled_labels)?;
    Ok(CvReport {
        per_fold,
        mean,
        pooled,
    })
}

/// Positive-class share of a labeled dataset, used for sanity logging.
pub fn phishing_fraction(dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let phish = dataset
        .emails
        .iter()
        .filter(|e| e.label == Some(LABEL_PHISH))
        .count();
    phish as f64 / dataset.len() as f64
}
