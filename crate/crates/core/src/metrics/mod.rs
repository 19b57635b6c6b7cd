//! Binary classification metrics with ABNORMAL as the positive class.
//!
//! Degenerate denominators resolve to 0: precision with no positive
//! predictions, recall with no positive labels, F1 when P + R = 0, and
//! kappa when chance agreement is total.

mod evaluate;
mod report;

use serde::{Deserialize, Serialize};

pub use evaluate::{evaluate, report_from_scores, score_images, EvalOptions, EvalReport, ImageScore, Level};
pub use report::{compare_report, ComparisonReport};

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Decision threshold on the abnormality probability (inclusive).
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, rhs: Self) -> Self {
        ConfusionMatrix {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            tn: self.tn + rhs.tn,
            fn_: self.fn_ + rhs.fn_,
        }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), |a, b| a + b)
    }
}

/// Tally predictions against labels (`true` = abnormal).
pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::contract("confusion matrix of empty input"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        cm.record(p, l);
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// (accuracy, precision, recall, f1)
pub fn metric_bundle(cm: &ConfusionMatrix) -> (f64, f64, f64, f64) {
    let accuracy = ratio(cm.tp + cm.tn, cm.total());
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    (accuracy, precision, recall, f1_score(precision, recall))
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn cohens_kappa(cm: &ConfusionMatrix) -> f64 {
    let n = cm.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let observed = (tp + tn) / n;
    let expected = ((tp + fp) * (tp + fn_) + (tn + fn_) * (tn + fp)) / (n * n);
    if expected == 1.0 {
        0.0
    } else {
        (observed - expected) / (1.0 - expected)
    }
}

/// The five reported metrics plus the counts they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub kappa: f64,
    pub confusion: ConfusionMatrix,
}

impl Metrics {
    pub fn from_confusion(cm: ConfusionMatrix) -> Self {
        let (accuracy, precision, recall, f1) = metric_bundle(&cm);
        Metrics {
            accuracy,
            precision,
            recall,
            f1,
            kappa: cohens_kappa(&cm),
            confusion: cm,
        }
    }
}

/// Mean of the view probabilities and the resulting study call.
pub fn aggregate_study(image_probabilities: &[f64], threshold: f64) -> Result<(f64, Label)> {
    if image_probabilities.is_empty() {
        return Err(Error::contract("study has no image probabilities"));
    }
    if let Some(bad) = image_probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::contract(format!("probability {bad} outside [0, 1]")));
    }
    let mean = image_probabilities.iter().sum::<f64>() / image_probabilities.len() as f64;
    Ok((mean, predict_label(mean, threshold)))
}

pub fn predict_label(probability: f64, threshold: f64) -> Label {
    Label::from_abnormal(probability >= threshold)
}
