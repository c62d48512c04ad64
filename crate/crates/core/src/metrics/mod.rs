//! Confusion matrix and the classification metrics derived from it.
//!
//! All percentages are in `[0, 100]`. A metric whose denominator is zero is
//! reported as `None` (undefined) rather than coerced to zero.

mod auc;
mod report;

use serde::Serialize;

use crate::error::{Error, Result};

pub use auc::{binary_auc, roc_auc, AucMode, AucResult};
pub use report::{default_positive_class, MetricsReport};

/// `counts[t][p]` = samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|row| row.len() != n) {
            return Err(Error::dim("confusion counts must be square"));
        }
        Ok(Self { counts })
    }

    /// Tallies paired true/predicted labels.
    pub fn from_labels(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = Self::zeros(num_classes);
        for (row, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
            let label = t.max(p);
            if label >= num_classes {
                return Err(Error::Label {
                    row,
                    label,
                    num_classes,
                });
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|c| self.counts[c][c]).sum()
    }

    /// Number of samples whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Number of samples predicted as `c`.
    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

/// Shorthand for [`ConfusionMatrix::from_labels`].
pub fn confusion(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_labels(truth, predicted, num_classes)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// `100 · trace / total`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.trace(), cm.total()).ok_or_else(|| Error::UndefinedMetric("accuracy of an empty matrix".into()))
}

/// Unweighted mean over the classes where the per-class value is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAverage {
    pub value: f64,
    /// Classes left out because their value is undefined.
    pub excluded: Vec<usize>,
}

fn macro_mean(values: &[Option<f64>]) -> Option<MacroAverage> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return None;
    }
    Some(MacroAverage {
        value: defined.iter().sum::<f64>() / defined.len() as f64,
        excluded: values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(c, _)| c)
            .collect(),
    })
}

fn per_class_recall(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.num_classes())
        .map(|c| ratio(cm.get(c, c), cm.support(c)))
        .collect()
}

fn per_class_precision(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.num_classes())
        .map(|c| ratio(cm.get(c, c), cm.predicted(c)))
        .collect()
}

/// Mean per-class recall. Classes without true samples are excluded and listed.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<MacroAverage> {
    macro_mean(&per_class_recall(cm))
        .ok_or_else(|| Error::UndefinedMetric("balanced accuracy with no true samples".into()))
}

/// Per-class values with their macro and support-weighted averages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAverages {
    #[serde(serialize_with = "report::pct_vec")]
    pub per_class: Vec<Option<f64>>,
    #[serde(rename = "macro", serialize_with = "report::pct_opt")]
    pub macro_avg: Option<f64>,
    #[serde(serialize_with = "report::pct_opt")]
    pub weighted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionRecall {
    pub precision: ClassAverages,
    pub recall: ClassAverages,
}

/// Precision and recall per class, macro-averaged and support-weighted.
///
/// A class that is never predicted has undefined precision; it is excluded
/// from both precision averages. Weighted recall reduces to
/// `100 · trace / total`, i.e. it equals accuracy.
pub fn precision_recall(cm: &ConfusionMatrix) -> PrecisionRecall {
    let precision = per_class_precision(cm);
    let recall = per_class_recall(cm);

    let (mut num, mut den) = (0.0, 0u64);
    for (c, p) in precision.iter().enumerate() {
        if let Some(p) = p {
            num += cm.support(c) as f64 * p;
            den += cm.support(c);
        }
    }
    let weighted_precision = (den > 0).then(|| num / den as f64);

    PrecisionRecall {
        precision: ClassAverages {
            macro_avg: macro_mean(&precision).map(|m| m.value),
            weighted: weighted_precision,
            per_class: precision,
        },
        recall: ClassAverages {
            macro_avg: macro_mean(&recall).map(|m| m.value),
            weighted: ratio(cm.trace(), cm.total()),
            per_class: recall,
        },
    }
}

/// `(sensitivity, specificity)` of a 2×2 matrix for the given positive class.
pub fn sensitivity_specificity(cm: &ConfusionMatrix, positive: usize) -> Result<(Option<f64>, Option<f64>)> {
    if cm.num_classes() != 2 || positive > 1 {
        return Err(Error::dim(format!(
            "sensitivity/specificity need a 2×2 matrix and positive class 0 or 1, got {0}×{0} and {positive}",
            cm.num_classes()
        )));
    }
    let negative = 1 - positive;
    let tp = cm.get(positive, positive);
    let fn_ = cm.get(positive, negative);
    let tn = cm.get(negative, negative);
    let fp = cm.get(negative, positive);
    Ok((ratio(tp, tp + fn_), ratio(tn, tn + fp)))
}
