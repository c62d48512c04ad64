use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

use super::{
    accuracy, balanced_accuracy, precision_recall, roc_auc, sensitivity_specificity, AucMode, ClassAverages,
    ConfusionMatrix,
};
use crate::error::{Error, Result};

fn two_decimals(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.2}")).expect("formatted float is valid JSON")
}

pub(super) fn pct<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    two_decimals(*v).serialize(s)
}

pub(super) fn pct_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => two_decimals(*v).serialize(s),
        None => s.serialize_none(),
    }
}

pub(super) fn pct_vec<S: Serializer>(v: &[Option<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&x.map(two_decimals))?;
    }
    seq.end()
}

/// Every reported metric for one evaluation pass.
///
/// Serialized with `serde_json`, percentages carry exactly two decimals and
/// undefined values are `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub num_samples: u64,
    #[serde(serialize_with = "pct")]
    pub accuracy: f64,
    #[serde(serialize_with = "pct_opt")]
    pub balanced_accuracy: Option<f64>,
    pub balanced_accuracy_excluded: Vec<usize>,
    #[serde(serialize_with = "pct_opt")]
    pub auc: Option<f64>,
    pub auc_skipped: Vec<usize>,
    /// Binary only.
    pub positive_class: Option<usize>,
    #[serde(serialize_with = "pct_opt")]
    pub sensitivity: Option<f64>,
    #[serde(serialize_with = "pct_opt")]
    pub specificity: Option<f64>,
    pub precision: ClassAverages,
    pub recall: ClassAverages,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    /// Builds the report from pooled labels, predictions and row-major
    /// probabilities `probs[n × num_classes]`.
    ///
    /// `positive` picks the sensitivity class for binary problems.
    pub fn compute(
        truth: &[usize],
        predicted: &[usize],
        probs: &[f64],
        num_classes: usize,
        positive: usize,
    ) -> Result<Self> {
        let cm = ConfusionMatrix::from_labels(truth, predicted, num_classes)?;
        let accuracy = accuracy(&cm)?;
        let balanced = balanced_accuracy(&cm)?;
        let pr = precision_recall(&cm);

        let binary = num_classes == 2;
        let mode = if binary {
            AucMode::Binary { positive }
        } else {
            AucMode::MacroOneVsRest
        };
        let (auc, auc_skipped) = match roc_auc(probs, num_classes, truth, mode) {
            Ok(r) => (Some(r.value), r.skipped),
            Err(Error::UndefinedMetric(_)) => (None, (0..num_classes).collect()),
            Err(e) => return Err(e),
        };
        let (sensitivity, specificity) = if binary {
            sensitivity_specificity(&cm, positive)?
        } else {
            (None, None)
        };

        Ok(Self {
            num_samples: cm.total(),
            accuracy,
            balanced_accuracy: Some(balanced.value),
            balanced_accuracy_excluded: balanced.excluded,
            auc,
            auc_skipped,
            positive_class: binary.then_some(positive),
            sensitivity,
            specificity,
            precision: pr.precision,
            recall: pr.recall,
            confusion: cm,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Index of the class treated as positive: the first name mentioning
/// "malignant" or "cancer", else class 1.
pub fn default_positive_class(class_names: &[String]) -> usize {
    class_names
        .iter()
        .position(|n| {
            let n = n.to_ascii_lowercase();
            n.contains("malignant") || n.contains("cancer")
        })
        .unwrap_or(1)
}
