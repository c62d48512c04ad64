use crate::error::{Error, Result};

/// Area under the ROC curve as a fraction, by the rank-sum statistic.
///
/// Equals `(#{score_pos > score_neg} + ½·#ties) / (P·N)` over all
/// positive/negative pairs, computed in `O(n log n)` with mid-ranks.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::dim(format!(
            "{} scores vs {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Contract("AUC scores must be finite".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs positives and negatives, got {n_pos} and {n_neg}"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based mid-ranks of the positives, kept doubled to stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, midrank = (start + 1 + end) / 2
        let twice_mid = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&i| positive[i]).count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        start = end;
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    // U = R − P(P+1)/2, doubled
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AucMode {
    /// Score is the probability of `positive`.
    Binary { positive: usize },
    /// Unweighted mean of one-vs-rest AUCs.
    MacroOneVsRest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucResult {
    /// Percent.
    pub value: f64,
    /// Classes skipped for lacking positives or negatives (one-vs-rest only).
    pub skipped: Vec<usize>,
}

/// ROC AUC in percent from row-major `probs[n × num_classes]`.
pub fn roc_auc(probs: &[f64], num_classes: usize, labels: &[usize], mode: AucMode) -> Result<AucResult> {
    if num_classes < 2 || probs.len() != labels.len() * num_classes {
        return Err(Error::dim(format!(
            "{} probabilities for {} samples × {num_classes} classes",
            probs.len(),
            labels.len()
        )));
    }
    for (row, (p, &label)) in probs.chunks(num_classes).zip(labels).enumerate() {
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-4 {
            return Err(Error::Contract(format!(
                "probabilities of row {row} sum to {total}"
            )));
        }
        if label >= num_classes {
            return Err(Error::Label {
                row,
                label,
                num_classes,
            });
        }
    }
    let column = |c: usize| -> Vec<f64> { probs.chunks(num_classes).map(|p| p[c]).collect() };
    let is_class = |c: usize| -> Vec<bool> { labels.iter().map(|&l| l == c).collect() };

    match mode {
        AucMode::Binary { positive } => {
            if positive >= num_classes {
                return Err(Error::dim(format!("positive class {positive} out of range")));
            }
            let value = 100.0 * binary_auc(&column(positive), &is_class(positive))?;
            Ok(AucResult {
                value,
                skipped: Vec::new(),
            })
        }
        AucMode::MacroOneVsRest => {
            let mut values = Vec::new();
            let mut skipped = Vec::new();
            for c in 0..num_classes {
                match binary_auc(&column(c), &is_class(c)) {
                    Ok(a) => values.push(a),
                    Err(Error::UndefinedMetric(_)) => skipped.push(c),
                    Err(e) => return Err(e),
                }
            }
            if values.is_empty() {
                return Err(Error::UndefinedMetric(
                    "no class has both positives and negatives".into(),
                ));
            }
            Ok(AucResult {
                value: 100.0 * values.iter().sum::<f64>() / values.len() as f64,
                skipped,
            })
        }
    }
}
