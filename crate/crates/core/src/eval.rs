//! Support-recovery scoring against a known set of relevant lags.

use alloc::collections::BTreeSet;

use crate::datagen::LagLabel;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SupportMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of the recovered columns against `truth`.
///
/// `labels[j]` names column `j`. An empty recovery scores precision 0; an
/// empty truth scores recall 0 (both empty counts as a perfect match).
pub fn support_metrics(
    recovered: &BTreeSet<usize>,
    truth: &BTreeSet<LagLabel>,
    labels: &[LagLabel],
) -> SupportMetrics {
    if recovered.is_empty() && truth.is_empty() {
        return SupportMetrics {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let hits = recovered
        .iter()
        .filter(|&&j| labels.get(j).is_some_and(|l| truth.contains(l)))
        .count() as f64;
    let precision = if recovered.is_empty() {
        0.0
    } else {
        hits / recovered.len() as f64
    };
    let recall = if truth.is_empty() {
        0.0
    } else {
        hits / truth.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    SupportMetrics {
        precision,
        recall,
        f1,
    }
}
