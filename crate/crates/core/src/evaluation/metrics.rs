//! Micro and per-label classification metrics and source coverage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::labels::{ConclusionLabel, Prediction};
use crate::pipeline::PredictionRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_label: BTreeMap<ConclusionLabel, LabelCounts>,
    pub n_total: usize,
    pub n_unparsed: usize,
}

impl ConfusionCounts {
    pub fn get(&self, label: ConclusionLabel) -> LabelCounts {
        self.per_label.get(&label).copied().unwrap_or_default()
    }

    fn sum(&self, f: impl Fn(&LabelCounts) -> usize) -> usize {
        self.per_label.values().map(f).sum()
    }

    pub fn total_tp(&self) -> usize {
        self.sum(|c| c.tp)
    }

    pub fn total_fp(&self) -> usize {
        self.sum(|c| c.fp)
    }

    pub fn total_fn(&self) -> usize {
        self.sum(|c| c.fn_)
    }
}

/// Counts outcomes. An Unparsed prediction is a false negative for the gold
/// label and never a false positive.
pub fn confusion(pairs: &[(Prediction, ConclusionLabel)]) -> Result<ConfusionCounts, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut per_label: BTreeMap<ConclusionLabel, LabelCounts> =
        ConclusionLabel::ALL.iter().map(|&l| (l, LabelCounts::default())).collect();
    let mut n_unparsed = 0;
    for &(pred, gold) in pairs {
        match pred.label() {
            Some(p) if p == gold => per_label.entry(gold).or_default().tp += 1,
            Some(p) => {
                per_label.entry(p).or_default().fp += 1;
                per_label.entry(gold).or_default().fn_ += 1;
            }
            None => {
                per_label.entry(gold).or_default().fn_ += 1;
                n_unparsed += 1;
            }
        }
    }
    Ok(ConfusionCounts {
        per_label,
        n_total: pairs.len(),
        n_unparsed,
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

pub fn micro_metrics(c: &ConfusionCounts) -> MicroMetrics {
    let tp = c.total_tp();
    let precision = ratio(tp, tp + c.total_fp());
    let recall = ratio(tp, tp + c.total_fn());
    MicroMetrics {
        precision,
        recall,
        f1: harmonic(precision, recall),
        accuracy: ratio(tp, c.n_total),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One-vs-rest metrics for each label; 0/0 evaluates to 0.
pub fn per_label_metrics(c: &ConfusionCounts) -> BTreeMap<ConclusionLabel, LabelMetrics> {
    ConclusionLabel::ALL
        .iter()
        .map(|&l| {
            let k = c.get(l);
            let precision = ratio(k.tp, k.tp + k.fp);
            let recall = ratio(k.tp, k.tp + k.fn_);
            (
                l,
                LabelMetrics {
                    f1: harmonic(precision, recall),
                    precision,
                    recall,
                },
            )
        })
        .collect()
}

pub fn coverage_rate(record: &PredictionRecord) -> f64 {
    record.coverage()
}

pub fn mean_coverage(records: &[PredictionRecord]) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().map(coverage_rate).sum::<f64>() / records.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub per_label: BTreeMap<ConclusionLabel, LabelMetrics>,
    pub mean_coverage: f64,
    /// Records with a gold label.
    pub n: usize,
    pub n_unparsed: usize,
    pub n_errors: usize,
}

/// Metrics over the records that carry a gold label. Error-state records
/// count as Unparsed; coverage averages over every record.
pub fn evaluate_records(records: &[PredictionRecord]) -> Result<MetricsReport, EvalError> {
    let pairs: Vec<(Prediction, ConclusionLabel)> = records
        .iter()
        .filter_map(|r| {
            let pred = if r.is_error() { Prediction::Unparsed } else { r.predicted };
            r.gold.map(|g| (pred, g))
        })
        .collect();
    let c = confusion(&pairs)?;
    let m = micro_metrics(&c);
    Ok(MetricsReport {
        micro_precision: m.precision,
        micro_recall: m.recall,
        micro_f1: m.f1,
        accuracy: m.accuracy,
        per_label: per_label_metrics(&c),
        mean_coverage: mean_coverage(records),
        n: c.n_total,
        n_unparsed: c.n_unparsed,
        n_errors: records.iter().filter(|r| r.is_error()).count(),
    })
}
