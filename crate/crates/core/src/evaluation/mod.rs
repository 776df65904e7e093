//! Classification metrics, coverage, annotator agreement, and reports.

pub mod agreement;
pub mod metrics;
pub mod report;

use thiserror::Error;

pub use agreement::{
    agreement_stats, fleiss_kappa, levenshtein, pairwise_cosine_agreement, proportion_changed, AgreementStats,
};
pub use metrics::{
    confusion, coverage_rate, evaluate_records, mean_coverage, micro_metrics, per_label_metrics, ConfusionCounts,
    LabelCounts, LabelMetrics, MetricsReport, MicroMetrics,
};
pub use report::{emit_report, markdown_table, ReportFormat, ReportRow};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("row {row} sums to {sum}, expected {expected} raters")]
    RowSum { row: usize, sum: usize, expected: usize },
    #[error("annotator {annotator} has {got} items, expected {expected}")]
    ItemCount { annotator: usize, got: usize, expected: usize },
    #[error("{0}")]
    Invalid(String),
}
