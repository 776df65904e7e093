//! Deterministic JSON, CSV, and Markdown metric reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use super::metrics::{evaluate_records, MetricsReport};
use super::EvalError;
use crate::pipeline::PredictionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}; expected json, csv or markdown")),
        }
    }
}

/// A labelled metrics row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub model: String,
    pub metrics: MetricsReport,
}

pub const CSV_HEADER: &str = "variant,model,f1,precision,recall,accuracy,coverage,n,unparsed";

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Groups records by (variant, model), sorted lexicographically.
fn rows(records: &[PredictionRecord]) -> Result<Vec<ReportRow>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut groups: BTreeMap<(String, String), Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.variant.to_string(), r.model.clone()))
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|((label, model), recs)| {
            Ok(ReportRow {
                label,
                model,
                metrics: evaluate_records(&recs)?,
            })
        })
        .collect()
}

fn json_row(row: &ReportRow) -> Value {
    let m = &row.metrics;
    let per_label: serde_json::Map<String, Value> = m
        .per_label
        .iter()
        .map(|(l, v)| {
            (
                l.as_str().to_string(),
                json!({"f1": round4(v.f1), "precision": round4(v.precision), "recall": round4(v.recall)}),
            )
        })
        .collect();
    json!({
        "variant": row.label,
        "model": row.model,
        "f1": round4(m.micro_f1),
        "precision": round4(m.micro_precision),
        "recall": round4(m.micro_recall),
        "accuracy": round4(m.accuracy),
        "coverage": round4(m.mean_coverage),
        "n": m.n,
        "unparsed": m.n_unparsed,
        "errors": m.n_errors,
        "per_label": per_label,
    })
}

/// Markdown grid with one line per row; `first_header` names the label column.
pub fn markdown_table(rows: &[ReportRow], first_header: &str) -> String {
    let mut out = format!(
        "| {first_header} | Model | F1 | Precision | Recall | Accuracy | Coverage | n | Unparsed |\n\
         |---|---|---:|---:|---:|---:|---:|---:|---:|\n"
    );
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.label,
            r.model,
            f4(m.micro_f1),
            f4(m.micro_precision),
            f4(m.micro_recall),
            f4(m.accuracy),
            f4(m.mean_coverage),
            m.n,
            m.n_unparsed
        );
    }
    out
}

pub fn emit_report(records: &[PredictionRecord], format: ReportFormat) -> Result<String, EvalError> {
    let rows = rows(records)?;
    Ok(match format {
        ReportFormat::Json => {
            let v: Vec<Value> = rows.iter().map(json_row).collect();
            let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = format!("{CSV_HEADER}\n");
            for r in &rows {
                let m = &r.metrics;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.label,
                    r.model,
                    f4(m.micro_f1),
                    f4(m.micro_precision),
                    f4(m.micro_recall),
                    f4(m.accuracy),
                    f4(m.mean_coverage),
                    m.n,
                    m.n_unparsed
                );
            }
            out
        }
        ReportFormat::Markdown => markdown_table(&rows, "Variant"),
    })
}
