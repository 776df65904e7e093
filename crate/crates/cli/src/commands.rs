use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use serde::Deserialize;

use urca_core::config::PipelineConfig;
use urca_core::corpus::read_dataset_lines;
use urca_core::evaluation::{evaluate_records, markdown_table, MetricsReport, ReportRow};
use urca_core::generation::OrderingKind;
use urca_core::labels::{label_from_ci, EffectEstimate, EffectKind};
use urca_core::pipeline::{write_run_log, RunManifest};
use urca_core::{EvidenceRecord, Pipeline, PredictionRecord, VariantSpec};

use crate::{CliError, CommonArgs};

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))
}

/// Parses every line, printing one diagnostic per bad line to stderr.
/// Returns the valid records and the number of invalid ones.
fn read_records(path: &Path) -> Result<(Vec<EvidenceRecord>, usize), CliError> {
    let lines = read_dataset_lines(BufReader::new(open(path)?))
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut records = Vec::new();
    let mut invalid = 0;
    for (_, result) in lines {
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                invalid += 1;
                eprintln!("{}: {e}", path.display());
            }
        }
    }
    Ok((records, invalid))
}

fn load_clean(path: &Path) -> Result<Vec<EvidenceRecord>, CliError> {
    let (records, invalid) = read_records(path)?;
    if invalid > 0 {
        return Err(CliError::Data(format!("{invalid} invalid records in {}", path.display())));
    }
    if records.is_empty() {
        return Err(CliError::Data(format!("{} contains no records", path.display())));
    }
    Ok(records)
}

pub fn validate(dataset: &Path) -> Result<(), CliError> {
    let (records, invalid) = read_records(dataset)?;
    if invalid > 0 {
        return Err(CliError::Data(format!("{invalid} invalid records")));
    }
    println!("{} records valid", records.len());
    Ok(())
}

fn base_config(common: &CommonArgs) -> Result<PipelineConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(kind) = common.ordering {
        config.ordering.kind = kind;
    }
    Ok(config)
}

fn build(config: PipelineConfig) -> Result<Pipeline, CliError> {
    Pipeline::from_config(config).map_err(|e| CliError::Usage(e.to_string()))
}

fn timestamp(common: &CommonArgs) -> Option<u64> {
    common
        .timestamp
        .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

/// Runs `variant` and writes its log to `out`.
fn execute(
    pipeline: &Pipeline,
    common: &CommonArgs,
    records: &[EvidenceRecord],
    variant: VariantSpec,
    out: &Path,
) -> Result<Vec<PredictionRecord>, CliError> {
    info!("running {variant} over {} records", records.len());
    let results = pipeline.run_dataset(records, variant, common.parallelism as usize);
    let manifest = RunManifest::new(pipeline, &common.dataset, variant, timestamp(common));
    let file = File::create(out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    write_run_log(BufWriter::new(file), &manifest, &results)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out.display())))?;
    let failed: Vec<&PredictionRecord> = results.iter().filter(|r| r.is_error()).collect();
    if !failed.is_empty() {
        eprintln!("warning: {variant}: {} of {} records failed", failed.len(), results.len());
        for r in failed {
            eprintln!("  {} / {}: {}", r.question_id, r.study_id, r.error.as_deref().unwrap_or_default());
        }
    }
    Ok(results)
}

fn metrics(results: &[PredictionRecord]) -> Result<MetricsReport, CliError> {
    evaluate_records(results).map_err(|e| CliError::Data(format!("cannot score run: {e}")))
}

pub fn run(common: &CommonArgs, variant: Option<VariantSpec>, out: &Path) -> Result<(), CliError> {
    let mut config = base_config(common)?;
    let variant = variant.unwrap_or(config.variant);
    config.variant = variant;
    let pipeline = build(config)?;
    let records = load_clean(&common.dataset)?;
    let results = execute(&pipeline, common, &records, variant, out)?;
    let m = metrics(&results)?;
    println!(
        "{variant} {} n={} f1={:.4} precision={:.4} recall={:.4} accuracy={:.4} coverage={:.4} unparsed={} errors={}",
        pipeline.model_name(),
        m.n,
        m.micro_f1,
        m.micro_precision,
        m.micro_recall,
        m.accuracy,
        m.mean_coverage,
        m.n_unparsed,
        m.n_errors
    );
    println!("run log written to {}", out.display());
    Ok(())
}

fn file_stem(variant: VariantSpec) -> String {
    variant.to_string().replace(':', "-")
}

pub fn ablate(
    common: &CommonArgs,
    variants: &[String],
    ordering_sweep: bool,
    sweep_variant: Option<VariantSpec>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let variants: Vec<VariantSpec> = variants
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(CliError::Usage))
        .collect::<Result<_, _>>()?;
    if variants.is_empty() && !ordering_sweep {
        return Err(CliError::Usage("nothing to run: pass --variants and/or --ordering-sweep".into()));
    }
    let config = base_config(common)?;
    let pipeline = build(config.clone())?;
    let records = load_clean(&common.dataset)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut report = format!("# Ablation comparison\n\nDataset: `{}`\n", common.dataset.display());
    if !variants.is_empty() {
        let mut rows = Vec::new();
        for &variant in &variants {
            let out = out_dir.join(format!("{}.jsonl", file_stem(variant)));
            let results = execute(&pipeline, common, &records, variant, &out)?;
            rows.push(ReportRow {
                label: variant.to_string(),
                model: pipeline.model_name().to_string(),
                metrics: metrics(&results)?,
            });
        }
        report.push_str("\n## Variants\n\n");
        report.push_str(&markdown_table(&rows, "Variant"));
    }
    if ordering_sweep {
        let variant = sweep_variant.unwrap_or(config.variant);
        let mut rows = Vec::new();
        for kind in OrderingKind::ALL {
            let mut cfg = config.clone();
            cfg.ordering.kind = kind;
            let pipeline = build(cfg)?;
            let out = out_dir.join(format!("{}-ordering-{kind}.jsonl", file_stem(variant)));
            let results = execute(&pipeline, common, &records, variant, &out)?;
            rows.push(ReportRow {
                label: kind.display_name().to_string(),
                model: pipeline.model_name().to_string(),
                metrics: metrics(&results)?,
            });
        }
        report.push_str(&format!("\n## Ordering strategies ({variant})\n\n"));
        report.push_str(&markdown_table(&rows, "Ordering"));
    }
    let table = out_dir.join("comparison.md");
    std::fs::write(&table, &report).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", table.display())))?;
    print!("{report}");
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ForestRow {
    study_id: String,
    point: f64,
    ci_low: f64,
    ci_high: f64,
    effect_kind: String,
    #[serde(default)]
    direction_flipped: Option<bool>,
}

impl ForestRow {
    fn estimate(&self) -> Result<EffectEstimate, String> {
        let kind: EffectKind = self.effect_kind.parse().map_err(|e| format!("{e}"))?;
        Ok(EffectEstimate {
            direction_flipped: self.direction_flipped.unwrap_or(false),
            ..EffectEstimate::new(self.point, self.ci_low, self.ci_high, kind)
        })
    }
}

pub fn label(csv_path: &Path) -> Result<(), CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(csv_path)?);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut malformed = 0;
    for (i, row) in reader.deserialize::<ForestRow>().enumerate() {
        let line = i + 2;
        let labelled = row
            .map_err(|e| e.to_string())
            .and_then(|r| r.estimate().and_then(|est| label_from_ci(&est).map_err(|e| e.to_string())).map(|l| (r.study_id, l)));
        match labelled {
            Ok((study, l)) => {
                let _ = writeln!(out, "{study} {l}");
            }
            Err(e) => {
                malformed += 1;
                eprintln!("{}:{line}: {e}", csv_path.display());
            }
        }
    }
    if malformed > 0 {
        return Err(CliError::Data(format!("{malformed} malformed rows")));
    }
    Ok(())
}
