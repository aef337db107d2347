//! Table, CSV and JSON renderings of experiment results.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::DistributionStats;
use crate::error::{Error, Result};
use crate::metrics::{expected_baseline_counts, format_rounded, BaselineKind, MetricsReport, COLUMN_NAMES};
use crate::runner::{ExperimentResult, SwapComparison, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub metrics: MetricsReport,
}

/// The three expected-value baseline rows for a split. The constant
/// predictors use the closed form; the random row is averaged exactly over
/// the split's class counts.
pub fn baseline_rows(stats: &DistributionStats) -> Result<Vec<ReportRow>> {
    BaselineKind::ALL
        .iter()
        .map(|&kind| {
            let (hi, lo) = (stats.positive.max(stats.negative), stats.positive.min(stats.negative));
            Ok(ReportRow {
                name: kind.row_name().to_string(),
                metrics: expected_baseline_counts(kind, hi as u64, lo as u64)?,
            })
        })
        .collect()
}

fn result_rows(result: &ExperimentResult) -> Vec<ReportRow> {
    let mut rows = result.baselines.clone();
    if let Some(metrics) = result.metrics {
        rows.push(ReportRow {
            name: result.model_row_name(),
            metrics,
        });
    }
    rows
}

fn status(result: &ExperimentResult) -> &'static str {
    if result.complete {
        "complete"
    } else {
        "INCOMPLETE"
    }
}

pub fn render_table(rows: &[ReportRow]) -> String {
    let name_width = rows
        .iter()
        .map(|r| r.name.chars().count())
        .chain(std::iter::once("Model".len()))
        .max()
        .unwrap_or(5);
    let mut out = format!("{:<name_width$}", "Model");
    for col in COLUMN_NAMES {
        let _ = write!(out, "  {col:>11}");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{:<name_width$}", row.name);
        for value in row.metrics.display_columns() {
            let _ = write!(out, "  {value:>11}");
        }
        out.push('\n');
    }
    out
}

/// Bare rows (no experiment context) in any of the three formats.
pub fn render_rows(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Table => Ok(render_table(rows)),
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(rows)?;
            out.push('\n');
            Ok(out)
        }
        ReportFormat::Csv => csv_rows("complete", rows),
    }
}

fn csv_rows(status: &str, rows: &[ReportRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        let m = row.metrics;
        writer
            .serialize(CsvRow {
                status: status.to_string(),
                row: row.name.clone(),
                precision_macro: m.precision_macro,
                recall_macro: m.recall_macro,
                f1_macro: m.f1_macro,
                f1_micro: m.f1_micro,
                f1_weighted: m.f1_weighted,
                accuracy: m.accuracy,
                support: m.support,
                unmapped_rate: m.unmapped_rate,
                rounding: m.rounding,
            })
            .map_err(csv_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Parse {
        what: "csv report".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    status: String,
    row: String,
    precision_macro: f64,
    recall_macro: f64,
    f1_macro: f64,
    f1_micro: f64,
    f1_weighted: f64,
    accuracy: f64,
    support: u64,
    unmapped_rate: f64,
    rounding: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonReport {
    status: String,
    coverage: f64,
    split: String,
    n: usize,
    p_majority: f64,
    unmapped_rate: f64,
    truncation_rate: f64,
    rows: Vec<ReportRow>,
}

pub fn emit_report(result: &ExperimentResult, format: ReportFormat) -> Result<String> {
    let rows = result_rows(result);
    match format {
        ReportFormat::Table => {
            let mut out = String::new();
            if !result.complete {
                let done = result.records.iter().filter(|r| r.is_complete()).count();
                let _ = writeln!(
                    out,
                    "INCOMPLETE: {done}/{} documents have completions (coverage {})",
                    result.records.len(),
                    format_rounded(result.coverage, 3)
                );
            }
            let _ = writeln!(
                out,
                "split: {}  n: {}  p_majority: {}  unmapped_rate: {}  truncation_rate: {}  max_new_tokens: {}{}",
                result.split,
                result.distribution.n,
                format_rounded(result.distribution.p_majority, 3),
                format_rounded(result.unmapped_rate, 3),
                format_rounded(result.truncation_rate, 3),
                result.max_new_tokens,
                if result.options_swapped { "  options: swapped" } else { "" },
            );
            out.push_str(&render_table(&rows));
            if let Some(a) = &result.articles {
                let _ = writeln!(
                    out,
                    "articles: {} documents, {} exact matches, {} with overlap, mean jaccard {}",
                    a.documents,
                    a.exact_matches,
                    a.any_overlap,
                    format_rounded(a.mean_jaccard, 3)
                );
            }
            Ok(out)
        }
        ReportFormat::Csv => csv_rows(status(result), &rows),
        ReportFormat::Json => {
            let report = JsonReport {
                status: status(result).to_string(),
                coverage: result.coverage,
                split: result.split.to_string(),
                n: result.distribution.n,
                p_majority: result.distribution.p_majority,
                unmapped_rate: result.unmapped_rate,
                truncation_rate: result.truncation_rate,
                rows,
            };
            let mut out = serde_json::to_string_pretty(&report)?;
            out.push('\n');
            Ok(out)
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        what: "csv report".into(),
        message: e.to_string(),
    }
}

/// Reads the rows back from a CSV report.
pub fn parse_csv_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(csv_error)?;
            Ok(ReportRow {
                name: row.row,
                metrics: MetricsReport {
                    precision_macro: row.precision_macro,
                    recall_macro: row.recall_macro,
                    f1_macro: row.f1_macro,
                    f1_micro: row.f1_micro,
                    f1_weighted: row.f1_weighted,
                    accuracy: row.accuracy,
                    support: row.support,
                    unmapped_rate: row.unmapped_rate,
                    rounding: row.rounding,
                },
            })
        })
        .collect()
}

/// Reads the rows back from a JSON report.
pub fn parse_json_report(text: &str) -> Result<Vec<ReportRow>> {
    let report: JsonReport = serde_json::from_str(text)?;
    Ok(report.rows)
}

pub fn swap_summary(cmp: &SwapComparison) -> String {
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format_rounded(v, 3));
    let mut out = String::new();
    let _ = writeln!(out, "option swap ({} split)", cmp.original.split);
    let _ = writeln!(out, "macro-F1 original: {}", show(cmp.f1_macro_original));
    let _ = writeln!(out, "macro-F1 swapped:  {}", show(cmp.f1_macro_swapped));
    let _ = writeln!(out, "abs difference:    {}", show(cmp.f1_macro_abs_difference));
    let _ = writeln!(out, "accuracy abs diff: {}", show(cmp.accuracy_abs_difference));
    if !cmp.original.complete || !cmp.swapped.complete {
        out.push_str("INCOMPLETE: at least one run is missing completions\n");
    }
    out
}

pub fn sweep_table(sweep: &SweepResult) -> String {
    let mut out = format!(
        "output-length sweep; selection by macro-F1 on the {} split\n",
        sweep.split
    );
    let _ = write!(out, "{:>14}", "max_new_tokens");
    for col in COLUMN_NAMES {
        let _ = write!(out, "  {col:>11}");
    }
    let _ = writeln!(out, "  {:>8}", "unmapped");
    for row in &sweep.rows {
        let marker = if sweep.best == Some(row.max_new_tokens) { "*" } else { " " };
        let _ = write!(out, "{:>13}{marker}", row.max_new_tokens);
        match row.metrics {
            Some(m) => {
                for value in m.display_columns() {
                    let _ = write!(out, "  {value:>11}");
                }
            }
            None => {
                for _ in COLUMN_NAMES {
                    let _ = write!(out, "  {:>11}", "n/a");
                }
            }
        }
        let _ = write!(out, "  {:>8}", format_rounded(row.unmapped_rate, 3));
        if !row.complete {
            out.push_str("  INCOMPLETE");
        }
        out.push('\n');
    }
    if let Some(best) = sweep.best {
        let _ = writeln!(out, "best: {best}");
    }
    out
}
