//! Report emission: CSV summary rows and full-fidelity JSON.
//!
//! CSV carries the flat per-run summary with a fixed column order; the
//! per-category breakdown is preserved only in JSON. Numbers print in
//! Rust's shortest round-trip form, so parsing them back is lossless.

use std::path::Path;

use crate::ioutil;

use super::{EvalError, EvalReport, NUM_EXITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: &str = "name,seed,tolerance,snr_db,samples,accuracy,backbone_accuracy,\
mean_flops,backbone_total_flops,exit_rate_overall,exit_b1,exit_b2,exit_b3,exit_b4,exit_backbone";

fn csv_row(r: &EvalReport) -> String {
    let snr = r.snr_db.map(|v| v.to_string()).unwrap_or_default();
    let mut row = format!(
        "{},{},{},{snr},{},{},{},{},{},{}",
        r.name,
        r.seed,
        r.tolerance,
        r.samples,
        r.accuracy,
        r.backbone_accuracy,
        r.mean_flops,
        r.backbone_total_flops,
        r.overall_exit_rate()
    );
    for e in 0..NUM_EXITS {
        row.push_str(&format!(",{}", r.exit_rate(e)));
    }
    row
}

/// Serializes reports to a string in the requested format.
pub fn render_reports(reports: &[EvalReport], format: ReportFormat) -> Result<String, EvalError> {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in reports {
                out.push_str(&csv_row(r));
                out.push('\n');
            }
            Ok(out)
        }
        ReportFormat::Json => Ok(serde_json::to_string_pretty(reports)?),
    }
}

/// Writes reports atomically to `path`.
pub fn emit_report(
    reports: &[EvalReport],
    format: ReportFormat,
    path: &Path,
) -> Result<(), EvalError> {
    let text = render_reports(reports, format)?;
    ioutil::write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Parses reports emitted as JSON.
pub fn parse_json_reports(text: &str) -> Result<Vec<EvalReport>, EvalError> {
    Ok(serde_json::from_str(text)?)
}
