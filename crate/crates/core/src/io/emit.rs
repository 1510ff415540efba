use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::pipeline::{ComparisonTable, MeanStd};
use crate::series::IndexRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidConfig(format!(
                "unknown format `{other}` (expected json or csv)"
            ))),
        }
    }
}

const CSV_HEADER: [&str; 12] = [
    "spec", "model", "mode", "target", "members", "seed", "mse", "mae", "rmse", "mse_std",
    "mae_std", "rmse_std",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

/// Pretty JSON with a trailing newline; key order follows the struct layout.
pub fn write_json<T: Serialize>(value: &T, out: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// One row per (spec, seed) and one `mean` row per spec carrying the
/// standard deviations.
pub fn write_report(
    table: &ComparisonTable,
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<()> {
    if format == ReportFormat::Json {
        return write_json(table, out);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for c in &table.columns {
        let members = c.members.join(" ");
        let lead = [
            c.name.clone(),
            c.model.as_str().to_string(),
            c.mode.as_str().to_string(),
            c.target.clone(),
            members,
        ];
        for r in &c.runs {
            let mut row = lead.to_vec();
            row.push(r.seed.to_string());
            row.extend([r.metrics.mse, r.metrics.mae, r.metrics.rmse].map(|v| v.to_string()));
            row.extend(["", "", ""].map(String::from));
            w.write_record(&row).map_err(csv_err)?;
        }
        let a = &c.aggregate;
        let mut row = lead.to_vec();
        row.push("mean".into());
        let parts: [MeanStd; 3] = [a.mse, a.mae, a.rmse];
        row.extend(parts.iter().map(|m| m.mean.to_string()));
        row.extend(parts.iter().map(|m| m.std.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_report(table: &ComparisonTable, format: ReportFormat, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_report(table, format, w))
}

/// Writes `t,truth,<model>...` for positions `window` of the aligned series.
pub fn write_forecast_trace(
    t: &[usize],
    truth: &[f64],
    models: &[(String, Vec<f64>)],
    window: IndexRange,
    out: &mut dyn Write,
) -> Result<()> {
    let n = truth.len();
    if t.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: t.len(),
        });
    }
    if let Some((_, p)) = models.iter().find(|(_, p)| p.len() != n) {
        return Err(Error::LengthMismatch {
            left: n,
            right: p.len(),
        });
    }
    if window.is_empty() || window.end > n {
        return Err(Error::WindowTooLarge {
            window: window.end,
            range_len: n,
        });
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "truth".to_string()];
    header.extend(models.iter().map(|(name, _)| name.clone()));
    w.write_record(&header).map_err(csv_err)?;
    for i in window.start..window.end {
        let mut row = vec![t[i].to_string(), truth[i].to_string()];
        row.extend(models.iter().map(|(_, p)| p[i].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_forecast_trace(
    t: &[usize],
    truth: &[f64],
    models: &[(String, Vec<f64>)],
    window: IndexRange,
    path: &Path,
) -> Result<()> {
    write_atomic(path, |w| write_forecast_trace(t, truth, models, window, w))
}
