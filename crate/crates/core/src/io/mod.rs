//! File formats: panel CSV, run configuration, reports and forecast traces.

mod config;
mod emit;
mod panel;

use std::io::{BufWriter, Write};
use std::path::Path;

pub use config::{DataSource, RunConfig, TraceSpec};
pub use emit::{
    emit_forecast_trace, emit_report, write_forecast_trace, write_json, write_report, ReportFormat,
};
pub use panel::{ingest, read_panel, save_panel, write_panel, FillPolicy, MAX_INTERPOLATED_GAP};

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed write never leaves a partial file at `path`.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut dyn Write) -> crate::Result<()>,
) -> crate::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Reads a panel from CSV or generates it from the scenario, per `config`.
pub fn load_panel(config: &RunConfig) -> crate::Result<crate::series::FlowPanel> {
    match &config.data {
        DataSource::Scenario => crate::synth::generate(&config.scenario),
        DataSource::Csv { path, fill } => ingest(path, *fill),
    }
}
