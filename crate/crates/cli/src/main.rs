use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmaflow::io::{self as dio, FillPolicy, ReportFormat, RunConfig};
use dmaflow::pipeline::{self, table_from_reports, MemberSource};
use dmaflow::series::{FlowPanel, IndexRange};
use dmaflow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dmaflow",
    version,
    about = "Zone consumption forecasting with correlated zones"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed (generate) or the experiment seeds (others)
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel CSV from the scenario settings
    Generate(Common),
    /// Print the correlation matrix and correlation sets of a panel
    Correlate {
        /// Panel CSV; the configured data source when omitted
        panel: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Half-open step range `start:end`; the training interval by default
        #[arg(long)]
        range: Option<String>,
        /// Correlation threshold
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Run the configured experiment over all seeds
    Run {
        #[command(flatten)]
        common: Common,
        /// Report format: json or csv
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Run every listed experiment and print a comparison table
    Compare {
        #[command(flatten)]
        common: Common,
        /// Report format: json or csv
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Export a one-day window of test forecasts as CSV
    Trace(Common),
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

/// Writes to `out` atomically, or to standard output.
fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => dio::write_atomic(p, write),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn parse_range(s: &str, len: usize) -> Result<IndexRange> {
    let bad = || Error::InvalidConfig(format!("range `{s}` must look like start:end"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let start: usize = a.trim().parse().map_err(|_| bad())?;
    let end: usize = b.trim().parse().map_err(|_| bad())?;
    if start >= end || end > len {
        return Err(Error::InvalidConfig(format!(
            "range {start}:{end} is empty or exceeds the panel length {len}"
        )));
    }
    Ok(IndexRange::new(start, end))
}

fn correlate(
    panel: Option<&Path>,
    common: &Common,
    range: Option<&str>,
    theta: Option<f64>,
) -> Result<()> {
    let cfg = load_config(common)?;
    let panel: FlowPanel = match panel {
        Some(p) => dio::ingest(p, FillPolicy::Error)?,
        None => dio::load_panel(&cfg)?,
    };
    let range = match range {
        Some(r) => parse_range(r, panel.len())?,
        None => pipeline::split(&panel, &cfg.experiment.split)
            .map(|s| s.train)
            .unwrap_or(IndexRange::new(0, panel.len())),
    };
    let theta = theta.unwrap_or(match cfg.experiment.members {
        MemberSource::Derived { theta } => theta,
        MemberSource::Explicit(_) => 0.95,
    });
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidConfig(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let summary = pipeline::correlation_summary(&panel, range, theta)?;
    print!("{}", summary.render());
    if let Some(out) = &common.out {
        dio::write_atomic(out, |w| dio::write_json(&summary, w))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.scenario.seed = seed;
            }
            let panel = dmaflow::synth::generate(&cfg.scenario)?;
            emit(common.out.as_deref(), |w| dio::write_panel(&panel, w))
        }
        Command::Correlate {
            panel,
            common,
            range,
            theta,
        } => correlate(panel.as_deref(), &common, range.as_deref(), theta),
        Command::Run { common, format } => {
            let format: ReportFormat = format.parse()?;
            let cfg = load_config(&common)?;
            let panel = dio::load_panel(&cfg)?;
            let report = pipeline::run_experiment(&panel, &cfg.experiment)?;
            let table = table_from_reports(vec![report])?;
            emit(common.out.as_deref(), |w| {
                dio::write_report(&table, format, w)
            })
        }
        Command::Compare { common, format } => {
            let format: ReportFormat = format.parse()?;
            let cfg = load_config(&common)?;
            let panel = dio::load_panel(&cfg)?;
            let table = pipeline::compare(&panel, &cfg.comparison_specs())?;
            match &common.out {
                Some(out) => {
                    dio::emit_report(&table, format, out)?;
                    print!("{}", pipeline::render_table(&table));
                    Ok(())
                }
                None => emit(None, |w| dio::write_report(&table, format, w)),
            }
        }
        Command::Trace(common) => {
            let cfg = load_config(&common)?;
            let panel = dio::load_panel(&cfg)?;
            let data = pipeline::collect_traces(&panel, &cfg.comparison_specs())?;
            let start = cfg.trace.start;
            let window = IndexRange::new(start, start + cfg.trace.length);
            emit(common.out.as_deref(), |w| {
                dio::write_forecast_trace(&data.t, &data.truth, &data.models, window, w)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            if code == 1 {
                eprintln!("\nusage: dmaflow <generate|correlate|run|compare|trace> [--config PATH] [--seed N] [--out PATH] [--format json|csv]");
            }
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
