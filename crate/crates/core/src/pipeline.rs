//! Experiment orchestration: chronological splits, member selection on the
//! training interval, per-seed training or SARIMA fitting, one-step test
//! forecasts and aggregated error metrics.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nnet::{self, NetConfig, TrainReport};
use crate::sarima::{self, SarimaFit, SarimaSpec};
use crate::series::{
    build_dataset, correlation_matrix, select_correlated, CorrelationMatrix, CorrelationSet,
    FlowPanel, ForecastMode, IndexRange,
};
use crate::synth::months_to_steps;

/// Version of the report JSON layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_months: f64,
    pub val_months: f64,
    pub test_months: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_months: 1.5,
            val_months: 0.5,
            test_months: 1.0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train", self.train_months),
            ("validation", self.val_months),
            ("test", self.test_months),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} months must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: IndexRange,
    pub val: IndexRange,
    pub test: IndexRange,
}

/// Contiguous train, validation and test intervals from the start of the
/// panel; surplus steps at the end are dropped.
pub fn split(panel: &FlowPanel, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let step = panel.step_seconds();
    let train = months_to_steps(spec.train_months, step);
    let val = months_to_steps(spec.val_months, step);
    let test = months_to_steps(spec.test_months, step);
    let need = train + val + test;
    if panel.len() < need {
        return Err(Error::PanelTooShort {
            have: panel.len(),
            need,
        });
    }
    Ok(Splits {
        train: IndexRange::new(0, train),
        val: IndexRange::new(train, train + val),
        test: IndexRange::new(train + val, need),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
}

pub fn metrics(y: &[f64], yhat: &[f64]) -> Result<Metrics> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    let n = y.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        let e = a - b;
        se += e * e;
        ae += e.abs();
    }
    let mse = se / n;
    Ok(Metrics {
        mse,
        mae: ae / n,
        rmse: mse.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    CnnRnn,
    Sarima,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::CnnRnn => "cnn_rnn",
            ModelKind::Sarima => "sarima",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cnn_rnn" => Ok(ModelKind::CnnRnn),
            "sarima" => Ok(ModelKind::Sarima),
            other => Err(Error::InvalidConfig(format!(
                "unknown model `{other}` (expected cnn_rnn or sarima)"
            ))),
        }
    }
}

/// Where the correlated zones come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberSource {
    Explicit(Vec<String>),
    /// Thresholded correlation on the training interval.
    Derived {
        theta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub target: String,
    pub mode: ForecastMode,
    pub members: MemberSource,
    pub model: ModelKind,
    pub net: NetConfig,
    pub sarima: SarimaSpec,
    pub split: SplitSpec,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "self".into(),
            target: "5".into(),
            mode: ForecastMode::Local,
            members: MemberSource::Derived { theta: 0.95 },
            model: ModelKind::CnnRnn,
            net: NetConfig::default(),
            sarima: SarimaSpec::default(),
            split: SplitSpec::default(),
            seeds: (0..5).collect(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.model == ModelKind::Sarima && self.mode != ForecastMode::Local {
            return Err(Error::InvalidConfig(
                "sarima is univariate and only runs in local mode".into(),
            ));
        }
        if let MemberSource::Derived { theta } = self.members {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::InvalidConfig(format!(
                    "theta must lie in [0, 1], got {theta}"
                )));
            }
        }
        self.split.validate()?;
        match self.model {
            ModelKind::CnnRnn => self.net.validate(),
            ModelKind::Sarima => self.sarima.validate(),
        }
    }

    /// SHA-256 over the spec and every panel value.
    pub fn fingerprint(&self, panel: &FlowPanel) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("spec serializes"));
        for z in panel.zone_ids() {
            h.update(z.as_bytes());
            h.update([0u8]);
        }
        h.update(panel.start_time().timestamp().to_le_bytes());
        h.update(panel.step_seconds().to_le_bytes());
        for row in panel.rows() {
            for v in row {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation over `values`.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub mse: MeanStd,
    pub mae: MeanStd,
    pub rmse: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Metrics,
    /// Network runs only: epoch kept by early stopping and epochs trained.
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub name: String,
    pub target: String,
    pub mode: ForecastMode,
    pub model: ModelKind,
    pub theta: Option<f64>,
    /// Correlated zones used as inputs (empty in local mode).
    pub members: Vec<String>,
    /// First and last label index of the evaluated test forecasts.
    pub evaluated: IndexRange,
    pub runs: Vec<SeedRun>,
    pub aggregate: AggregateMetrics,
    pub fingerprint: String,
    pub sarima_fit: Option<SarimaFit>,
}

/// Test-range forecasts of one seed, in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedForecast {
    pub seed: u64,
    /// Panel index of each label.
    pub label_index: Vec<usize>,
    pub truth: Vec<f64>,
    pub prediction: Vec<f64>,
    pub train_report: Option<TrainReport>,
}

/// Per-zone min-max scaling fitted on one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(panel: &FlowPanel, range: IndexRange) -> Self {
        let (min, range): (Vec<f64>, Vec<f64>) = panel
            .rows()
            .iter()
            .map(|row| {
                let seg = &row[range.start..range.end];
                let lo = seg.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                (lo, if span > 0.0 { span } else { 1.0 })
            })
            .unzip();
        Self { min, range }
    }

    pub fn transform(&self, panel: &FlowPanel) -> FlowPanel {
        panel.map_values(|z, v| (v - self.min[z]) / self.range[z])
    }

    pub fn inverse(&self, zone: usize, v: f64) -> f64 {
        v * self.range[zone] + self.min[zone]
    }
}

fn resolve_members(
    panel: &FlowPanel,
    spec: &ExperimentSpec,
    splits: &Splits,
) -> Result<Vec<String>> {
    if !spec.mode.uses_members() {
        return Ok(Vec::new());
    }
    let members = match &spec.members {
        MemberSource::Explicit(m) => {
            for z in m {
                panel.zone_index(z)?;
            }
            m.clone()
        }
        MemberSource::Derived { theta } => {
            let matrix = correlation_matrix(panel, splits.train)?;
            select_correlated(&matrix, &spec.target, *theta)?.members
        }
    };
    if spec.mode == ForecastMode::Correlated && members.is_empty() {
        return Err(Error::EmptyCorrelationSet {
            target: spec.target.clone(),
            theta: match spec.members {
                MemberSource::Derived { theta } => theta,
                MemberSource::Explicit(_) => f64::NAN,
            },
        });
    }
    Ok(members)
}

fn check_window(spec: &ExperimentSpec, splits: &Splits) -> Result<()> {
    let w = spec.net.window;
    for (name, r) in [
        ("train", splits.train),
        ("validation", splits.val),
        ("test", splits.test),
    ] {
        if r.len() < w + 2 {
            return Err(Error::InvalidConfig(format!(
                "{name} interval has {} steps, need at least window + 2 = {}",
                r.len(),
                w + 2
            )));
        }
    }
    Ok(())
}

fn run_network_seed(
    panel: &FlowPanel,
    scaled: &FlowPanel,
    scaler: &MinMaxScaler,
    spec: &ExperimentSpec,
    members: &[String],
    splits: &Splits,
    seed: u64,
) -> Result<SeedForecast> {
    let w = spec.net.window;
    let target_idx = panel.zone_index(&spec.target)?;
    let build = |range| build_dataset(scaled, &spec.target, members, w, range, spec.mode);
    let train_set = build(splits.train)?;
    let val_set = build(splits.val)?;
    let test_set = build(splits.test)?;
    let config = NetConfig {
        input_channels: train_set.channels(),
        seed,
        ..spec.net.clone()
    };
    let report = nnet::train(&config, &train_set, &val_set)?;
    let scaled_preds = nnet::predict_dataset(&report.params, &test_set)?;
    let label_index: Vec<usize> = test_set.inputs.iter().map(|x| x.t_index() + 1).collect();
    let truth = &panel.rows()[target_idx];
    Ok(SeedForecast {
        seed,
        truth: label_index.iter().map(|&t| truth[t]).collect(),
        prediction: scaled_preds
            .iter()
            .map(|&p| scaler.inverse(target_idx, p))
            .collect(),
        label_index,
        train_report: Some(report),
    })
}

fn run_sarima(
    panel: &FlowPanel,
    spec: &ExperimentSpec,
    splits: &Splits,
) -> Result<(SarimaFit, Vec<usize>, Vec<f64>)> {
    let series = panel.series(&spec.target)?;
    let fit = sarima::fit(&spec.sarima, &series[..splits.val.end])?;
    // same labels as the network: first label is W steps into the test interval
    let first = splits.test.start + spec.net.window;
    let preds = sarima::rolling_one_step(&fit, &series[..splits.test.end], first)?;
    let label_index: Vec<usize> = (first..splits.test.end).collect();
    Ok((fit, label_index, preds))
}

/// Runs every seed and returns the report together with the raw forecasts.
pub fn run_experiment_detailed(
    panel: &FlowPanel,
    spec: &ExperimentSpec,
) -> Result<(ExperimentReport, Vec<SeedForecast>)> {
    spec.validate()?;
    panel.zone_index(&spec.target)?;
    let splits = split(panel, &spec.split)?;
    check_window(spec, &splits)?;
    let members = resolve_members(panel, spec, &splits)?;

    let (forecasts, sarima_fit) = match spec.model {
        ModelKind::CnnRnn => {
            let scaler = MinMaxScaler::fit(panel, splits.train);
            let scaled = scaler.transform(panel);
            let forecasts = spec
                .seeds
                .par_iter()
                .map(|&seed| {
                    run_network_seed(panel, &scaled, &scaler, spec, &members, &splits, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            (forecasts, None)
        }
        ModelKind::Sarima => {
            // deterministic: one fit shared by every seed
            let (fit, label_index, prediction) = run_sarima(panel, spec, &splits)?;
            let series = panel.series(&spec.target)?;
            let truth: Vec<f64> = label_index.iter().map(|&t| series[t]).collect();
            let forecasts = spec
                .seeds
                .iter()
                .map(|&seed| SeedForecast {
                    seed,
                    label_index: label_index.clone(),
                    truth: truth.clone(),
                    prediction: prediction.clone(),
                    train_report: None,
                })
                .collect();
            (forecasts, Some(fit))
        }
    };

    let runs = forecasts
        .iter()
        .map(|f| {
            Ok(SeedRun {
                seed: f.seed,
                metrics: metrics(&f.truth, &f.prediction)?,
                best_epoch: f.train_report.as_ref().map(|r| r.best_epoch),
                epochs_run: f.train_report.as_ref().map(|r| r.history.len()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |pick: fn(&Metrics) -> f64| {
        MeanStd::of(&runs.iter().map(|r| pick(&r.metrics)).collect::<Vec<_>>())
    };
    let aggregate = AggregateMetrics {
        mse: column(|m| m.mse),
        mae: column(|m| m.mae),
        rmse: column(|m| m.rmse),
    };
    let labels = &forecasts[0].label_index;
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: spec.name.clone(),
        target: spec.target.clone(),
        mode: spec.mode,
        model: spec.model,
        theta: match spec.members {
            MemberSource::Derived { theta } if spec.mode.uses_members() => Some(theta),
            _ => None,
        },
        members,
        evaluated: IndexRange::new(labels[0], labels[labels.len() - 1] + 1),
        runs,
        aggregate,
        fingerprint: spec.fingerprint(panel),
        sarima_fit,
    };
    Ok((report, forecasts))
}

pub fn run_experiment(panel: &FlowPanel, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_experiment_detailed(panel, spec).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub target: String,
    pub columns: Vec<ExperimentReport>,
}

fn check_comparable(specs: &[ExperimentSpec]) -> Result<()> {
    let first = specs
        .first()
        .ok_or_else(|| Error::InvalidConfig("compare needs at least one experiment".into()))?;
    for s in &specs[1..] {
        if s.target != first.target {
            return Err(Error::MismatchedTargets(
                first.target.clone(),
                s.target.clone(),
            ));
        }
        if s.split != first.split {
            return Err(Error::InvalidConfig(format!(
                "experiment `{}` uses a different split than `{}`",
                s.name, first.name
            )));
        }
    }
    Ok(())
}

/// Runs each spec on the same panel; one column per spec, in order.
pub fn compare(panel: &FlowPanel, specs: &[ExperimentSpec]) -> Result<ComparisonTable> {
    check_comparable(specs)?;
    let columns = specs
        .iter()
        .map(|s| run_experiment(panel, s))
        .collect::<Result<Vec<_>>>()?;
    table_from_reports(columns)
}

pub fn table_from_reports(columns: Vec<ExperimentReport>) -> Result<ComparisonTable> {
    let target = columns
        .first()
        .map(|c| c.target.clone())
        .ok_or_else(|| Error::InvalidConfig("comparison table needs at least one column".into()))?;
    if let Some(c) = columns.iter().find(|c| c.target != target) {
        return Err(Error::MismatchedTargets(target, c.target.clone()));
    }
    Ok(ComparisonTable {
        schema_version: REPORT_SCHEMA_VERSION,
        target,
        columns,
    })
}

/// Plain-text rendering: one row per metric, one `mean (std)` cell per column.
pub fn render_table(table: &ComparisonTable) -> String {
    let headers: Vec<String> = table
        .columns
        .iter()
        .map(|c| {
            if c.members.is_empty() {
                c.name.clone()
            } else {
                format!("{} [{}]", c.name, c.members.join(","))
            }
        })
        .collect();
    let rows: [(&str, fn(&AggregateMetrics) -> MeanStd); 3] =
        [("MSE", |a| a.mse), ("MAE", |a| a.mae), ("RMSE", |a| a.rmse)];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, pick)| {
            table
                .columns
                .iter()
                .map(|c| {
                    let m = pick(&c.aggregate);
                    format!("{:.4} ({:.4})", m.mean, m.std)
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..headers.len())
        .map(|j| {
            cells
                .iter()
                .map(|r| r[j].len())
                .chain([headers[j].len()])
                .max()
                .unwrap()
        })
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "target zone {}", table.target);
    let _ = write!(out, "{:<6}", "");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(out, " | {h:>w$}");
    }
    out.push('\n');
    for ((label, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{label:<6}");
        for (c, w) in row.iter().zip(&widths) {
            let _ = write!(out, " | {c:>w$}");
        }
        out.push('\n');
    }
    for c in &table.columns {
        let _ = writeln!(out, "{}: {}", c.name, c.fingerprint);
    }
    out
}

/// Aligned test-range forecasts of several experiments, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    /// Panel index of each label.
    pub t: Vec<usize>,
    pub truth: Vec<f64>,
    /// One series per experiment, from its first seed.
    pub models: Vec<(String, Vec<f64>)>,
}

pub fn collect_traces(panel: &FlowPanel, specs: &[ExperimentSpec]) -> Result<TraceData> {
    check_comparable(specs)?;
    let mut data: Option<TraceData> = None;
    for spec in specs {
        let first = ExperimentSpec {
            seeds: spec.seeds[..1.min(spec.seeds.len())].to_vec(),
            ..spec.clone()
        };
        let (_, mut forecasts) = run_experiment_detailed(panel, &first)?;
        let f = forecasts.remove(0);
        let d = data.get_or_insert_with(|| TraceData {
            t: f.label_index.clone(),
            truth: f.truth.clone(),
            models: Vec::new(),
        });
        if d.t != f.label_index {
            return Err(Error::InvalidConfig(format!(
                "experiment `{}` scores different test steps than `{}`",
                spec.name, specs[0].name
            )));
        }
        d.models.push((spec.name.clone(), f.prediction));
    }
    Ok(data.expect("at least one spec"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub schema_version: u32,
    pub range: IndexRange,
    pub threshold: f64,
    pub matrix: CorrelationMatrix,
    /// One set per zone, in panel order.
    pub sets: Vec<CorrelationSet>,
}

pub fn correlation_summary(
    panel: &FlowPanel,
    range: IndexRange,
    theta: f64,
) -> Result<CorrelationSummary> {
    let matrix = correlation_matrix(panel, range)?;
    let sets = panel
        .zone_ids()
        .iter()
        .map(|z| select_correlated(&matrix, z, theta))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        range,
        threshold: theta,
        matrix,
        sets,
    })
}

impl CorrelationSummary {
    pub fn render(&self) -> String {
        let ids = &self.matrix.zone_ids;
        let w = ids.iter().map(String::len).max().unwrap_or(1).max(6);
        let mut out = format!(
            "pearson correlation over steps {}..{}\n",
            self.range.start, self.range.end
        );
        let _ = write!(out, "{:>w$}", "");
        for id in ids {
            let _ = write!(out, " {id:>w$}");
        }
        out.push('\n');
        for (id, row) in ids.iter().zip(&self.matrix.rho) {
            let _ = write!(out, "{id:>w$}");
            for v in row {
                let _ = write!(out, " {v:>w$.3}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "correlation sets at theta = {}", self.threshold);
        for s in &self.sets {
            let _ = writeln!(out, "{:>w$}: {{{}}}", s.target, s.members.join(","));
        }
        out
    }
}
