//! Multi-zone flow panels, Pearson correlation, correlation-set selection and
//! sliding-window dataset construction.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sensor cadence: five minutes.
pub const DEFAULT_STEP_SECONDS: u32 = 300;

/// Half-open index interval `[start, end)` over the time axis of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.end
    }
}

impl fmt::Display for IndexRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Orders zone ids numerically when both parse as integers, lexically otherwise.
pub fn cmp_zone_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// Consumption of `n` zones over `T` equally spaced time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPanel {
    zone_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    start_time: DateTime<Utc>,
    step_seconds: u32,
}

impl FlowPanel {
    pub fn new(
        zone_ids: Vec<String>,
        values: Vec<Vec<f64>>,
        start_time: DateTime<Utc>,
        step_seconds: u32,
    ) -> Result<Self> {
        if zone_ids.is_empty() {
            return Err(Error::InvalidPanel("panel has no zones".into()));
        }
        if zone_ids.len() != values.len() {
            return Err(Error::InvalidPanel(format!(
                "{} zone ids but {} rows",
                zone_ids.len(),
                values.len()
            )));
        }
        if step_seconds == 0 {
            return Err(Error::InvalidPanel("step_seconds must be positive".into()));
        }
        let len = values[0].len();
        if len == 0 {
            return Err(Error::InvalidPanel("panel has no time steps".into()));
        }
        if let Some((i, row)) = values.iter().enumerate().find(|(_, r)| r.len() != len) {
            return Err(Error::InvalidPanel(format!(
                "zone `{}` has {} steps, expected {len}",
                zone_ids[i],
                row.len()
            )));
        }
        for (i, id) in zone_ids.iter().enumerate() {
            if zone_ids[..i].contains(id) {
                return Err(Error::InvalidPanel(format!("duplicate zone id `{id}`")));
            }
        }
        Ok(Self {
            zone_ids,
            values,
            start_time,
            step_seconds,
        })
    }

    /// Panel starting at [`default_start_time`] with the default cadence.
    pub fn from_rows(zone_ids: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(zone_ids, values, default_start_time(), DEFAULT_STEP_SECONDS)
    }

    pub fn zone_ids(&self) -> &[String] {
        &self.zone_ids
    }

    pub fn n_zones(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    pub fn step_seconds(&self) -> u32 {
        self.step_seconds
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn zone_index(&self, zone: &str) -> Result<usize> {
        self.zone_ids
            .iter()
            .position(|z| z == zone)
            .ok_or_else(|| Error::UnknownZone(zone.to_string()))
    }

    pub fn series(&self, zone: &str) -> Result<&[f64]> {
        Ok(&self.values[self.zone_index(zone)?])
    }

    pub fn timestamp(&self, t: usize) -> DateTime<Utc> {
        self.start_time + chrono::Duration::seconds(t as i64 * self.step_seconds as i64)
    }

    /// Applies `f(zone_index, value)` to every cell, keeping metadata.
    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> FlowPanel {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(z, row)| row.iter().map(|&v| f(z, v)).collect())
            .collect();
        FlowPanel {
            zone_ids: self.zone_ids.clone(),
            values,
            start_time: self.start_time,
            step_seconds: self.step_seconds,
        }
    }
}

pub fn default_start_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// Pearson correlation of two equally long, non-constant series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::SeriesTooShort {
            len: a.len(),
            needed: 1,
        });
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::ConstantSeries { zone: None });
    }
    // var_a * var_b is symmetric under swapping arguments, so the result is too.
    let rho = cov / (var_a * var_b).sqrt();
    Ok(rho.clamp(-1.0, 1.0))
}

/// Pairwise Pearson correlations of all zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub zone_ids: Vec<String>,
    pub rho: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    /// Builds a matrix from explicit entries, e.g. a published table.
    pub fn from_entries(zone_ids: Vec<String>, rho: Vec<Vec<f64>>) -> Result<Self> {
        let n = zone_ids.len();
        if rho.len() != n || rho.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}"),
                got: format!("{} rows", rho.len()),
            });
        }
        Ok(Self { zone_ids, rho })
    }

    pub fn get(&self, a: &str, b: &str) -> Result<f64> {
        let i = self.index(a)?;
        let j = self.index(b)?;
        Ok(self.rho[i][j])
    }

    fn index(&self, zone: &str) -> Result<usize> {
        self.zone_ids
            .iter()
            .position(|z| z == zone)
            .ok_or_else(|| Error::UnknownZone(zone.to_string()))
    }
}

/// Correlations over `range` only, so test data never influences selection.
pub fn correlation_matrix(panel: &FlowPanel, range: IndexRange) -> Result<CorrelationMatrix> {
    if range.end > panel.len() || range.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "correlation range {range} must lie within [0, {}) and span at least 2 steps",
            panel.len()
        )));
    }
    let n = panel.n_zones();
    let rows = panel.rows();
    let mut rho = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let a = &rows[i][range.start..range.end];
            let b = &rows[j][range.start..range.end];
            let r = pearson(a, b).map_err(|e| match e {
                Error::ConstantSeries { .. } => {
                    let idx = if is_constant(a) { i } else { j };
                    Error::ConstantSeries {
                        zone: Some(panel.zone_ids()[idx].clone()),
                    }
                }
                other => other,
            })?;
            rho[i][j] = r;
            rho[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        zone_ids: panel.zone_ids().to_vec(),
        rho,
    })
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Zones whose correlation with `target` is at least `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSet {
    pub target: String,
    pub threshold: f64,
    pub members: Vec<String>,
}

impl CorrelationSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Selects every other zone with `rho[target][zone] >= theta` (ties included),
/// members sorted ascending by id.
pub fn select_correlated(
    matrix: &CorrelationMatrix,
    target: &str,
    theta: f64,
) -> Result<CorrelationSet> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidConfig(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let ti = matrix.index(target)?;
    let mut members: Vec<String> = matrix
        .zone_ids
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != ti && matrix.rho[ti][j] >= theta)
        .map(|(_, z)| z.clone())
        .collect();
    members.sort_by(|a, b| cmp_zone_ids(a, b));
    Ok(CorrelationSet {
        target: target.to_string(),
        threshold: theta,
        members,
    })
}

/// Which zones feed the forecaster for a target zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ForecastMode {
    /// Target zone history only.
    #[serde(rename = "local")]
    Local,
    /// Target zone plus its correlated zones.
    #[serde(rename = "local+correlated")]
    LocalCorrelated,
    /// Correlated zones only, no target history.
    #[serde(rename = "correlated")]
    Correlated,
}

impl ForecastMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ForecastMode::Local => "local",
            ForecastMode::LocalCorrelated => "local+correlated",
            ForecastMode::Correlated => "correlated",
        }
    }

    pub fn uses_members(&self) -> bool {
        !matches!(self, ForecastMode::Local)
    }

    /// Input channel count for a correlation set of size `members`.
    pub fn channels(&self, members: usize) -> usize {
        match self {
            ForecastMode::Local => 1,
            ForecastMode::LocalCorrelated => members + 1,
            ForecastMode::Correlated => members,
        }
    }
}

impl fmt::Display for ForecastMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForecastMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "local" | "self" => Ok(ForecastMode::Local),
            "local+correlated" | "self+correlated" => Ok(ForecastMode::LocalCorrelated),
            "correlated" => Ok(ForecastMode::Correlated),
            other => Err(Error::InvalidConfig(format!(
                "unknown forecast mode `{other}` (expected local, local+correlated or correlated)"
            ))),
        }
    }
}

/// A `channels x width` block of history, one row per zone, each row
/// oldest to newest and ending at `t_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    values: Vec<f64>,
    channels: usize,
    width: usize,
    t_index: usize,
}

impl FeatureWindow {
    pub fn new(values: Vec<f64>, channels: usize, width: usize, t_index: usize) -> Result<Self> {
        if channels == 0 || width == 0 || values.len() != channels * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{channels}x{width}"),
                got: format!("{} values", values.len()),
            });
        }
        if t_index + 1 < width {
            return Err(Error::InvalidConfig(format!(
                "window ending at {t_index} cannot hold {width} steps"
            )));
        }
        Ok(Self {
            values,
            channels,
            width,
            t_index,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn t_index(&self) -> usize {
        self.t_index
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.values[channel * self.width..(channel + 1) * self.width]
    }

    /// Row-major `channels x width` values.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Supervised (window, next-step target) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Vec<FeatureWindow>,
    pub targets: Vec<f64>,
    pub mode: ForecastMode,
    pub target_zone: String,
    /// Zone of each input row, in row order.
    pub channel_zones: Vec<String>,
    pub window: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_zones.len()
    }
}

/// Zones feeding the model for `mode`, target first when present, then
/// members ascending.
pub fn channel_zones(target: &str, members: &[String], mode: ForecastMode) -> Result<Vec<String>> {
    if members.iter().any(|m| m == target) {
        return Err(Error::InvalidConfig(format!(
            "target zone `{target}` cannot be one of its own correlated members"
        )));
    }
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| cmp_zone_ids(a, b));
    sorted.dedup();
    match mode {
        ForecastMode::Local => Ok(vec![target.to_string()]),
        ForecastMode::LocalCorrelated => {
            let mut zones = vec![target.to_string()];
            zones.extend(sorted);
            Ok(zones)
        }
        ForecastMode::Correlated => {
            if sorted.is_empty() {
                return Err(Error::EmptyCorrelationSet {
                    target: target.to_string(),
                    theta: f64::NAN,
                });
            }
            Ok(sorted)
        }
    }
}

/// One sample per `t` in `[range.start + W - 1, range.end - 2]`; features are
/// the `W` values ending at `t`, the label is the target at `t + 1`. No window
/// reaches outside `range`.
pub fn build_dataset(
    panel: &FlowPanel,
    target: &str,
    members: &[String],
    window: usize,
    range: IndexRange,
    mode: ForecastMode,
) -> Result<WindowedDataset> {
    if window == 0 {
        return Err(Error::InvalidConfig("window must be at least 1".into()));
    }
    if range.end > panel.len() || range.start > range.end {
        return Err(Error::InvalidConfig(format!(
            "range {range} exceeds panel length {}",
            panel.len()
        )));
    }
    if range.len() <= window {
        return Err(Error::WindowTooLarge {
            window,
            range_len: range.len(),
        });
    }
    let zones = channel_zones(target, members, mode)?;
    let target_row = panel.series(target)?;
    let rows: Vec<&[f64]> = zones
        .iter()
        .map(|z| panel.series(z))
        .collect::<Result<_>>()?;

    let first = range.start + window - 1;
    let last = range.end - 2;
    let mut inputs = Vec::with_capacity(last + 1 - first);
    let mut targets = Vec::with_capacity(last + 1 - first);
    for t in first..=last {
        let mut values = Vec::with_capacity(rows.len() * window);
        for row in &rows {
            values.extend_from_slice(&row[t + 1 - window..=t]);
        }
        inputs.push(FeatureWindow {
            values,
            channels: rows.len(),
            width: window,
            t_index: t,
        });
        targets.push(target_row[t + 1]);
    }
    Ok(WindowedDataset {
        inputs,
        targets,
        mode,
        target_zone: target.to_string(),
        channel_zones: zones,
        window,
    })
}
