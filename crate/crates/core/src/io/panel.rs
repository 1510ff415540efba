use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::series::FlowPanel;

/// Longest run of missing rows that may be interpolated.
pub const MAX_INTERPOLATED_GAP: usize = 3;

/// How missing rows (timestamp jumps of whole steps) are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    #[default]
    Error,
    /// Fill runs of up to `max_gap` missing rows on a straight line.
    LinearInterpolate { max_gap: usize },
}

impl FillPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FillPolicy::LinearInterpolate { max_gap } if max_gap > MAX_INTERPOLATED_GAP => {
                Err(Error::InvalidConfig(format!(
                    "interpolation gap {max_gap} exceeds the limit of {MAX_INTERPOLATED_GAP}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn allowed(&self) -> usize {
        match *self {
            FillPolicy::Error => 0,
            FillPolicy::LinearInterpolate { max_gap } => max_gap,
        }
    }
}

impl FromStr for FillPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "error" => Ok(FillPolicy::Error),
            "linear_interpolate" => Ok(FillPolicy::LinearInterpolate {
                max_gap: MAX_INTERPOLATED_GAP,
            }),
            other => Err(Error::InvalidConfig(format!(
                "unknown fill policy `{other}` (expected error or linear_interpolate)"
            ))),
        }
    }
}

fn format_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn parse_time(s: &str, row: usize) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::MalformedCsv {
            row,
            column: Some(1),
            msg: format!("bad timestamp `{s}`: {e}"),
        })
}

/// Parses a wide panel CSV. Rows in diagnostics are 1-based file lines.
pub fn read_panel<R: Read>(reader: R, fill: FillPolicy) -> Result<FlowPanel> {
    fill.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let malformed = |row, column, msg: String| Error::MalformedCsv { row, column, msg };

    let header = match records.next() {
        Some(r) => r.map_err(|e| malformed(1, None, e.to_string()))?,
        None => return Err(malformed(1, None, "missing header".into())),
    };
    if header.get(0).map(str::trim) != Some("timestamp") {
        return Err(malformed(
            1,
            Some(1),
            "first header column must be `timestamp`".into(),
        ));
    }
    let zone_ids: Vec<String> = header
        .iter()
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    if zone_ids.is_empty() {
        return Err(malformed(1, None, "header names no zones".into()));
    }
    for (i, z) in zone_ids.iter().enumerate() {
        if z.is_empty() {
            return Err(malformed(1, Some(i + 2), "empty zone id".into()));
        }
        if zone_ids[..i].contains(z) {
            return Err(malformed(
                1,
                Some(i + 2),
                format!("duplicate zone id `{z}`"),
            ));
        }
    }

    let n = zone_ids.len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut start: Option<DateTime<Utc>> = None;
    let mut prev: Option<DateTime<Utc>> = None;
    let mut step: Option<i64> = None;

    for rec in records {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            malformed(row, None, e.to_string())
        })?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != n + 1 {
            return Err(malformed(
                row,
                None,
                format!("expected {} fields, found {}", n + 1, rec.len()),
            ));
        }
        let t = parse_time(&rec[0], row)?;
        let mut cells = Vec::with_capacity(n);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| malformed(row, Some(j + 2), format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(malformed(
                    row,
                    Some(j + 2),
                    format!("non-finite value `{cell}`"),
                ));
            }
            if v < 0.0 {
                return Err(Error::NegativeFlow {
                    row,
                    zone: zone_ids[j].clone(),
                    value: v,
                });
            }
            cells.push(v);
        }

        if let Some(p) = prev {
            let dt = (t - p).num_seconds();
            if dt <= 0 {
                return Err(Error::IrregularCadence {
                    row,
                    msg: format!(
                        "timestamp {} does not follow {}",
                        format_time(t),
                        format_time(p)
                    ),
                });
            }
            let s = *step.get_or_insert(dt);
            if dt % s != 0 {
                return Err(Error::IrregularCadence {
                    row,
                    msg: format!("step of {dt} s is not a multiple of the {s} s cadence"),
                });
            }
            let missing = (dt / s - 1) as usize;
            if missing > 0 {
                if missing > fill.allowed() {
                    return Err(Error::GapTooLarge {
                        row,
                        missing,
                        allowed: fill.allowed(),
                    });
                }
                for (z, &b) in cells.iter().enumerate() {
                    let a = *values[z].last().expect("previous row exists");
                    for k in 1..=missing {
                        values[z].push(a + (b - a) * k as f64 / (missing + 1) as f64);
                    }
                }
            }
        } else {
            start = Some(t);
        }
        prev = Some(t);
        for (z, v) in cells.into_iter().enumerate() {
            values[z].push(v);
        }
    }

    let start = start.ok_or_else(|| malformed(2, None, "no data rows".into()))?;
    let step = match step {
        Some(s) => u32::try_from(s).map_err(|_| Error::IrregularCadence {
            row: 3,
            msg: format!("step of {s} s is too large"),
        })?,
        None => crate::series::DEFAULT_STEP_SECONDS,
    };
    FlowPanel::new(zone_ids, values, start, step)
}

pub fn ingest(path: &Path, fill: FillPolicy) -> Result<FlowPanel> {
    read_panel(File::open(path)?, fill)
}

/// Writes `panel` as wide CSV. Values use the shortest decimal that parses
/// back to the same `f64`.
pub fn write_panel<W: Write>(panel: &FlowPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    let mut header = vec!["timestamp".to_string()];
    header.extend(panel.zone_ids().iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(panel.n_zones() + 1);
    for t in 0..panel.len() {
        record.clear();
        record.push(format_time(panel.timestamp(t)));
        record.extend(panel.rows().iter().map(|r| r[t].to_string()));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_panel(panel: &FlowPanel, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_panel(panel, w))
}
