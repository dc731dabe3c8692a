//! Hourly multivariate panels: ingestion, alignment, calendar encoding and
//! train-fit scaling.
//!
//! A [`Panel`] is an hourly grid of named columns for one region. Gaps in
//! the source data become rows whose cells are masked rather than being
//! dropped, so row `i` is always `start + i` hours.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column holding aggregated consumption after load ingestion.
pub const LOAD_COLUMN: &str = "load";
/// Column holding the aggregated premise count after load ingestion.
pub const PREMISE_COLUMN: &str = "premise_count";

/// Names of the calendar columns, in the order [`calendar_features`] emits them.
pub const CALENDAR_COLUMNS: [&str; 9] = [
    "hour_sin",
    "hour_cos",
    "dow_sin",
    "dow_cos",
    "month_sin",
    "month_cos",
    "doy_sin",
    "doy_cos",
    "holiday",
];

/// Returns true if `name` is one of the derived calendar columns.
pub fn is_calendar_column(name: &str) -> bool {
    CALENDAR_COLUMNS.contains(&name)
}

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("no rows for region `{0}`")]
    EmptyRegion(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("timestamps are not a strictly increasing 1-hour grid at row {0}")]
    NotHourly(usize),
    #[error("column `{name}` has {got} rows, expected {expected}")]
    LengthMismatch {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("region mismatch: `{left}` vs `{right}`")]
    RegionMismatch { left: String, right: String },
    #[error("time ranges do not intersect")]
    EmptyIntersection,
    #[error("empty row range")]
    EmptyRange,
    #[error("row range {start}..{end} exceeds panel length {len}")]
    RangeOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
}

pub type Result<T, E = PanelError> = std::result::Result<T, E>;

/// Aligned hourly series for one region with a per-cell observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    region: String,
    timestamps: Vec<DateTime<Utc>>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    observed: Vec<Vec<bool>>,
}

impl Panel {
    /// Builds a panel, validating the hourly grid and column shapes.
    ///
    /// Non-finite values are always treated as missing.
    pub fn new(
        region: impl Into<String>,
        timestamps: Vec<DateTime<Utc>>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        observed: Option<Vec<Vec<bool>>>,
    ) -> Result<Self> {
        for i in 1..timestamps.len() {
            if timestamps[i] - timestamps[i - 1] != Duration::hours(1) {
                return Err(PanelError::NotHourly(i));
            }
        }
        if names.len() != columns.len() {
            return Err(PanelError::LengthMismatch {
                name: "<columns>".into(),
                got: columns.len(),
                expected: names.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(PanelError::DuplicateColumn(name.clone()));
            }
        }
        let n = timestamps.len();
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(PanelError::LengthMismatch {
                    name: name.clone(),
                    got: col.len(),
                    expected: n,
                });
            }
        }
        let mut observed = match observed {
            Some(mask) => {
                if mask.len() != columns.len() {
                    return Err(PanelError::LengthMismatch {
                        name: "<mask>".into(),
                        got: mask.len(),
                        expected: columns.len(),
                    });
                }
                for (name, m) in names.iter().zip(&mask) {
                    if m.len() != n {
                        return Err(PanelError::LengthMismatch {
                            name: name.clone(),
                            got: m.len(),
                            expected: n,
                        });
                    }
                }
                mask
            }
            None => vec![vec![true; n]; columns.len()],
        };
        let mut columns = columns;
        for (col, mask) in columns.iter_mut().zip(observed.iter_mut()) {
            for (v, m) in col.iter_mut().zip(mask.iter_mut()) {
                if !v.is_finite() {
                    *m = false;
                }
                if !*m {
                    *v = f64::NAN;
                }
            }
        }
        Ok(Self {
            region: region.into(),
            timestamps,
            names,
            columns,
            observed,
        })
    }

    /// Fully observed panel on an hourly grid starting at `start`.
    pub fn from_columns(
        region: impl Into<String>,
        start: DateTime<Utc>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let timestamps = (0..n).map(|i| start + Duration::hours(i as i64)).collect();
        Self::new(region, timestamps, names, columns, None)
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_index(name).is_some()
    }

    /// Values of a column; masked cells hold NaN.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|i| self.columns[i].as_slice())
    }

    pub fn observed(&self, name: &str) -> Option<&[bool]> {
        self.column_index(name).map(|i| self.observed[i].as_slice())
    }

    pub fn column_at(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    pub fn observed_at(&self, idx: usize) -> &[bool] {
        &self.observed[idx]
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    }

    pub(crate) fn check_range(&self, rows: &Range<usize>) -> Result<()> {
        if rows.end > self.len() || rows.start > rows.end {
            return Err(PanelError::RangeOutOfBounds {
                start: rows.start,
                end: rows.end,
                len: self.len(),
            });
        }
        if rows.is_empty() {
            return Err(PanelError::EmptyRange);
        }
        Ok(())
    }

    /// Projection onto the named columns, in the given order.
    pub fn select<S: AsRef<str>>(&self, cols: &[S]) -> Result<Panel> {
        let mut names = Vec::with_capacity(cols.len());
        let mut columns = Vec::with_capacity(cols.len());
        let mut observed = Vec::with_capacity(cols.len());
        for c in cols {
            let i = self.require(c.as_ref())?;
            names.push(self.names[i].clone());
            columns.push(self.columns[i].clone());
            observed.push(self.observed[i].clone());
        }
        Panel::new(
            self.region.clone(),
            self.timestamps.clone(),
            names,
            columns,
            Some(observed),
        )
    }

    /// Rows `rows` as a new panel.
    pub fn slice(&self, rows: Range<usize>) -> Result<Panel> {
        self.check_range(&rows)?;
        Ok(Panel {
            region: self.region.clone(),
            timestamps: self.timestamps[rows.clone()].to_vec(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[rows.clone()].to_vec())
                .collect(),
            observed: self
                .observed
                .iter()
                .map(|m| m[rows.clone()].to_vec())
                .collect(),
        })
    }

    /// Appends a column. Non-finite values are masked.
    pub fn with_column(
        mut self,
        name: impl Into<String>,
        values: Vec<f64>,
        observed: Option<Vec<bool>>,
    ) -> Result<Panel> {
        let name = name.into();
        if self.has_column(&name) {
            return Err(PanelError::DuplicateColumn(name));
        }
        let n = self.len();
        if values.len() != n {
            return Err(PanelError::LengthMismatch {
                name,
                got: values.len(),
                expected: n,
            });
        }
        let mut mask = observed.unwrap_or_else(|| vec![true; n]);
        if mask.len() != n {
            return Err(PanelError::LengthMismatch {
                name,
                got: mask.len(),
                expected: n,
            });
        }
        let mut values = values;
        for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
            if !v.is_finite() {
                *m = false;
            }
            if !*m {
                *v = f64::NAN;
            }
        }
        self.names.push(name);
        self.columns.push(values);
        self.observed.push(mask);
        Ok(self)
    }

    /// Replaces the values of an existing column, keeping its mask.
    pub fn with_values(mut self, name: &str, values: Vec<f64>) -> Result<Panel> {
        let i = self.require(name)?;
        if values.len() != self.len() {
            return Err(PanelError::LengthMismatch {
                name: name.to_string(),
                got: values.len(),
                expected: self.len(),
            });
        }
        let mask = &self.observed[i];
        self.columns[i] = values
            .into_iter()
            .zip(mask)
            .map(|(v, &m)| if m { v } else { f64::NAN })
            .collect();
        Ok(self)
    }

    /// Adds the calendar block derived from the panel's own timestamps.
    pub fn with_calendar(self, holidays: &BTreeSet<NaiveDate>) -> Result<Panel> {
        let block = calendar_features(&self.timestamps, holidays);
        let mut panel = self;
        for (name, col) in block.names.into_iter().zip(block.columns) {
            panel = panel.with_column(name, col, None)?;
        }
        Ok(panel)
    }

    /// Same data with every timestamp shifted by `hours`.
    pub fn shifted(&self, hours: i64) -> Panel {
        let mut p = self.clone();
        for t in &mut p.timestamps {
            *t += Duration::hours(hours);
        }
        p
    }

    /// True if every named column is observed on every row of `rows`.
    pub fn is_fully_observed<S: AsRef<str>>(&self, cols: &[S], rows: Range<usize>) -> Result<bool> {
        let idx = cols
            .iter()
            .map(|c| self.require(c.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(idx
            .iter()
            .all(|&i| self.observed[i][rows.clone()].iter().all(|&m| m)))
    }

    /// Maximal runs of rows inside `rows` where all named columns are observed.
    pub fn observed_stretches<S: AsRef<str>>(
        &self,
        cols: &[S],
        rows: Range<usize>,
    ) -> Result<Vec<Range<usize>>> {
        let idx = cols
            .iter()
            .map(|c| self.require(c.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        let mut run_start = None;
        for r in rows.clone() {
            let ok = idx.iter().all(|&i| self.observed[i][r]);
            match (ok, run_start) {
                (true, None) => run_start = Some(r),
                (false, Some(s)) => {
                    out.push(s..r);
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            out.push(s..rows.end);
        }
        Ok(out)
    }

    /// Longest fully observed stretch; ties go to the latest one.
    pub fn longest_observed_stretch<S: AsRef<str>>(
        &self,
        cols: &[S],
        rows: Range<usize>,
    ) -> Result<Option<Range<usize>>> {
        let stretches = self.observed_stretches(cols, rows)?;
        Ok(stretches
            .into_iter()
            .max_by(|a, b| a.len().cmp(&b.len()).then(a.start.cmp(&b.start))))
    }

    /// Row index of `t`, if it lies on this panel's grid.
    pub fn row_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let first = *self.timestamps.first()?;
        let d = (t - first).num_hours();
        if d < 0 || (t - first) != Duration::hours(d) {
            return None;
        }
        let d = d as usize;
        (d < self.len()).then_some(d)
    }

    /// Writes the canonical panel CSV: `timestamp,<columns...>`, masked cells empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| PanelError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(csv_to_io(e)))?;
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(|e| io(csv_to_io(e)))?;
        for r in 0..self.len() {
            let mut rec = Vec::with_capacity(self.names.len() + 1);
            rec.push(format_timestamp(self.timestamps[r]));
            for (col, mask) in self.columns.iter().zip(&self.observed) {
                rec.push(if mask[r] {
                    format!("{}", col[r])
                } else {
                    String::new()
                });
            }
            w.write_record(&rec).map_err(|e| io(csv_to_io(e)))?;
        }
        w.flush().map_err(io)
    }

    /// Reads a canonical panel CSV as written by [`Panel::write_csv`].
    pub fn read_csv(path: &Path, region: &str) -> Result<Panel> {
        let (header, rows) = read_wide_csv(path, None)?;
        let names: Vec<String> = header;
        build_grid(region, names, rows).map_err(|e| match e {
            GridError::Duplicate(line) => PanelError::Malformed {
                path: path.to_path_buf(),
                line,
                message: "duplicate timestamp".into(),
            },
            GridError::Empty => PanelError::EmptyRegion(region.to_string()),
            GridError::Panel(e) => e,
        })
    }

    pub fn metadata(&self) -> PanelMetadata {
        PanelMetadata {
            region: self.region.clone(),
            columns: self.names.clone(),
            start: self.timestamps.first().copied(),
            end: self.timestamps.last().copied(),
            rows: self.len(),
            missing_cells: self
                .names
                .iter()
                .zip(&self.observed)
                .map(|(n, m)| (n.clone(), m.iter().filter(|&&o| !o).count()))
                .collect(),
        }
    }
}

/// Side-car description written next to a canonical panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMetadata {
    pub region: String,
    pub columns: Vec<String>,
    pub start: Option<DateTime<Utc>>,
    pub end: Option<DateTime<Utc>>,
    pub rows: usize,
    pub missing_cells: BTreeMap<String, usize>,
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses an ISO-8601 timestamp. Offsets are normalized to UTC; naive values
/// are taken as UTC. Returns `None` for unparseable input.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

fn parse_hour(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let t = parse_timestamp(s).ok_or_else(|| format!("unparseable timestamp `{s}`"))?;
    if t.minute() != 0 || t.second() != 0 || t.nanosecond() != 0 {
        return Err(format!("timestamp `{s}` is not on the hour"));
    }
    Ok(t)
}

fn parse_cell(s: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(|v| v.is_finite().then_some(v))
        .map_err(|_| format!("invalid number `{s}`"))
}

enum GridError {
    Duplicate(u64),
    Empty,
    Panel(PanelError),
}

type WideRow = (DateTime<Utc>, u64, Vec<Option<f64>>);

/// Reads `timestamp,<cols>` CSV. If `region` is given and the file has a
/// `region` column, rows are filtered on it.
fn read_wide_csv(path: &Path, region: Option<&str>) -> Result<(Vec<String>, Vec<WideRow>)> {
    let file = File::open(path).map_err(|source| PanelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let malformed = |line: u64, message: String| PanelError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let ts_idx = headers
        .iter()
        .position(|h| h == "timestamp")
        .ok_or_else(|| PanelError::MissingColumn("timestamp".into()))?;
    let region_idx = headers.iter().position(|h| h == "region");
    let value_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != ts_idx && Some(i) != region_idx)
        .collect();
    let names: Vec<String> = value_idx.iter().map(|&i| headers[i].to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if let (Some(want), Some(ri)) = (region, region_idx) {
            if rec.get(ri) != Some(want) {
                continue;
            }
        }
        let t = parse_hour(rec.get(ts_idx).unwrap_or("")).map_err(|m| malformed(line, m))?;
        let vals = value_idx
            .iter()
            .map(|&i| parse_cell(rec.get(i).unwrap_or("")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| malformed(line, m))?;
        rows.push((t, line, vals));
    }
    Ok((names, rows))
}

/// Places rows on a gap-filled hourly grid; duplicates are an error.
fn build_grid(
    region: &str,
    names: Vec<String>,
    mut rows: Vec<WideRow>,
) -> std::result::Result<Panel, GridError> {
    if rows.is_empty() {
        return Err(GridError::Empty);
    }
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(GridError::Duplicate(w[1].1));
        }
    }
    let start = rows[0].0;
    let end = rows[rows.len() - 1].0;
    let n = (end - start).num_hours() as usize + 1;
    let mut columns = vec![vec![f64::NAN; n]; names.len()];
    let mut observed = vec![vec![false; n]; names.len()];
    for (t, _, vals) in rows {
        let r = (t - start).num_hours() as usize;
        for (c, v) in vals.into_iter().enumerate() {
            if let Some(v) = v {
                columns[c][r] = v;
                observed[c][r] = true;
            }
        }
    }
    let timestamps = (0..n).map(|i| start + Duration::hours(i as i64)).collect();
    Panel::new(region, timestamps, names, columns, Some(observed)).map_err(GridError::Panel)
}

/// Reads a load CSV (`timestamp,region,premise_count,consumption_kwh`),
/// keeps rows for `region`, and sums consumption and premise counts per hour.
pub fn ingest_load_csv(path: &Path, region: &str) -> Result<Panel> {
    ingest_load_csv_filtered(path, region, None)
}

/// As [`ingest_load_csv`], additionally requiring a `consumer_type` column
/// equal to `consumer_type` when one is given.
pub fn ingest_load_csv_filtered(
    path: &Path,
    region: &str,
    consumer_type: Option<&str>,
) -> Result<Panel> {
    let file = File::open(path).map_err(|source| PanelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let malformed = |line: u64, message: String| PanelError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let ts_idx = find("timestamp")?;
    let region_idx = find("region")?;
    let premise_idx = find("premise_count")?;
    let kwh_idx = find("consumption_kwh")?;
    let type_idx = consumer_type.map(|_| find("consumer_type")).transpose()?;

    // (kwh sum, kwh complete, premise sum, premise complete)
    let mut agg: BTreeMap<DateTime<Utc>, (f64, bool, f64, bool)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.get(region_idx) != Some(region) {
            continue;
        }
        if let (Some(want), Some(ti)) = (consumer_type, type_idx) {
            if rec.get(ti) != Some(want) {
                continue;
            }
        }
        let t = parse_hour(rec.get(ts_idx).unwrap_or("")).map_err(|m| malformed(line, m))?;
        let kwh = parse_cell(rec.get(kwh_idx).unwrap_or("")).map_err(|m| malformed(line, m))?;
        let prem =
            parse_cell(rec.get(premise_idx).unwrap_or("")).map_err(|m| malformed(line, m))?;
        let e = agg.entry(t).or_insert((0.0, true, 0.0, true));
        match kwh {
            Some(v) => e.0 += v,
            None => e.1 = false,
        }
        match prem {
            Some(v) => e.2 += v,
            None => e.3 = false,
        }
    }
    let rows: Vec<WideRow> = agg
        .into_iter()
        .map(|(t, (kwh, kok, prem, pok))| (t, 0, vec![kok.then_some(kwh), pok.then_some(prem)]))
        .collect();
    build_grid(
        region,
        vec![LOAD_COLUMN.to_string(), PREMISE_COLUMN.to_string()],
        rows,
    )
    .map_err(|e| match e {
        GridError::Empty => PanelError::EmptyRegion(region.to_string()),
        GridError::Duplicate(line) => malformed(line, "duplicate timestamp".into()),
        GridError::Panel(e) => e,
    })
}

/// Value columns of a wide CSV: every header except `timestamp` and `region`.
pub fn wide_csv_columns(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|source| PanelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers().map_err(|e| PanelError::Malformed {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    Ok(headers
        .iter()
        .filter(|h| *h != "timestamp" && *h != "region")
        .map(str::to_string)
        .collect())
}

/// Reads a weather CSV (`timestamp,<var1>,<var2>,...`) and keeps exactly
/// `variables`, in that order.
pub fn ingest_weather_csv<S: AsRef<str>>(
    path: &Path,
    region: &str,
    variables: &[S],
) -> Result<Panel> {
    let (names, rows) = read_wide_csv(path, Some(region))?;
    for v in variables {
        if !names.iter().any(|n| n == v.as_ref()) {
            return Err(PanelError::MissingColumn(v.as_ref().to_string()));
        }
    }
    let full = build_grid(region, names, rows).map_err(|e| match e {
        GridError::Empty => PanelError::EmptyRegion(region.to_string()),
        GridError::Duplicate(line) => PanelError::Malformed {
            path: path.to_path_buf(),
            line,
            message: "duplicate timestamp".into(),
        },
        GridError::Panel(e) => e,
    })?;
    full.select(variables)
}

/// Joins two panels of the same region on the intersection of their hourly
/// ranges. Columns are `load`'s followed by `weather`'s; masks carry over
/// per column.
pub fn join_align(load: &Panel, weather: &Panel) -> Result<Panel> {
    if load.region != weather.region {
        return Err(PanelError::RegionMismatch {
            left: load.region.clone(),
            right: weather.region.clone(),
        });
    }
    let (Some(&a0), Some(&b0)) = (load.timestamps.first(), weather.timestamps.first()) else {
        return Err(PanelError::EmptyIntersection);
    };
    let a1 = *load.timestamps.last().unwrap();
    let b1 = *weather.timestamps.last().unwrap();
    let start = a0.max(b0);
    let end = a1.min(b1);
    if start > end {
        return Err(PanelError::EmptyIntersection);
    }
    let la = load.row_of(start).ok_or(PanelError::EmptyIntersection)?;
    let lb = weather.row_of(start).ok_or(PanelError::EmptyIntersection)?;
    let n = (end - start).num_hours() as usize + 1;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut observed = Vec::new();
    for (p, off) in [(load, la), (weather, lb)] {
        for i in 0..p.names.len() {
            names.push(p.names[i].clone());
            columns.push(p.columns[i][off..off + n].to_vec());
            observed.push(p.observed[i][off..off + n].to_vec());
        }
    }
    Panel::new(
        load.region.clone(),
        load.timestamps[la..la + n].to_vec(),
        names,
        columns,
        Some(observed),
    )
}

/// Derived calendar columns for a timestamp sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CalendarBlock {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

fn cyclic(value: f64, period: f64) -> (f64, f64) {
    let angle = 2.0 * PI * value / period;
    (angle.sin(), angle.cos())
}

/// Sine/cosine encodings of hour-of-day (24), day-of-week (7), month (12)
/// and day-of-year (365.25), plus a 0/1 holiday flag on the UTC date.
pub fn calendar_features(
    timestamps: &[DateTime<Utc>],
    holidays: &BTreeSet<NaiveDate>,
) -> CalendarBlock {
    let mut columns = vec![Vec::with_capacity(timestamps.len()); CALENDAR_COLUMNS.len()];
    for t in timestamps {
        let pairs = [
            cyclic(t.hour() as f64, 24.0),
            cyclic(t.weekday().num_days_from_monday() as f64, 7.0),
            cyclic(t.month0() as f64, 12.0),
            cyclic(t.ordinal0() as f64, 365.25),
        ];
        for (k, (s, c)) in pairs.into_iter().enumerate() {
            columns[2 * k].push(s);
            columns[2 * k + 1].push(c);
        }
        columns[8].push(if holidays.contains(&t.date_naive()) {
            1.0
        } else {
            0.0
        });
    }
    CalendarBlock {
        names: CALENDAR_COLUMNS.iter().map(|s| s.to_string()).collect(),
        columns,
    }
}

/// Reads a holiday file: one ISO date per line; blank lines and `#` comments
/// are skipped.
pub fn read_holidays(path: &Path) -> Result<BTreeSet<NaiveDate>> {
    let file = File::open(path).map_err(|source| PanelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PanelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| PanelError::Malformed {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: format!("invalid date `{s}`: {e}"),
        })?;
        out.insert(d);
    }
    Ok(out)
}

/// Writes a panel metadata file as pretty JSON.
pub fn write_metadata(panel: &Panel, path: &Path) -> Result<()> {
    let io = |source| PanelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = File::create(path).map_err(io)?;
    let json = serde_json::to_string_pretty(&panel.metadata()).expect("metadata serializes");
    f.write_all(json.as_bytes()).map_err(io)?;
    f.write_all(b"\n").map_err(io)
}

/// Train-fit z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns whose observed values were constant (or absent); their std is 1.
    pub degenerate: Vec<bool>,
}

impl ScalerParams {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Maps scaled values of `name` back to original units.
    pub fn inverse(&self, name: &str, values: &[f64]) -> Option<Vec<f64>> {
        let i = self.index(name)?;
        Some(
            values
                .iter()
                .map(|v| v * self.std[i] + self.mean[i])
                .collect(),
        )
    }

    pub fn forward(&self, name: &str, values: &[f64]) -> Option<Vec<f64>> {
        let i = self.index(name)?;
        Some(
            values
                .iter()
                .map(|v| (v - self.mean[i]) / self.std[i])
                .collect(),
        )
    }
}

/// Fits per-column mean and population std on the observed cells of `rows`.
pub fn fit_scaler(panel: &Panel, rows: Range<usize>) -> Result<ScalerParams> {
    panel.check_range(&rows)?;
    let mut params = ScalerParams {
        names: panel.names.clone(),
        mean: Vec::with_capacity(panel.names.len()),
        std: Vec::with_capacity(panel.names.len()),
        degenerate: Vec::with_capacity(panel.names.len()),
    };
    for (col, mask) in panel.columns.iter().zip(&panel.observed) {
        let vals: Vec<f64> = rows.clone().filter(|&r| mask[r]).map(|r| col[r]).collect();
        if vals.is_empty() {
            params.mean.push(0.0);
            params.std.push(1.0);
            params.degenerate.push(true);
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let degenerate = !(std > 1e-12 * mean.abs().max(1.0));
        params.mean.push(mean);
        params.std.push(if degenerate { 1.0 } else { std });
        params.degenerate.push(degenerate);
    }
    Ok(params)
}

/// Applies z-scoring to every column named in `params`; other columns and
/// the mask are left unchanged.
pub fn apply_scaler(panel: &Panel, params: &ScalerParams) -> Result<Panel> {
    transform(panel, params, |v, m, s| (v - m) / s)
}

/// Inverse of [`apply_scaler`].
pub fn inverse_scaler(panel: &Panel, params: &ScalerParams) -> Result<Panel> {
    transform(panel, params, |v, m, s| v * s + m)
}

fn transform(
    panel: &Panel,
    params: &ScalerParams,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<Panel> {
    let mut out = panel.clone();
    for (k, name) in params.names.iter().enumerate() {
        let i = out.require(name)?;
        let (m, s) = (params.mean[k], params.std[k]);
        for (v, &obs) in out.columns[i].iter_mut().zip(&out.observed[i]) {
            if obs {
                *v = f(*v, m, s);
            }
        }
    }
    Ok(out)
}
