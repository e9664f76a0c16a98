//! Return panels: loading, validation, windowing and descriptive statistics.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum window length accepted for marginal fitting.
pub const MIN_WINDOW: usize = 30;
pub const DEFAULT_WINDOW: usize = 150;

/// A T×n panel of per-period relative returns, stored column-major (one
/// vector per asset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let panel = Self { dates, assets, columns };
        panel.validate()?;
        Ok(panel)
    }

    /// Builds a panel with consecutive calendar dates starting 2000-01-01.
    /// Used for simulated and generated data that carry no real calendar.
    pub fn with_synthetic_dates(assets: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = start.iter_days().take(t).collect();
        Self::new(dates, assets, columns)
    }

    fn validate(&self) -> Result<()> {
        let n = self.assets.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("panel needs at least 2 assets, got {n}")));
        }
        if self.columns.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} asset names but {} columns",
                n,
                self.columns.len()
            )));
        }
        let t = self.dates.len();
        if t < 2 {
            return Err(Error::InvalidInput(format!("panel needs at least 2 rows, got {t}")));
        }
        let mut seen = std::collections::HashSet::new();
        for a in &self.assets {
            if !seen.insert(a.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate asset id '{a}'")));
            }
        }
        for w in self.dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(format!("dates not strictly increasing at {}", w[1])));
            }
        }
        for (j, col) in self.columns.iter().enumerate() {
            if col.len() != t {
                return Err(Error::InvalidInput(format!(
                    "column '{}' has {} values, expected {t}",
                    self.assets[j],
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    row: row + 1,
                    column: self.assets[j].clone(),
                    message: "non-finite value".into(),
                });
            }
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(Error::InvalidInput(format!("column '{}' is constant", self.assets[j])));
            }
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[t]).collect()
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == id)
    }

    /// Rows `[window.start, window.start + window.len)` as a new panel.
    pub fn window(&self, window: RollingWindow) -> Result<ReturnPanel> {
        window.check(self.n_obs())?;
        let range = window.start..window.start + window.len;
        Self::new(
            self.dates[range.clone()].to_vec(),
            self.assets.clone(),
            self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
        )
    }

    /// Writes the panel as CSV with a leading `date` column. Values use the
    /// shortest representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
        let mut header = vec!["date".to_string()];
        header.extend(self.assets.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for t in 0..self.n_obs() {
            let mut rec = vec![self.dates[t].format("%Y-%m-%d").to_string()];
            rec.extend(self.columns.iter().map(|c| format!("{}", c[t])));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

/// A contiguous block of rows used as a learning period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingWindow {
    pub start: usize,
    pub len: usize,
}

impl RollingWindow {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn check(&self, n_obs: usize) -> Result<()> {
        if self.len < MIN_WINDOW {
            return Err(Error::InvalidInput(format!(
                "window length {} is below the minimum of {MIN_WINDOW}",
                self.len
            )));
        }
        if self.start + self.len > n_obs {
            return Err(Error::InvalidInput(format!(
                "window [{}, {}) exceeds panel length {n_obs}",
                self.start,
                self.start + self.len
            )));
        }
        Ok(())
    }
}

pub fn load_panel(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_panel(file)
}

/// Parses a CSV panel: first column `date` (ISO-8601), one column per asset.
/// Rows are sorted ascending by date.
pub fn read_panel<R: Read>(reader: R) -> Result<ReturnPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, column: "header".into(), message: e.to_string() })?
        .clone();
    if headers.len() < 3 {
        return Err(Error::Parse {
            row: 0,
            column: "header".into(),
            message: "expected a date column followed by at least two asset columns".into(),
        });
    }
    let assets: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, column: "-".into(), message: e.to_string() })?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: "-".into(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let date_txt = &rec[0];
        let date = NaiveDate::parse_from_str(date_txt, "%Y-%m-%d").map_err(|e| Error::Parse {
            row,
            column: headers[0].to_string(),
            message: format!("bad date '{date_txt}': {e}"),
        })?;
        let mut values = Vec::with_capacity(assets.len());
        for (j, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() {
                return Err(Error::Parse { row, column: headers[j].to_string(), message: "missing value".into() });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[j].to_string(),
                message: format!("not a number: '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, column: headers[j].to_string(), message: "non-finite value".into() });
            }
            values.push(v);
        }
        rows.push((date, values));
    }
    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Parse { row: 0, column: "date".into(), message: format!("duplicate date {}", w[0].0) });
        }
    }
    let dates = rows.iter().map(|(d, _)| *d).collect();
    let columns = (0..assets.len()).map(|j| rows.iter().map(|(_, v)| v[j]).collect()).collect();
    ReturnPanel::new(dates, assets, columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub variance: f64,
    pub skew: f64,
    /// Raw (non-excess) kurtosis; tends to 3 for Gaussian data.
    pub kurtosis: f64,
    pub min: f64,
    pub max: f64,
}

pub fn series_stats(x: &[f64]) -> SeriesStats {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (n - 1.0);
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    SeriesStats {
        mean,
        variance,
        skew: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
        min: x.iter().copied().fold(f64::INFINITY, f64::min),
        max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn panel_stats(panel: &ReturnPanel) -> Vec<SeriesStats> {
    panel.columns().iter().map(|c| series_stats(c)).collect()
}
