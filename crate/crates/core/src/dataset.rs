//! Fixed-length cycle series: loading, seasonal filtering, subsampling and the
//! per-time-step linear trend.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SERIES_LEN: usize = 37;

/// Months (1 = January) kept by the default seasonal filter: September to March.
pub const WINTER_MONTHS: [u32; 7] = [9, 10, 11, 12, 1, 2, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSeries {
    pub cycle_index: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub values: Vec<f64>,
}

impl CycleSeries {
    pub fn new(cycle_index: i64, values: Vec<f64>) -> Self {
        Self {
            cycle_index,
            timestamp: None,
            values,
        }
    }

    pub fn with_timestamp(mut self, ts: impl Into<String>) -> Self {
        self.timestamp = Some(ts.into());
        self
    }

    pub fn date(&self) -> Option<NaiveDate> {
        self.timestamp.as_deref().and_then(parse_date)
    }
}

/// Parses the calendar date at the front of an ISO-8601 timestamp.
pub fn parse_date(ts: &str) -> Option<NaiveDate> {
    let head = ts.trim().get(..10)?;
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDataset {
    series: Vec<CycleSeries>,
    t_len: usize,
    delta: usize,
}

impl FunctionalDataset {
    /// Builds a dataset, sorting by cycle index and validating every series.
    pub fn new(mut series: Vec<CycleSeries>, t_len: usize) -> Result<Self> {
        if t_len == 0 {
            return Err(Error::invalid("series length must be positive"));
        }
        let mut seen = HashSet::with_capacity(series.len());
        for (row, s) in series.iter().enumerate() {
            if s.values.len() != t_len {
                return Err(Error::Row {
                    row,
                    message: format!("expected {t_len} values, got {}", s.values.len()),
                });
            }
            if let Some(t) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Row {
                    row,
                    message: format!("non-finite value at t{}", t + 1),
                });
            }
            if !seen.insert(s.cycle_index) {
                return Err(Error::Row {
                    row,
                    message: format!("duplicate cycle index {}", s.cycle_index),
                });
            }
        }
        series.sort_by_key(|s| s.cycle_index);
        Ok(Self {
            series,
            t_len,
            delta: 1,
        })
    }

    /// Builds a dataset from a row matrix with cycle indices `1..=n`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let t_len = rows.first().map(Vec::len).unwrap_or(DEFAULT_SERIES_LEN);
        let series = rows
            .into_iter()
            .enumerate()
            .map(|(i, v)| CycleSeries::new(i as i64 + 1, v))
            .collect();
        Self::new(series, t_len)
    }

    pub fn series(&self) -> &[CycleSeries] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn cycle_indices(&self) -> Vec<i64> {
        self.series.iter().map(|s| s.cycle_index).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.series.iter().map(|s| s.values.clone()).collect()
    }

    /// Values at one time step across all cycles, in cycle order.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.series.iter().map(|s| s.values[t]).collect()
    }

    pub(crate) fn with_values(&self, values: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(values.len(), self.series.len());
        let series = self
            .series
            .iter()
            .zip(values)
            .map(|(s, v)| CycleSeries {
                cycle_index: s.cycle_index,
                timestamp: s.timestamp.clone(),
                values: v,
            })
            .collect();
        Self {
            series,
            t_len: self.t_len,
            delta: self.delta,
        }
    }

    pub(crate) fn subset(&self, keep: impl Iterator<Item = usize>, delta: usize) -> Self {
        Self {
            series: keep.map(|i| self.series[i].clone()).collect(),
            t_len: self.t_len,
            delta,
        }
    }
}

/// Column mapping for CSV input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub index_column: String,
    pub timestamp_column: Option<String>,
    /// Value columns are `{prefix}1 .. {prefix}T`.
    pub value_prefix: String,
    /// Expected T; inferred from the header when absent.
    pub series_len: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            index_column: "M".into(),
            timestamp_column: Some("timestamp".into()),
            value_prefix: "t".into(),
            series_len: None,
        }
    }
}

pub fn load_dataset(path: &Path, schema: &CsvSchema) -> Result<FunctionalDataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<FunctionalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let index_col = find(&schema.index_column)
        .ok_or_else(|| Error::invalid(format!("missing index column `{}`", schema.index_column)))?;
    let ts_col = schema.timestamp_column.as_deref().and_then(find);

    let mut value_cols = Vec::new();
    loop {
        let name = format!("{}{}", schema.value_prefix, value_cols.len() + 1);
        match find(&name) {
            Some(c) => value_cols.push(c),
            None => break,
        }
    }
    let t_len = schema.series_len.unwrap_or(value_cols.len());
    if t_len == 0 || value_cols.len() < t_len {
        return Err(Error::invalid(format!(
            "header provides {} value columns, expected {t_len}",
            value_cols.len()
        )));
    }
    value_cols.truncate(t_len);

    let n_cols = headers.len();
    let mut series = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // data rows are numbered from 1, after the header
        let row = i + 1;
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        if record.len() != n_cols {
            return Err(Error::Row {
                row,
                message: format!("expected {n_cols} columns, got {}", record.len()),
            });
        }
        let idx_txt = &record[index_col];
        let cycle_index: i64 = idx_txt.parse().map_err(|_| Error::Row {
            row,
            message: format!("cycle index `{idx_txt}` is not an integer"),
        })?;
        let mut values = Vec::with_capacity(t_len);
        for (t, &c) in value_cols.iter().enumerate() {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| Error::Row {
                row,
                message: format!("cell t{} = `{cell}` is not numeric", t + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Row {
                    row,
                    message: format!("cell t{} is not finite", t + 1),
                });
            }
            values.push(v);
        }
        let timestamp = ts_col
            .map(|c| record[c].to_string())
            .filter(|s| !s.is_empty());
        series.push(CycleSeries {
            cycle_index,
            timestamp,
            values,
        });
    }
    // duplicate detection reports data rows (1-based)
    let mut seen = HashSet::new();
    for (i, s) in series.iter().enumerate() {
        if !seen.insert(s.cycle_index) {
            return Err(Error::Row {
                row: i + 1,
                message: format!("duplicate cycle index {}", s.cycle_index),
            });
        }
    }
    FunctionalDataset::new(series, t_len)
}

/// Writes a dataset in the CSV layout accepted by [`read_dataset`].
pub fn write_dataset<W: std::io::Write>(ds: &FunctionalDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let has_ts = ds.series.iter().any(|s| s.timestamp.is_some());
    let mut header = vec!["M".to_string()];
    if has_ts {
        header.push("timestamp".into());
    }
    header.extend((1..=ds.t_len).map(|t| format!("t{t}")));
    w.write_record(&header)?;
    for s in &ds.series {
        let mut rec = vec![s.cycle_index.to_string()];
        if has_ts {
            rec.push(s.timestamp.clone().unwrap_or_default());
        }
        rec.extend(s.values.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}

/// Keeps the series whose timestamp falls in one of `months` (1-12).
pub fn filter_season(ds: &FunctionalDataset, months: &BTreeSet<u32>) -> Result<FunctionalDataset> {
    let mut keep = Vec::new();
    for (row, s) in ds.series.iter().enumerate() {
        let date = s.date().ok_or_else(|| Error::Row {
            row,
            message: format!("cycle {} has no parseable timestamp", s.cycle_index),
        })?;
        if months.contains(&date.month()) {
            keep.push(row);
        }
    }
    Ok(ds.subset(keep.into_iter(), ds.delta))
}

/// Keeps positions `0, delta, 2*delta, ...` of the ordered list.
pub fn subsample(ds: &FunctionalDataset, delta: usize) -> Result<FunctionalDataset> {
    if delta < 1 {
        return Err(Error::invalid("subsampling step must be at least 1"));
    }
    Ok(ds.subset((0..ds.len()).step_by(delta), ds.delta * delta))
}

/// Per-time-step linear trend `X[M][t] = slope[t] * M + intercept[t] + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub slope: Vec<f64>,
    pub intercept: Vec<f64>,
}

impl TrendModel {
    pub fn zero(t_len: usize) -> Self {
        Self {
            slope: vec![0.0; t_len],
            intercept: vec![0.0; t_len],
        }
    }

    pub fn t_len(&self) -> usize {
        self.slope.len()
    }

    pub fn detrend_values(&self, values: &[f64], m: i64) -> Vec<f64> {
        values
            .iter()
            .zip(&self.slope)
            .map(|(x, a)| x - a * m as f64)
            .collect()
    }

    pub fn retrend_values(&self, values: &[f64], m: i64) -> Vec<f64> {
        values
            .iter()
            .zip(&self.slope)
            .map(|(x, a)| a * m as f64 + x)
            .collect()
    }
}

/// Ordinary least squares of each time step on the cycle index.
pub fn fit_trend(ds: &FunctionalDataset) -> Result<TrendModel> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::insufficient("trend fit needs at least two cycles"));
    }
    let m: Vec<f64> = ds.series.iter().map(|s| s.cycle_index as f64).collect();
    let m_bar = m.iter().sum::<f64>() / n as f64;
    let sxx: f64 = m.iter().map(|v| (v - m_bar) * (v - m_bar)).sum();
    if sxx <= 0.0 {
        return Err(Error::Singular("all cycle indices are equal".into()));
    }
    let (slope, intercept): (Vec<f64>, Vec<f64>) = (0..ds.t_len)
        .into_par_iter()
        .map(|t| {
            let y_bar = ds.series.iter().map(|s| s.values[t]).sum::<f64>() / n as f64;
            let sxy: f64 = ds
                .series
                .iter()
                .zip(&m)
                .map(|(s, mi)| (mi - m_bar) * (s.values[t] - y_bar))
                .sum();
            let a = sxy / sxx;
            (a, y_bar - a * m_bar)
        })
        .unzip();
    Ok(TrendModel { slope, intercept })
}

fn check_trend(ds_len: usize, trend: &TrendModel) -> Result<()> {
    if trend.t_len() != ds_len || trend.intercept.len() != ds_len {
        return Err(Error::DimensionMismatch {
            expected: ds_len,
            got: trend.t_len(),
        });
    }
    Ok(())
}

/// Removes `slope[t] * M` from every series, using each series' own cycle index.
pub fn detrend(ds: &FunctionalDataset, trend: &TrendModel) -> Result<FunctionalDataset> {
    check_trend(ds.t_len, trend)?;
    let values = ds
        .series
        .iter()
        .map(|s| trend.detrend_values(&s.values, s.cycle_index))
        .collect();
    Ok(ds.with_values(values))
}

/// Adds `slope[t] * m` back to every series of `ds`.
pub fn retrend(ds: &FunctionalDataset, trend: &TrendModel, m: i64) -> Result<FunctionalDataset> {
    check_trend(ds.t_len, trend)?;
    let values = ds
        .series
        .iter()
        .map(|s| trend.retrend_values(&s.values, m))
        .collect();
    Ok(ds.with_values(values))
}
