//! Series ingestion and min-max scaling.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{data, usage, Error, Result};

/// A univariate series with its timestamps kept as written in the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub name: String,
    pub timestamps: Vec<String>,
    pub values: Vec<f64>,
}

impl RawSeries {
    /// Series indexed `0, 1, 2, …`.
    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return data(format!("value at index {i} is not finite"));
        }
        Ok(Self {
            name: name.into(),
            timestamps: (0..values.len()).map(|i| i.to_string()).collect(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `timestamp,value` rows with a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["timestamp", "value"])?;
        for (t, v) in self.timestamps.iter().zip(&self.values) {
            w.write_record([t.as_str(), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sort key of a timestamp cell: a number, an RFC 3339 instant, an ISO
/// datetime or an ISO date.
fn timestamp_key(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp_millis() as f64);
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp_millis() as f64);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis() as f64)
}

/// Reads one value column (and optionally a timestamp column) from a
/// headered, comma-separated UTF-8 file. Row numbers in errors count the
/// header as row 1.
pub fn load_csv(
    path: &Path,
    value_column: &str,
    timestamp_column: Option<&str>,
) -> Result<RawSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| {
                Error::Data(format!(
                    "column '{name}' not found in {} (columns: {})",
                    path.display(),
                    headers.iter().collect::<Vec<_>>().join(", ")
                ))
            })
    };
    let value_idx = find(value_column)?;
    let ts_idx = timestamp_column.map(find).transpose()?;

    let mut values = Vec::new();
    let mut timestamps = Vec::new();
    let mut bad_rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let parsed = record
            .get(value_idx)
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite());
        match parsed {
            Some(v) => values.push(v),
            None => {
                bad_rows.push(row);
                continue;
            }
        }
        timestamps.push(match ts_idx {
            Some(t) => record.get(t).unwrap_or("").trim().to_string(),
            None => (values.len() - 1).to_string(),
        });
    }
    if !bad_rows.is_empty() {
        return data(format!(
            "{}: unparseable value in column '{value_column}' at row(s) {}",
            path.display(),
            join_rows(&bad_rows)
        ));
    }
    if values.is_empty() {
        return data(format!("{}: no data rows", path.display()));
    }
    if ts_idx.is_some() {
        check_timestamps(&timestamps)?;
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(RawSeries {
        name,
        timestamps,
        values,
    })
}

fn join_rows(rows: &[usize]) -> String {
    rows.iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_timestamps(timestamps: &[String]) -> Result<()> {
    let mut keys = Vec::with_capacity(timestamps.len());
    let mut unparseable = Vec::new();
    for (i, t) in timestamps.iter().enumerate() {
        match timestamp_key(t) {
            Some(k) => keys.push(k),
            None => unparseable.push(i + 2),
        }
    }
    if !unparseable.is_empty() {
        return data(format!(
            "unparseable timestamp at row(s) {}",
            join_rows(&unparseable)
        ));
    }
    let offending: Vec<usize> = keys
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].partial_cmp(&w[0]) != Some(Ordering::Greater))
        .map(|(i, _)| i + 3)
        .collect();
    if !offending.is_empty() {
        return data(format!(
            "timestamps not strictly increasing at row(s) {}",
            join_rows(&offending)
        ));
    }
    Ok(())
}

/// Values scaled into `[0, 1]` with the constants needed to invert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl NormalizedSeries {
    pub fn denormalize(&self, x: f64) -> f64 {
        denormalize(x, self.min, self.max)
    }
}

pub fn denormalize(x: f64, min: f64, max: f64) -> f64 {
    x * (max - min) + min
}

/// Scales `values` with constants computed over `values` itself.
pub fn minmax_normalize(values: &[f64]) -> Result<NormalizedSeries> {
    if values.is_empty() {
        return usage("cannot normalize an empty series");
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    normalize_with(values, min, max)
}

/// Scales `values` with externally supplied constants (for train-only
/// statistics the result may leave `[0, 1]` outside the training range).
pub fn normalize_with(values: &[f64], min: f64, max: f64) -> Result<NormalizedSeries> {
    if !(max > min) {
        return data(format!(
            "degenerate range: min {min} and max {max} coincide"
        ));
    }
    let span = max - min;
    Ok(NormalizedSeries {
        values: values.iter().map(|x| (x - min) / span).collect(),
        min,
        max,
    })
}

/// Writes `rows` to `w` as CSV; shared by the CLI writers.
pub fn write_rows<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("s.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "date,qty\n2024-01-01,1.5\n2024-01-02,2\n2024-01-03,3.25\n",
        );
        let s = load_csv(&p, "qty", Some("date")).unwrap();
        assert_eq!(s.values, vec![1.5, 2.0, 3.25]);
        assert_eq!(s.timestamps[2], "2024-01-03");
    }

    #[test]
    fn names_bad_value_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t,v\n1,0.5\n2,abc\n3,0.7\n");
        let err = load_csv(&p, "v", Some("t")).unwrap_err().to_string();
        assert!(err.contains("row(s) 3"), "{err}");
    }

    #[test]
    fn rejects_duplicate_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t,v\n1,0.5\n1,0.6\n2,0.7\n");
        let err = load_csv(&p, "v", Some("t")).unwrap_err();
        assert!(
            matches!(err, Error::Data(ref m) if m.contains("strictly increasing") && m.contains('3'))
        );
    }

    #[test]
    fn rejects_missing_column_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t,v\n1,0.5\n");
        assert!(matches!(load_csv(&p, "price", None), Err(Error::Data(_))));
        let p = write(&dir, "t,v\n");
        assert!(matches!(load_csv(&p, "v", None), Err(Error::Data(_))));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = RawSeries::from_values("x", vec![0.1, -2.5, 3.0]).unwrap();
        let p = dir.path().join("x.csv");
        s.write_csv(&p).unwrap();
        let back = load_csv(&p, "value", Some("timestamp")).unwrap();
        assert_eq!(back.values, s.values);
    }

    #[test]
    fn normalize_examples() {
        let n = minmax_normalize(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(n.values, vec![0.0, 0.5, 1.0]);
        assert_eq!((n.min, n.max), (2.0, 6.0));
        assert!(matches!(
            minmax_normalize(&[5.0, 5.0, 5.0]),
            Err(Error::Data(_))
        ));
        assert_eq!(denormalize(0.25, 2.0, 6.0), 3.0);
    }

    proptest! {
        #[test]
        fn normalize_round_trip(xs in prop::collection::vec(-1e3f64..1e3, 2..50)) {
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let n = minmax_normalize(&xs).unwrap();
            for (x, y) in xs.iter().zip(&n.values) {
                prop_assert!((0.0..=1.0).contains(y));
                prop_assert!((n.denormalize(*y) - x).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
