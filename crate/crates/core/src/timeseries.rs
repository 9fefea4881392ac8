//! Timestamped multivariate telemetry and its CSV file format.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense matrix of real-valued measurements: one row per timestamp, one
/// column per signal. Timestamps are strictly increasing integer time
/// indices; all values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<i64>,
    signal_names: Vec<String>,
    values: DMatrix<f64>,
}

impl TimeSeriesFrame {
    pub fn new(
        timestamps: Vec<i64>,
        signal_names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.nrows() != timestamps.len() {
            return Err(Error::InvalidFrame(format!(
                "{} rows but {} timestamps",
                values.nrows(),
                timestamps.len()
            )));
        }
        if values.ncols() != signal_names.len() {
            return Err(Error::InvalidFrame(format!(
                "{} columns but {} signal names",
                values.ncols(),
                signal_names.len()
            )));
        }
        for pair in timestamps.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidFrame(format!(
                    "timestamps must be strictly increasing ({} then {})",
                    pair[0], pair[1]
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &signal_names {
            if name.is_empty() {
                return Err(Error::InvalidFrame("empty signal name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidFrame(format!("duplicate signal `{name}`")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFrame("non-finite value".into()));
        }
        Ok(TimeSeriesFrame { timestamps, signal_names, values })
    }

    pub fn from_rows(
        timestamps: Vec<i64>,
        signal_names: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let ncols = signal_names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::InvalidFrame(format!(
                    "row {i} has {} values, expected {ncols}",
                    row.len()
                )));
            }
        }
        let values = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
        TimeSeriesFrame::new(timestamps, signal_names, values)
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_signals(&self) -> usize {
        self.signal_names.len()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    pub fn column_index(&self, signal: &str) -> Result<usize> {
        self.signal_names
            .iter()
            .position(|n| n == signal)
            .ok_or_else(|| Error::SignalMismatch(format!("signal `{signal}` not in frame")))
    }

    /// Owned copy of a contiguous row range.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.n_rows() {
            return Err(Error::InvalidFrame(format!(
                "row range {start}..{end} out of bounds for {} rows",
                self.n_rows()
            )));
        }
        Ok(TimeSeriesFrame {
            timestamps: self.timestamps[start..end].to_vec(),
            signal_names: self.signal_names.clone(),
            values: self.values.rows(start, end - start).into_owned(),
        })
    }

    /// Row index of the first timestamp >= `t`.
    pub fn row_at_or_after(&self, t: i64) -> usize {
        self.timestamps.partition_point(|&ts| ts < t)
    }

    /// Writes the telemetry CSV format: header `timestamp,<signal>,...`,
    /// floats in shortest round-trip notation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let ctx = "telemetry csv";
        let mut header = String::from("timestamp");
        for name in &self.signal_names {
            header.push(',');
            header.push_str(name);
        }
        header.push('\n');
        out.write_all(header.as_bytes()).map_err(|e| Error::io(ctx, e))?;
        let mut line = String::new();
        for (r, &t) in self.timestamps.iter().enumerate() {
            line.clear();
            line.push_str(&t.to_string());
            for c in 0..self.signal_names.len() {
                line.push(',');
                line.push_str(&format!("{}", self.values[(r, c)]));
            }
            line.push('\n');
            out.write_all(line.as_bytes()).map_err(|e| Error::io(ctx, e))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("create {}", path.display()), e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the telemetry CSV format. The mandatory header names the
    /// timestamp column first; timestamps may be integers or ISO-8601
    /// datetimes (converted to epoch seconds).
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| Error::csv("telemetry header", e))?
            .clone();
        if headers.is_empty() || headers[0].trim() != "timestamp" {
            return Err(Error::InvalidFrame(
                "first CSV column must be named `timestamp`".into(),
            ));
        }
        let signal_names: Vec<String> =
            headers.iter().skip(1).map(|h| h.trim().to_string()).collect();

        let mut timestamps = Vec::new();
        let mut rows = Vec::new();
        for (line_no, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(format!("row {}", line_no + 2), e))?;
            if record.len() != signal_names.len() + 1 {
                return Err(Error::InvalidFrame(format!(
                    "row {} has {} fields, expected {}",
                    line_no + 2,
                    record.len(),
                    signal_names.len() + 1
                )));
            }
            timestamps.push(parse_timestamp(record[0].trim(), line_no + 2)?);
            let mut row = Vec::with_capacity(signal_names.len());
            for field in record.iter().skip(1) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidFrame(format!(
                        "row {}: `{}` is not a number",
                        line_no + 2,
                        field
                    ))
                })?;
                row.push(v);
            }
            rows.push(row);
        }
        TimeSeriesFrame::from_rows(timestamps, signal_names, &rows)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        TimeSeriesFrame::read_csv(std::io::BufReader::new(file))
    }
}

fn parse_timestamp(field: &str, line: usize) -> Result<i64> {
    if let Ok(t) = field.parse::<i64>() {
        return Ok(t);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(field) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(field, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    Err(Error::InvalidFrame(format!(
        "row {line}: `{field}` is neither an integer nor an ISO-8601 timestamp"
    )))
}
