//! Metrics export. CSV and JSON carry the same rows in the same order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, write_file, HarnessError};

pub const CSV_HEADER: [&str; 8] = ["instance_id", "method", "uavs", "interval", "seed", "time_s", "return", "collisions"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub instance_id: usize,
    pub method: String,
    pub uavs: usize,
    pub interval: usize,
    pub seed: u64,
    /// Decision time only.
    pub time_s: f64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub collisions: u64,
}

pub fn metrics_csv(rows: &[MetricRow]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::Config(format!("unexpected metrics header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<(), HarnessError> {
    write_file(path, metrics_csv(rows)?.as_bytes())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>, HarnessError> {
    parse_metrics_csv(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn metrics_json(rows: &[MetricRow]) -> Result<String, HarnessError> {
    Ok(serde_json::to_string_pretty(rows)?)
}

pub fn write_metrics_json(path: &Path, rows: &[MetricRow]) -> Result<(), HarnessError> {
    write_file(path, metrics_json(rows)?.as_bytes())
}

/// Writes any serialisable value as pretty JSON.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    write_file(path, serde_json::to_string_pretty(value)?.as_bytes())
}
