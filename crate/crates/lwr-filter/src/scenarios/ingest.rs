//! Loop-detector CSV ingestion.
//!
//! Expected header: `timestamp,sensor_id,occupancy_pct,flow_vph,speed_mps`
//! with timestamps as ISO-8601 or integer seconds, UTF-8, comma-delimited;
//! `speed_mps` may be empty. Extra columns (the synthetic-export truth
//! columns) are ignored. Malformed rows are skipped and reported; frames
//! are aligned to the configured observation interval with gaps reported.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::occupancy_to_density;
use crate::filter::ObservationFrame;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv structure error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no valid sensor rows in {0}")]
    Empty(String),
    #[error("timestamps are not non-decreasing at line {line}: {timestamp}")]
    NonMonotoneTimestamps { line: u64, timestamp: String },
    #[error("duplicate reading for sensor '{sensor}' at timestamp {timestamp}")]
    DuplicateReading { sensor: String, timestamp: String },
    #[error("sensor map references no interior cells")]
    NoInteriorSensors,
    #[error("boundary density for the {side} side is available neither from a sensor nor as a default")]
    MissingBoundary { side: &'static str },
    #[error("invalid observation interval {0} s")]
    InvalidInterval(f64),
}

/// One raw CSV row.
#[derive(Debug, Clone, Deserialize)]
pub struct SensorRecord {
    pub timestamp: String,
    pub sensor_id: String,
    pub occupancy_pct: f64,
    pub flow_vph: f64,
    #[serde(default)]
    pub speed_mps: Option<f64>,
}

/// How sensor ids map onto the road model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub observation_interval_s: f64,
    /// Effective vehicle length for occupancy conversion, meters.
    pub vehicle_length_m: f64,
    /// Per-sensor overrides of the vehicle length.
    #[serde(default)]
    pub vehicle_length_overrides: BTreeMap<String, f64>,
    /// sensor_id -> interior cell index (1-based).
    pub cell_sensors: BTreeMap<String, usize>,
    /// Sensor feeding the upstream boundary density, if any.
    #[serde(default)]
    pub left_boundary_sensor: Option<String>,
    #[serde(default)]
    pub right_boundary_sensor: Option<String>,
    /// Constant boundary densities used when no sensor covers a side.
    #[serde(default)]
    pub default_boundary_left: Option<f64>,
    #[serde(default)]
    pub default_boundary_right: Option<f64>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            observation_interval_s: 300.0,
            vehicle_length_m: 6.5,
            vehicle_length_overrides: BTreeMap::new(),
            cell_sensors: BTreeMap::new(),
            left_boundary_sensor: None,
            right_boundary_sensor: None,
            default_boundary_left: None,
            default_boundary_right: None,
        }
    }
}

/// Ingestion output: time-ordered frames plus everything that went wrong.
#[derive(Debug)]
pub struct IngestReport {
    pub frames: Vec<ObservationFrame>,
    /// Interior cells covered, increasing; pairs with the frame values.
    pub sensor_cells: Vec<usize>,
    /// (line number, reason) for every skipped row or dropped frame;
    /// line 0 marks frame-level drops that have no single source row.
    pub skipped: Vec<(u64, String)>,
    /// Frame times missing from the stream (holes in the interval grid).
    pub gap_times_s: Vec<f64>,
}

/// Parse a timestamp as integer/fractional seconds or ISO-8601.
fn parse_timestamp(raw: &str) -> Option<f64> {
    let trimmed = raw.trim();
    if let Ok(seconds) = trimmed.parse::<f64>() {
        return seconds.is_finite().then_some(seconds);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(trimmed) {
        return Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%dT%H:%M:%S") {
        return Some(naive.and_utc().timestamp() as f64);
    }
    if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%d %H:%M:%S") {
        return Some(naive.and_utc().timestamp() as f64);
    }
    None
}

/// Read a sensor CSV into observation frames.
pub fn ingest_sensor_csv(path: &Path, config: &IngestConfig) -> Result<IngestReport, IngestError> {
    if !(config.observation_interval_s > 0.0) {
        return Err(IngestError::InvalidInterval(config.observation_interval_s));
    }
    if config.cell_sensors.is_empty() {
        return Err(IngestError::NoInteriorSensors);
    }
    if config.left_boundary_sensor.is_none() && config.default_boundary_left.is_none() {
        return Err(IngestError::MissingBoundary { side: "left" });
    }
    if config.right_boundary_sensor.is_none() && config.default_boundary_right.is_none() {
        return Err(IngestError::MissingBoundary { side: "right" });
    }

    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IngestError::Csv(e),
        })?;

    let mut skipped = Vec::new();
    // time -> sensor -> density
    let mut buckets: BTreeMap<i64, BTreeMap<String, f64>> = BTreeMap::new();
    let mut last_time: Option<f64> = None;
    let mut any_valid = false;

    for (row_index, row) in reader.deserialize::<SensorRecord>().enumerate() {
        let line = row_index as u64 + 2; // header is line 1
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                skipped.push((line, format!("unparseable row: {e}")));
                continue;
            }
        };
        let Some(t) = parse_timestamp(&record.timestamp) else {
            skipped.push((line, format!("bad timestamp '{}'", record.timestamp)));
            continue;
        };
        if let Some(prev) = last_time
            && t < prev
        {
            return Err(IngestError::NonMonotoneTimestamps {
                line,
                timestamp: record.timestamp.clone(),
            });
        }
        last_time = Some(t);

        let relevant = config.cell_sensors.contains_key(&record.sensor_id)
            || config.left_boundary_sensor.as_deref() == Some(record.sensor_id.as_str())
            || config.right_boundary_sensor.as_deref() == Some(record.sensor_id.as_str());
        if !relevant {
            continue;
        }
        if record.flow_vph < 0.0 {
            skipped.push((line, format!("negative flow {}", record.flow_vph)));
            continue;
        }
        let length = config
            .vehicle_length_overrides
            .get(&record.sensor_id)
            .copied()
            .unwrap_or(config.vehicle_length_m);
        let density = match occupancy_to_density(record.occupancy_pct, length) {
            Ok(d) => d,
            Err(e) => {
                skipped.push((line, e.to_string()));
                continue;
            }
        };
        any_valid = true;
        // Key buckets by milliseconds to keep exact-duplicate detection
        // independent of float formatting.
        let key = (t * 1000.0).round() as i64;
        let bucket = buckets.entry(key).or_default();
        if bucket.insert(record.sensor_id.clone(), density).is_some() {
            return Err(IngestError::DuplicateReading {
                sensor: record.sensor_id,
                timestamp: record.timestamp,
            });
        }
    }

    if !any_valid {
        return Err(IngestError::Empty(path.display().to_string()));
    }

    let mut sensor_cells: Vec<usize> = config.cell_sensors.values().copied().collect();
    sensor_cells.sort_unstable();
    sensor_cells.dedup();
    // cell -> sensor id, in cell order
    let mut cell_to_sensor: BTreeMap<usize, &String> = BTreeMap::new();
    for (sensor, &cell) in &config.cell_sensors {
        cell_to_sensor.insert(cell, sensor);
    }

    let mut frames = Vec::new();
    let mut gap_times_s = Vec::new();
    let t0 = *buckets.keys().next().unwrap() as f64 / 1000.0;
    let interval = config.observation_interval_s;
    let mut expected = t0;
    for (&key, readings) in &buckets {
        let t = key as f64 / 1000.0;
        // Record holes in the interval grid between this frame and the
        // previous one.
        while t > expected + 1e-6 {
            gap_times_s.push(expected);
            expected += interval;
        }
        expected = t + interval;

        let mut values = Vec::with_capacity(sensor_cells.len());
        let mut missing = None;
        for &cell in &sensor_cells {
            let sensor = cell_to_sensor[&cell];
            match readings.get(sensor) {
                Some(&d) => values.push(d),
                None => {
                    missing = Some(sensor.clone());
                    break;
                }
            }
        }
        let boundary = |sensor: &Option<String>, default: Option<f64>| {
            sensor
                .as_ref()
                .and_then(|s| readings.get(s).copied())
                .or(default)
        };
        let left = boundary(&config.left_boundary_sensor, config.default_boundary_left);
        let right = boundary(&config.right_boundary_sensor, config.default_boundary_right);
        match (missing, left, right) {
            (None, Some(boundary_left), Some(boundary_right)) => frames.push(ObservationFrame {
                time_s: t,
                values,
                boundary_left,
                boundary_right,
            }),
            (missing, left, _right) => {
                let what = missing.unwrap_or_else(|| {
                    if left.is_none() { "left boundary sensor" } else { "right boundary sensor" }
                        .to_string()
                });
                skipped.push((0, format!("frame at t={t} s dropped: no reading from {what}")));
                gap_times_s.push(t);
            }
        }
    }

    if frames.is_empty() {
        return Err(IngestError::Empty(path.display().to_string()));
    }
    Ok(IngestReport {
        frames,
        sensor_cells,
        skipped,
        gap_times_s,
    })
}
