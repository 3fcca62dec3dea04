//! Trace ingestion: parse CSV / JSON-lines metric files, bucket them onto a
//! uniform grid and repair gaps and outliers.

use std::path::{Path, PathBuf};

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::series::{MetricKind, TimeSeries};
use crate::stats::{self, MAD_SCALE};

/// Normal-consistency factor for the mean absolute deviation.
const MEAN_AD_SCALE: f64 = 1.2533;

pub const DEFAULT_MAX_MISSING_RATIO: f64 = 0.3;
pub const DEFAULT_Z_THRESHOLD: f64 = 5.0;
/// Seven days.
pub const DEFAULT_RETENTION_MINUTES: u32 = 7 * 1440;

const MAX_REPAIR_ROUNDS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    /// Unix epoch seconds.
    pub timestamp: i64,
    pub metric_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawTrace {
    pub rows: Vec<TraceRow>,
    pub source_path: PathBuf,
    pub metric: MetricKind,
    /// Rows that could not be parsed and were dropped.
    pub skipped_rows: usize,
}

fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp())
}

fn parse_value(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn looks_like_jsonl(path: &Path, text: &str) -> bool {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") | Some("json") => true,
        Some("csv") => false,
        _ => text.trim_start().starts_with('{'),
    }
}

fn parse_csv(text: &str, metric: MetricKind) -> Result<(Vec<TraceRow>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| EngineError::io_failure(format!("csv header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok((Vec::new(), 0));
    }
    let ts_col = headers.iter().position(|h| h == "timestamp");
    let val_col = headers.iter().position(|h| h == "value");
    let (Some(ts_col), Some(val_col)) = (ts_col, val_col) else {
        return Err(EngineError::io_failure(format!(
            "csv header must be `timestamp,value`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    };
    let mut rows = Vec::new();
    let mut skipped = 0;
    for record in reader.records() {
        let parsed = record.ok().and_then(|r| {
            let ts = parse_timestamp(r.get(ts_col)?)?;
            let v = parse_value(r.get(val_col)?)?;
            Some((ts, v))
        });
        match parsed {
            Some((timestamp, value)) => rows.push(TraceRow {
                timestamp,
                metric_name: metric.as_str().to_string(),
                value,
            }),
            None => skipped += 1,
        }
    }
    Ok((rows, skipped))
}

fn parse_jsonl(text: &str, metric: MetricKind) -> (Vec<TraceRow>, usize) {
    let mut rows = Vec::new();
    let mut skipped = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed = serde_json::from_str::<serde_json::Value>(line).ok().and_then(|v| {
            let ts = match v.get("ts")? {
                serde_json::Value::Number(n) => n.as_i64()?,
                serde_json::Value::String(s) => parse_timestamp(s)?,
                _ => return None,
            };
            let value = v.get("value")?.as_f64().filter(|x| x.is_finite())?;
            Some((ts, value))
        });
        match parsed {
            Some((timestamp, value)) => rows.push(TraceRow {
                timestamp,
                metric_name: metric.as_str().to_string(),
                value,
            }),
            None => skipped += 1,
        }
    }
    (rows, skipped)
}

/// Read a metric trace from a CSV (`timestamp,value`) or JSON-lines
/// (`{"ts": .., "value": ..}`) file.
pub fn read_trace(path: &Path, metric: MetricKind) -> Result<RawTrace> {
    let text =
        std::fs::read_to_string(path).map_err(|e| EngineError::io_failure(format!("{}: {e}", path.display())))?;
    let (rows, skipped_rows) = if looks_like_jsonl(path, &text) {
        parse_jsonl(&text, metric)
    } else {
        parse_csv(&text, metric)?
    };
    if rows.is_empty() {
        return Err(EngineError::degenerate_series(format!(
            "{}: no parseable rows",
            path.display()
        )));
    }
    Ok(RawTrace {
        rows,
        source_path: path.to_path_buf(),
        metric,
        skipped_rows,
    })
}

/// Bucket rows onto the grid `[min_ts, max_ts]` with `step_minutes`
/// spacing. Duplicate buckets are averaged; empty buckets are missing.
pub fn regularize(raw: &RawTrace, step_minutes: u32) -> Result<TimeSeries> {
    if step_minutes == 0 {
        return Err(EngineError::invalid_config("step must be positive"));
    }
    let (Some(min_ts), Some(max_ts)) = (
        raw.rows.iter().map(|r| r.timestamp).min(),
        raw.rows.iter().map(|r| r.timestamp).max(),
    ) else {
        return Err(EngineError::degenerate_series("trace has no rows"));
    };
    let step_secs = step_minutes as i64 * 60;
    let len = ((max_ts - min_ts) / step_secs + 1) as usize;
    let mut sums = vec![0.0; len];
    let mut counts = vec![0u32; len];
    for r in &raw.rows {
        let idx = ((r.timestamp - min_ts) / step_secs) as usize;
        sums[idx] += r.value;
        counts[idx] += 1;
    }
    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect();
    TimeSeries::new(min_ts.div_euclid(60), step_minutes, values, raw.metric)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairParams {
    pub max_missing_ratio: f64,
    pub z_threshold: f64,
}

impl Default for RepairParams {
    fn default() -> Self {
        Self {
            max_missing_ratio: DEFAULT_MAX_MISSING_RATIO,
            z_threshold: DEFAULT_Z_THRESHOLD,
        }
    }
}

/// Linear interpolation between nearest present neighbours; edge gaps take
/// the nearest present value. Requires at least one present value.
pub(crate) fn interpolate(values: &[Option<f64>]) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    let mut prev: Option<usize> = None;
    let mut i = 0;
    while i < n {
        if let Some(v) = values[i] {
            out[i] = v;
            prev = Some(i);
            i += 1;
            continue;
        }
        let next = (i..n).find(|&j| values[j].is_some());
        let gap_end = next.unwrap_or(n);
        for (k, slot) in out.iter_mut().enumerate().take(gap_end).skip(i) {
            *slot = match (prev, next) {
                (Some(p), Some(q)) => {
                    let (a, b) = (values[p].unwrap(), values[q].unwrap());
                    a + (b - a) * (k - p) as f64 / (q - p) as f64
                }
                (Some(p), None) => values[p].unwrap(),
                (None, Some(q)) => values[q].unwrap(),
                (None, None) => unreachable!("interpolate needs a present value"),
            };
        }
        i = gap_end;
    }
    out
}

/// Fill gaps by interpolation without touching present samples.
pub fn fill_gaps(series: &TimeSeries) -> Result<Vec<f64>> {
    if series.values().iter().all(Option::is_none) {
        return Err(EngineError::insufficient_data("series has no present samples"));
    }
    Ok(interpolate(series.values()))
}

/// Robust z-score scale: 1.4826·MAD, or 1.2533·(mean absolute deviation)
/// when the MAD collapses to zero. Zero means the data are constant.
fn robust_scale(xs: &[f64], center: f64) -> f64 {
    let mad = stats::mad(xs, center);
    if mad > 0.0 {
        return MAD_SCALE * mad;
    }
    let mean_ad = xs.iter().map(|x| (x - center).abs()).sum::<f64>() / xs.len() as f64;
    MEAN_AD_SCALE * mean_ad
}

/// Fill missing samples and replace outliers by interpolation of their
/// neighbours. Outlier screening repeats until the filled series contains
/// no sample beyond `z_threshold`, so the output is a fixed point.
pub fn repair(series: &TimeSeries, params: RepairParams) -> Result<TimeSeries> {
    let n = series.len();
    let missing = series.missing_count();
    let ratio = missing as f64 / n as f64;
    if ratio > params.max_missing_ratio {
        return Err(EngineError::insufficient_data(format!(
            "missing ratio {ratio:.3} exceeds {:.3}",
            params.max_missing_ratio
        )));
    }
    if n - missing < 2 {
        return Err(EngineError::insufficient_data("fewer than 2 present samples"));
    }
    let mut work: Vec<Option<f64>> = series.values().to_vec();
    let mut filled = interpolate(&work);
    for _ in 0..MAX_REPAIR_ROUNDS {
        let center = stats::median(&filled);
        let scale = robust_scale(&filled, center);
        if scale == 0.0 {
            break;
        }
        let mut flagged = 0;
        for (slot, x) in work.iter_mut().zip(&filled) {
            if slot.is_some() && (x - center).abs() / scale > params.z_threshold {
                *slot = None;
                flagged += 1;
            }
        }
        if flagged == 0 || work.iter().all(Option::is_none) {
            break;
        }
        filled = interpolate(&work);
    }
    series.with_values(filled.into_iter().map(Some).collect())
}

/// Drop samples older than `retention_minutes` before the last sample.
pub fn truncate_retention(series: &TimeSeries, retention_minutes: u32) -> Result<TimeSeries> {
    let keep = (retention_minutes / series.step_minutes()).max(1) as usize;
    if series.len() <= keep {
        return Ok(series.clone());
    }
    series.slice(series.len() - keep, series.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(name: &str, body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::fs::File::create(&path)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        (dir, path)
    }

    fn series(vals: &[Option<f64>]) -> TimeSeries {
        TimeSeries::new(0, 1, vals.to_vec(), MetricKind::Qps).unwrap()
    }

    #[test]
    fn reads_epoch_csv() {
        let (_d, p) = write_tmp("t.csv", "timestamp,value\n0,1.5\n60,2\n120,3\n");
        let raw = read_trace(&p, MetricKind::Qps).unwrap();
        assert_eq!(raw.rows.len(), 3);
        assert_eq!(raw.skipped_rows, 0);
        assert_eq!(raw.rows[1].value, 2.0);
    }

    #[test]
    fn reads_rfc3339_and_skips_malformed() {
        let mut body = String::from("timestamp,value\n");
        for i in 0..100 {
            if i == 37 {
                body.push_str("not-a-time,4\n");
            } else {
                body.push_str(&format!("2021-04-01T00:{:02}:00Z,{}\n", i % 60, i));
            }
        }
        let (_d, p) = write_tmp("t.csv", &body);
        let raw = read_trace(&p, MetricKind::Qps).unwrap();
        assert_eq!(raw.rows.len(), 99);
        assert_eq!(raw.skipped_rows, 1);
        assert_eq!(raw.rows[0].timestamp, 1_617_235_200);
    }

    #[test]
    fn reads_jsonl() {
        let (_d, p) = write_tmp(
            "t.jsonl",
            "{\"ts\": 0, \"value\": 1}\n{\"ts\": \"1970-01-01T00:01:00Z\", \"value\": 2.5}\n{oops\n",
        );
        let raw = read_trace(&p, MetricKind::Qps).unwrap();
        assert_eq!(raw.rows.len(), 2);
        assert_eq!(raw.rows[1].timestamp, 60);
        assert_eq!(raw.skipped_rows, 1);
    }

    #[test]
    fn empty_file_is_degenerate() {
        let (_d, p) = write_tmp("e.csv", "");
        assert_eq!(
            read_trace(&p, MetricKind::Qps).unwrap_err().kind,
            ErrorKind::DegenerateSeries
        );
        let (_d, p) = write_tmp("h.csv", "timestamp,value\n");
        assert_eq!(
            read_trace(&p, MetricKind::Qps).unwrap_err().kind,
            ErrorKind::DegenerateSeries
        );
    }

    #[test]
    fn missing_file_is_io_failure() {
        let e = read_trace(Path::new("/nonexistent/trace.csv"), MetricKind::Qps).unwrap_err();
        assert_eq!(e.kind, ErrorKind::IoFailure);
    }

    fn raw(rows: &[(i64, f64)]) -> RawTrace {
        RawTrace {
            rows: rows
                .iter()
                .map(|&(timestamp, value)| TraceRow {
                    timestamp,
                    metric_name: "QPS".into(),
                    value,
                })
                .collect(),
            source_path: PathBuf::new(),
            metric: MetricKind::Qps,
            skipped_rows: 0,
        }
    }

    #[test]
    fn regularize_uniform_gap_and_duplicates() {
        let s = regularize(&raw(&[(0, 1.0), (60, 2.0), (120, 3.0)]), 1).unwrap();
        assert_eq!(s.values(), &[Some(1.0), Some(2.0), Some(3.0)]);

        let s = regularize(&raw(&[(120, 3.0), (0, 1.0)]), 1).unwrap();
        assert_eq!(s.values(), &[Some(1.0), None, Some(3.0)]);

        let s = regularize(&raw(&[(0, 4.0), (30, 6.0)]), 1).unwrap();
        assert_eq!(s.values(), &[Some(5.0)]);
    }

    #[test]
    fn repair_midpoint() {
        let params = RepairParams {
            max_missing_ratio: 0.5,
            ..Default::default()
        };
        let s = repair(&series(&[Some(1.0), None, Some(3.0)]), params).unwrap();
        assert_eq!(s.dense().unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn repair_spike_with_zero_mad() {
        let vals: Vec<Option<f64>> = [5.0, 5.0, 5.0, 500.0, 5.0, 5.0].into_iter().map(Some).collect();
        let params = RepairParams {
            z_threshold: 3.0,
            ..Default::default()
        };
        let s = repair(&series(&vals), params).unwrap();
        assert_eq!(s.dense().unwrap(), vec![5.0; 6]);
    }

    #[test]
    fn repair_rejects_too_many_missing() {
        let vals: Vec<Option<f64>> = (0..10).map(|i| (i >= 4).then_some(i as f64)).collect();
        let e = repair(&series(&vals), RepairParams::default()).unwrap_err();
        assert_eq!(e.kind, ErrorKind::InsufficientData);

        let e = repair(&series(&[Some(1.0)]), RepairParams::default()).unwrap_err();
        assert_eq!(e.kind, ErrorKind::InsufficientData);
    }

    #[test]
    fn repair_fills_edges_with_nearest() {
        let s = repair(
            &series(&[None, Some(2.0), Some(4.0), Some(3.0), None]),
            RepairParams {
                max_missing_ratio: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.dense().unwrap(), vec![2.0, 2.0, 4.0, 3.0, 3.0]);
    }

    #[test]
    fn regularize_grid_length() {
        let s = regularize(&raw(&[(0, 1.0), (599, 1.0)]), 3).unwrap();
        assert_eq!(s.len(), (599 / 180 + 1) as usize);
    }

    #[test]
    fn retention_keeps_tail() {
        let s = TimeSeries::from_values(0, &[1.0, 2.0, 3.0, 4.0], MetricKind::Qps).unwrap();
        let t = truncate_retention(&s, 2).unwrap();
        assert_eq!(t.start(), 2);
        assert_eq!(t.dense().unwrap(), vec![3.0, 4.0]);
    }

    fn noisy_series() -> impl Strategy<Value = Vec<Option<f64>>> {
        (
            proptest::collection::vec(-3.0f64..3.0, 30..200),
            proptest::collection::vec((0usize..200, 50.0f64..500.0), 0..4),
            proptest::collection::vec(0usize..200, 0..8),
        )
            .prop_map(|(noise, spikes, holes)| {
                let n = noise.len();
                let mut v: Vec<Option<f64>> = noise.iter().map(|e| Some(100.0 + e)).collect();
                for (i, m) in spikes {
                    v[i % n] = Some(100.0 + m);
                }
                for i in holes {
                    v[i % n] = None;
                }
                v
            })
    }

    proptest! {
        #[test]
        fn repair_is_idempotent(vals in noisy_series()) {
            let s = series(&vals);
            let once = repair(&s, RepairParams::default()).unwrap();
            let twice = repair(&once, RepairParams::default()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn repair_keeps_inliers(vals in noisy_series()) {
            let s = series(&vals);
            let filled = interpolate(&vals);
            let center = stats::median(&filled);
            let scale = robust_scale(&filled, center);
            let out = repair(&s, RepairParams::default()).unwrap().dense().unwrap();
            for (orig, new) in vals.iter().zip(&out) {
                if let Some(x) = orig {
                    if (x - center).abs() / scale <= DEFAULT_Z_THRESHOLD {
                        prop_assert_eq!(x, new);
                    }
                }
            }
        }

        #[test]
        fn regularize_length_formula(ts in proptest::collection::vec(0i64..100_000, 1..50), step in 1u32..10) {
            let r = raw(&ts.iter().map(|&t| (t, 1.0)).collect::<Vec<_>>());
            let s = regularize(&r, step).unwrap();
            let (lo, hi) = (*ts.iter().min().unwrap(), *ts.iter().max().unwrap());
            prop_assert_eq!(s.len() as i64, (hi - lo) / (step as i64 * 60) + 1);
        }
    }
}
