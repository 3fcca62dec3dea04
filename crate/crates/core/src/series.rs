//! The uniformly gridded metric series every pipeline stage consumes.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// Minutes since the Unix epoch (UTC).
pub type EpochMinute = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricKind {
    #[default]
    CpuUtilizationPercent,
    Qps,
    RtMilliseconds,
    MemoryPercent,
    Custom,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::CpuUtilizationPercent => "CPU_UTILIZATION_PERCENT",
            MetricKind::Qps => "QPS",
            MetricKind::RtMilliseconds => "RT_MILLISECONDS",
            MetricKind::MemoryPercent => "MEMORY_PERCENT",
            MetricKind::Custom => "CUSTOM",
        }
    }

    /// Percentages and arrival rates cannot go negative.
    pub fn is_non_negative(self) -> bool {
        matches!(
            self,
            MetricKind::CpuUtilizationPercent | MetricKind::Qps | MetricKind::MemoryPercent
        )
    }

    pub fn is_utilization(self) -> bool {
        matches!(self, MetricKind::CpuUtilizationPercent | MetricKind::MemoryPercent)
    }
}

impl std::str::FromStr for MetricKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CPU_UTILIZATION_PERCENT" | "CPU" => Ok(MetricKind::CpuUtilizationPercent),
            "QPS" => Ok(MetricKind::Qps),
            "RT_MILLISECONDS" | "RT" => Ok(MetricKind::RtMilliseconds),
            "MEMORY_PERCENT" | "MEMORY" => Ok(MetricKind::MemoryPercent),
            "CUSTOM" => Ok(MetricKind::Custom),
            other => Err(EngineError::invalid_config(format!("unknown metric kind `{other}`"))),
        }
    }
}

/// Metric samples on a uniform grid. `None` marks a missing sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    start: EpochMinute,
    step_minutes: u32,
    values: Vec<Option<f64>>,
    metric: MetricKind,
}

impl TimeSeries {
    pub fn new(start: EpochMinute, step_minutes: u32, values: Vec<Option<f64>>, metric: MetricKind) -> Result<Self> {
        if values.is_empty() {
            return Err(EngineError::degenerate_series("series has no samples"));
        }
        if step_minutes == 0 {
            return Err(EngineError::invalid_config("series step must be positive"));
        }
        if let Some(bad) = values.iter().flatten().find(|v| !v.is_finite()) {
            return Err(EngineError::degenerate_series(format!("non-finite sample {bad}")));
        }
        if metric.is_non_negative() {
            if let Some(bad) = values.iter().flatten().find(|v| **v < 0.0) {
                return Err(EngineError::degenerate_series(format!(
                    "negative sample {bad} for {}",
                    metric.as_str()
                )));
            }
        }
        Ok(Self {
            start,
            step_minutes,
            values,
            metric,
        })
    }

    /// Complete series at one-minute resolution.
    pub fn from_values(start: EpochMinute, values: &[f64], metric: MetricKind) -> Result<Self> {
        Self::new(start, 1, values.iter().copied().map(Some).collect(), metric)
    }

    pub fn start(&self) -> EpochMinute {
        self.start
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn time_at(&self, index: usize) -> EpochMinute {
        self.start + index as i64 * self.step_minutes as i64
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// Dense values; fails with `INSUFFICIENT_DATA` if any sample is missing.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .map(|v| v.ok_or_else(|| EngineError::insufficient_data("series has missing samples; repair it first")))
            .collect()
    }

    /// Sub-series `[from, to)` by index.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        let to = to.min(self.values.len());
        if from >= to {
            return Err(EngineError::insufficient_data(format!("empty slice [{from}, {to})")));
        }
        Ok(Self {
            start: self.time_at(from),
            step_minutes: self.step_minutes,
            values: self.values[from..to].to_vec(),
            metric: self.metric,
        })
    }

    pub fn with_values(&self, values: Vec<Option<f64>>) -> Result<Self> {
        Self::new(self.start, self.step_minutes, values, self.metric)
    }
}
