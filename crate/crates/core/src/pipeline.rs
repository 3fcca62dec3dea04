//! One planning pass: repair → detect → decompose → forecast → plan.

use serde::{Deserialize, Serialize};

use crate::config::{validate_against_step, AutoscalerSpec};
use crate::decompose::{decompose, Decomposition};
use crate::error::Result;
use crate::forecast::{compose_forecast, Forecast, ForecastParams};
use crate::ingest::{repair, truncate_retention, RepairParams, DEFAULT_RETENTION_MINUTES};
use crate::perfmodel::PerfModel;
use crate::planner::{plan, PlanInputs, ScalingPlan, DEFAULT_CONFIDENCE_MARGIN_RATIO, DEFAULT_CONFIDENCE_STRENGTH};
use crate::seasonality::{detect_periods, DetectParams, PeriodReport};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// History older than this many minutes before the last sample is dropped.
    pub retention_minutes: u32,
    pub repair: RepairParams,
    pub detect: DetectParams,
    pub forecast: ForecastParams,
    pub confidence_strength: f64,
    pub confidence_margin_ratio: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            retention_minutes: DEFAULT_RETENTION_MINUTES,
            repair: RepairParams::default(),
            detect: DetectParams::default(),
            forecast: ForecastParams::default(),
            confidence_strength: DEFAULT_CONFIDENCE_STRENGTH,
            confidence_margin_ratio: DEFAULT_CONFIDENCE_MARGIN_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRun {
    pub repaired: TimeSeries,
    pub periods: PeriodReport,
    pub decomposition: Decomposition,
    pub forecast: Forecast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub forecast: ForecastRun,
    pub plan: ScalingPlan,
}

/// Forecast the steps that follow the end of `history`, using only the
/// last `retention_minutes` of it.
///
/// A gap at the end of `history` is not filled: the forecast starts from the
/// last observed sample and the steps inside the gap are dropped.
pub fn forecast_series(history: &TimeSeries, options: &PipelineOptions) -> Result<ForecastRun> {
    let history = &truncate_retention(history, options.retention_minutes)?;
    let gap = history.values().iter().rev().take_while(|v| v.is_none()).count();
    let observed = if gap > 0 && gap < history.len() {
        history.slice(0, history.len() - gap)?
    } else {
        history.clone()
    };
    let repaired = repair(&observed, options.repair)?;
    let periods = detect_periods(&repaired, options.detect)?;
    let (repaired, periods) = match periods.periods.first() {
        Some(&period) if periods.is_periodic && !observed.is_complete() => {
            let refilled = seasonal_refill(&observed, &repaired, period)?;
            let periods = detect_periods(&refilled, options.detect)?;
            (refilled, periods)
        }
        _ => (repaired, periods),
    };
    let decomposition = decompose(&repaired, &periods)?;
    let mut params = options.forecast;
    params.horizon += observed.len().abs_diff(history.len());
    let mut forecast = compose_forecast(&decomposition, &params)?;
    let skip = params.horizon - options.forecast.horizon;
    forecast.point.drain(..skip);
    forecast.upper.drain(..skip);
    forecast.components.drain(..skip);
    forecast.horizon = options.forecast.horizon;
    Ok(ForecastRun {
        repaired,
        periods,
        decomposition,
        forecast,
    })
}

/// Replace interpolated gaps with the same phase of a neighbouring cycle.
///
/// The donor cycle is shifted so that the fill meets the observed samples on
/// both sides of the gap. Gaps without a fully observed donor keep their
/// interpolated values.
fn seasonal_refill(observed: &TimeSeries, repaired: &TimeSeries, period: usize) -> Result<TimeSeries> {
    let present: Vec<bool> = observed.values().iter().map(Option::is_some).collect();
    let mut values = repaired.dense()?;
    let n = values.len() as i64;
    let p = period as i64;
    let mut a = 0;
    while a < n {
        if present[a as usize] {
            a += 1;
            continue;
        }
        let b = (a..n).find(|&i| present[i as usize]).unwrap_or(n);
        let lo = if a > 0 { a - 1 } else { a };
        let hi = if b < n { b } else { b - 1 };
        let shift = [-p, p, -2 * p, 2 * p]
            .into_iter()
            .find(|s| (lo + s..=hi + s).all(|j| j >= 0 && j < n && present[j as usize]));
        if let Some(s) = shift {
            let offset = |i: i64| values[i as usize] - values[(i + s) as usize];
            let left = (a > 0).then(|| offset(a - 1));
            let right = (b < n).then(|| offset(b));
            let (left, right) = match (left, right) {
                (Some(l), Some(r)) => (l, r),
                (Some(l), None) => (l, l),
                (None, r) => (r.unwrap_or(0.0), r.unwrap_or(0.0)),
            };
            let span = (b - a + 1) as f64;
            for i in a..b {
                let w = (i - a + 1) as f64 / span;
                values[i as usize] = values[(i + s) as usize] + left + (right - left) * w;
            }
        }
        a = b;
    }
    if observed.metric().is_non_negative() {
        values.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    repaired.with_values(values.into_iter().map(Some).collect())
}

/// Forecast and plan the window starting right after `history`.
pub fn run(
    history: &TimeSeries,
    model: &PerfModel,
    spec: &AutoscalerSpec,
    options: &PipelineOptions,
    fallback: Option<u32>,
) -> Result<PipelineRun> {
    validate_against_step(spec, history.step_minutes())?;
    let forecast = forecast_series(history, options)?;
    let inputs = PlanInputs {
        start: history.time_at(history.len()),
        step_minutes: history.step_minutes(),
        period_strength: forecast.periods.is_periodic.then(|| forecast.periods.max_strength()),
        fallback,
        confidence_strength: options.confidence_strength,
        confidence_margin_ratio: options.confidence_margin_ratio,
    };
    let plan = plan(&forecast.forecast, model, spec, &inputs)?;
    Ok(PipelineRun { forecast, plan })
}
