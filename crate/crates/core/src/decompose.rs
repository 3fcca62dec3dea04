//! Robust additive decomposition: `y = trend + Σ seasonal_i + residual`.
//!
//! The trend is a centered moving median and each seasonal component is a
//! per-phase median, refined by backfitting for a fixed number of passes.
//! The residual is always the exact remainder, so reconstruction holds to
//! rounding error.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::seasonality::PeriodReport;
use crate::series::TimeSeries;
use crate::stats;

const BACKFIT_PASSES: usize = 3;
const MIN_TREND_ONLY_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    /// One component per entry of `periods`, longest period first.
    pub seasonals: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub periods: Vec<usize>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    pub fn seasonal_sum(&self, t: usize) -> f64 {
        self.seasonals.iter().map(|s| s[t]).sum()
    }

    /// `trend + Σ seasonals + residual` at every index.
    pub fn reconstruct(&self) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.trend[t] + self.seasonal_sum(t) + self.residual[t])
            .collect()
    }
}

fn odd_half_width(window: usize) -> usize {
    let odd = if window.is_multiple_of(2) { window + 1 } else { window };
    odd / 2
}

/// Robust straight line `intercept + slope·i` through `xs`: the slope is the
/// median of differences at half the span, the intercept the median offset.
fn robust_line(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 2 {
        return (0.0, xs.first().copied().unwrap_or(0.0));
    }
    let lag = n.div_ceil(2).min(n - 1);
    let mut diffs: Vec<f64> = (0..n - lag).map(|i| (xs[i + lag] - xs[i]) / lag as f64).collect();
    let slope = stats::median_in_place(&mut diffs);
    let mut offsets: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x - slope * i as f64).collect();
    (slope, stats::median_in_place(&mut offsets))
}

/// Moving-median trend over full windows. The first and last `half`
/// samples, where a centered window would be cut, follow a robust line
/// fitted to the adjoining half window instead.
fn robust_trend(xs: &[f64], half: usize) -> Vec<f64> {
    let n = xs.len();
    let mut trend = stats::moving_median(xs, half);
    if half == 0 || n < 2 * half + 2 {
        return trend;
    }
    let (slope, intercept) = robust_line(&xs[..=half]);
    for (t, v) in trend.iter_mut().enumerate().take(half) {
        *v = intercept + slope * t as f64;
    }
    let from = n - 1 - half;
    let (slope, intercept) = robust_line(&xs[from..]);
    for (j, v) in trend[from..].iter_mut().enumerate().skip(1) {
        *v = intercept + slope * j as f64;
    }
    trend
}

/// Replace the first and last `half` samples by straight lines continuing
/// the adjoining interior.
fn linear_edges(mut xs: Vec<f64>, half: usize) -> Vec<f64> {
    let n = xs.len();
    if half == 0 || n < 2 * half + 2 {
        return xs;
    }
    let (first, last) = (half, n - 1 - half);
    let reach = half.min(last - first);
    let left = (xs[first + reach] - xs[first]) / reach as f64;
    let right = (xs[last] - xs[last - reach]) / reach as f64;
    let (a, b) = (xs[first], xs[last]);
    for (t, v) in xs.iter_mut().enumerate().take(first) {
        *v = a - left * (first - t) as f64;
    }
    for (t, v) in xs.iter_mut().enumerate().skip(last + 1) {
        *v = b + right * (t - last) as f64;
    }
    xs
}

/// Seasonal component at `period`: per-phase medians of `xs`, mean-centred
/// over one cycle and tiled to the input length.
fn phase_median_component(xs: &[f64], period: usize) -> Vec<f64> {
    let mut profile: Vec<f64> = (0..period)
        .map(|phase| {
            let mut bucket: Vec<f64> = xs.iter().skip(phase).step_by(period).copied().collect();
            stats::median_in_place(&mut bucket)
        })
        .collect();
    let m = stats::mean(&profile);
    profile.iter_mut().for_each(|p| *p -= m);
    (0..xs.len()).map(|t| profile[t % period]).collect()
}

/// Periodic branch. `periods` may be given in any order; components are
/// extracted longest first.
pub fn decompose_periodic(series: &TimeSeries, periods: &[usize]) -> Result<Decomposition> {
    let y = series.dense()?;
    decompose_periodic_values(&y, periods)
}

pub fn decompose_periodic_values(y: &[f64], periods: &[usize]) -> Result<Decomposition> {
    let n = y.len();
    if periods.is_empty() {
        return Err(EngineError::invalid_config(
            "periodic decomposition needs at least one period",
        ));
    }
    if let Some(&p) = periods.iter().find(|&&p| p < 2 || 2 * p > n) {
        return Err(EngineError::insufficient_data(format!(
            "period {p} needs two full cycles but the series has {n} samples"
        )));
    }
    let mut order = periods.to_vec();
    order.sort_unstable_by(|a, b| b.cmp(a));
    order.dedup();
    let half = odd_half_width(order[0]);

    // Seed the seasonals against a one-period moving average, which cancels
    // a periodic component exactly and passes a ramp through unchanged.
    let smooth = linear_edges(stats::moving_average(y, order[0]), order[0] / 2);
    let mut seasonals: Vec<Vec<f64>> = Vec::with_capacity(order.len());
    for &p in &order {
        let partial: Vec<f64> = (0..n)
            .map(|t| y[t] - smooth[t] - seasonals.iter().map(|s| s[t]).sum::<f64>())
            .collect();
        seasonals.push(phase_median_component(&partial, p));
    }
    let mut trend = vec![0.0; n];
    for _ in 0..BACKFIT_PASSES {
        let deseasoned: Vec<f64> = (0..n)
            .map(|t| y[t] - seasonals.iter().map(|s| s[t]).sum::<f64>())
            .collect();
        trend = robust_trend(&deseasoned, half);
        for i in 0..order.len() {
            let partial: Vec<f64> = (0..n)
                .map(|t| {
                    let others: f64 = seasonals
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, s)| s[t])
                        .sum();
                    y[t] - trend[t] - others
                })
                .collect();
            seasonals[i] = phase_median_component(&partial, order[i]);
        }
    }
    let residual = (0..n)
        .map(|t| y[t] - trend[t] - seasonals.iter().map(|s| s[t]).sum::<f64>())
        .collect();
    Ok(Decomposition {
        trend,
        seasonals,
        residual,
        periods: order,
    })
}

/// Non-periodic branch: moving-median trend plus residual.
pub fn decompose_trend_only(series: &TimeSeries) -> Result<Decomposition> {
    let y = series.dense()?;
    decompose_trend_only_values(&y)
}

pub fn decompose_trend_only_values(y: &[f64]) -> Result<Decomposition> {
    let n = y.len();
    if n < MIN_TREND_ONLY_LEN {
        return Err(EngineError::insufficient_data(format!(
            "trend decomposition needs at least {MIN_TREND_ONLY_LEN} samples, got {n}"
        )));
    }
    let window = MIN_TREND_ONLY_LEN.max(n.div_ceil(20));
    let trend = robust_trend(y, odd_half_width(window));
    let residual = y.iter().zip(&trend).map(|(v, t)| v - t).collect();
    Ok(Decomposition {
        trend,
        seasonals: Vec::new(),
        residual,
        periods: Vec::new(),
    })
}

/// Pick the branch from a period report.
pub fn decompose(series: &TimeSeries, report: &PeriodReport) -> Result<Decomposition> {
    if report.is_periodic {
        decompose_periodic(series, &report.periods)
    } else {
        decompose_trend_only(series)
    }
}
