//! Component-wise forecast: repeat the last seasonal cycle, extrapolate the
//! trend with Holt's linear smoothing and widen by an empirical upper
//! quantile of the residuals.

use serde::{Deserialize, Serialize};

use crate::decompose::Decomposition;
use crate::error::{EngineError, Result};
use crate::stats;

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_QUANTILE: f64 = 0.95;
const MIN_RESIDUALS: usize = 20;

/// Holt's linear exponential smoothing fitted over `trend`, with level
/// initialised to `trend[0]` and slope to `trend[1] - trend[0]`. Returns the
/// forecasts for steps `1..=horizon` past the last sample.
pub fn forecast_trend(trend: &[f64], horizon: usize, alpha: f64, beta: f64) -> Result<Vec<f64>> {
    if trend.len() < 2 {
        return Err(EngineError::insufficient_data(
            "trend forecasting needs at least 2 samples",
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(EngineError::invalid_config(format!(
            "smoothing parameters must lie in (0, 1), got alpha={alpha} beta={beta}"
        )));
    }
    let mut level = trend[0];
    let mut slope = trend[1] - trend[0];
    for &y in &trend[1..] {
        let prev = level;
        level = alpha * y + (1.0 - alpha) * (level + slope);
        slope = beta * (level - prev) + (1.0 - beta) * slope;
    }
    Ok((1..=horizon).map(|h| level + h as f64 * slope).collect())
}

/// Sum of seasonal components continued past their end: component `i`
/// repeats its last full cycle of length `periods[i]`.
pub fn shift_seasonal(seasonals: &[Vec<f64>], periods: &[usize], horizon: usize) -> Result<Vec<f64>> {
    if seasonals.len() != periods.len() {
        return Err(EngineError::invalid_config(
            "one period is required per seasonal component",
        ));
    }
    let mut out = vec![0.0; horizon];
    for (component, &p) in seasonals.iter().zip(periods) {
        let n = component.len();
        if p == 0 || n < p {
            return Err(EngineError::insufficient_data(format!(
                "seasonal component of length {n} is shorter than its period {p}"
            )));
        }
        let last_cycle = &component[n - p..];
        for (h, slot) in out.iter_mut().enumerate() {
            *slot += last_cycle[h % p];
        }
    }
    Ok(out)
}

/// Constant upper margin: nearest-rank `quantile` of the residuals, floored
/// at zero.
pub fn residual_margin(residual: &[f64], quantile: f64, horizon: usize) -> Result<Vec<f64>> {
    if residual.len() < MIN_RESIDUALS {
        return Err(EngineError::insufficient_data(format!(
            "residual margin needs at least {MIN_RESIDUALS} samples, got {}",
            residual.len()
        )));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(EngineError::invalid_config(format!(
            "quantile must lie in (0, 1), got {quantile}"
        )));
    }
    let margin = stats::nearest_rank_quantile(residual, quantile).max(0.0);
    Ok(vec![margin; horizon])
}

/// Maps residual history to a per-step margin. The default is
/// [`residual_margin`]; other estimators can be plugged in.
pub trait MarginEstimator {
    fn margin(&self, residual: &[f64], quantile: f64, horizon: usize) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmpiricalQuantile;

impl MarginEstimator for EmpiricalQuantile {
    fn margin(&self, residual: &[f64], quantile: f64, horizon: usize) -> Result<Vec<f64>> {
        residual_margin(residual, quantile, horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastParams {
    pub horizon: usize,
    pub quantile: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Floor point and upper forecasts at zero (rates and percentages).
    pub non_negative: bool,
}

impl Default for ForecastParams {
    fn default() -> Self {
        Self {
            horizon: 60,
            quantile: DEFAULT_QUANTILE,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            non_negative: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepComponents {
    pub seasonal_sum: f64,
    pub trend: f64,
    pub residual_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub horizon: usize,
    pub point: Vec<f64>,
    pub upper: Vec<f64>,
    pub quantile: f64,
    pub components: Vec<StepComponents>,
}

/// `point = seasonal + trend`, `upper = point + margin`, with both floored at
/// zero when `params.non_negative` is set.
pub fn compose_forecast(decomposition: &Decomposition, params: &ForecastParams) -> Result<Forecast> {
    compose_forecast_with(decomposition, params, &EmpiricalQuantile)
}

pub fn compose_forecast_with(
    decomposition: &Decomposition,
    params: &ForecastParams,
    estimator: &dyn MarginEstimator,
) -> Result<Forecast> {
    let h = params.horizon;
    if h == 0 {
        return Err(EngineError::invalid_config("forecast horizon must be >= 1"));
    }
    let seasonal = shift_seasonal(&decomposition.seasonals, &decomposition.periods, h)?;
    let trend = forecast_trend(&decomposition.trend, h, params.alpha, params.beta)?;
    let margin = estimator.margin(&decomposition.residual, params.quantile, h)?;
    let floor = |v: f64| if params.non_negative { v.max(0.0) } else { v };
    let mut point = Vec::with_capacity(h);
    let mut upper = Vec::with_capacity(h);
    let mut components = Vec::with_capacity(h);
    for i in 0..h {
        let p = seasonal[i] + trend[i];
        point.push(floor(p));
        upper.push(floor(p + margin[i]));
        components.push(StepComponents {
            seasonal_sum: seasonal[i],
            trend: trend[i],
            residual_margin: margin[i],
        });
    }
    Ok(Forecast {
        horizon: h,
        point,
        upper,
        quantile: params.quantile,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use proptest::prelude::*;

    #[test]
    fn constant_trend_stays_flat() {
        let f = forecast_trend(&[7.0; 50], 5, 0.3, 0.1).unwrap();
        assert_eq!(f, vec![7.0; 5]);
    }

    #[test]
    fn line_is_reproduced() {
        let trend: Vec<f64> = (0..100).map(|t| 2.0 * t as f64).collect();
        let f = forecast_trend(&trend, 3, 0.3, 0.1).unwrap();
        for (a, b) in f.iter().zip([200.0, 202.0, 204.0]) {
            assert!((a - b).abs() < 1e-9, "{f:?}");
        }
    }

    #[test]
    fn trend_needs_two_samples() {
        let e = forecast_trend(&[1.0], 3, 0.3, 0.1).unwrap_err();
        assert_eq!(e.kind, ErrorKind::InsufficientData);
        let e = forecast_trend(&[1.0, 2.0], 3, 1.0, 0.1).unwrap_err();
        assert_eq!(e.kind, ErrorKind::InvalidConfig);
    }

    #[test]
    fn seasonal_repeats_last_cycle() {
        let comp = vec![9.0, 9.0, 1.0, -1.0, 2.0, -2.0];
        let f = shift_seasonal(&[comp], &[4], 6).unwrap();
        assert_eq!(f, vec![1.0, -1.0, 2.0, -2.0, 1.0, -1.0]);
        assert_eq!(shift_seasonal(&[], &[], 3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn two_components_add_independently() {
        // period 2 ends [.., 1, -1]; period 3 ends [.., 3, 0, -3]
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![3.0, 0.0, -3.0, 3.0, 0.0, -3.0];
        let f = shift_seasonal(&[a, b], &[2, 3], 6).unwrap();
        // hand sums: (1+3), (-1+0), (1-3), (-1+3), (1+0), (-1-3)
        assert_eq!(f, vec![4.0, -1.0, -2.0, 2.0, 1.0, -4.0]);
    }

    #[test]
    fn margin_cases() {
        assert_eq!(residual_margin(&[0.0; 30], 0.95, 4).unwrap(), vec![0.0; 4]);
        let r: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(residual_margin(&r, 0.95, 2).unwrap(), vec![95.0; 2]);
        let neg: Vec<f64> = (1..=40).map(|i| -(i as f64)).collect();
        assert_eq!(residual_margin(&neg, 0.95, 1).unwrap(), vec![0.0]);
        let e = residual_margin(&[1.0; 19], 0.95, 1).unwrap_err();
        assert_eq!(e.kind, ErrorKind::InsufficientData);
    }

    #[test]
    fn degenerate_constant_series() {
        let d = Decomposition {
            trend: vec![10.0; 50],
            seasonals: vec![],
            residual: vec![0.0; 50],
            periods: vec![],
        };
        let params = ForecastParams {
            horizon: 5,
            ..Default::default()
        };
        let f = compose_forecast(&d, &params).unwrap();
        assert_eq!(f.point, vec![10.0; 5]);
        assert_eq!(f.upper, vec![10.0; 5]);
    }

    #[test]
    fn negative_values_are_floored_when_requested() {
        let d = Decomposition {
            trend: (0..50).map(|t| -(t as f64)).collect(),
            seasonals: vec![],
            residual: vec![0.0; 50],
            periods: vec![],
        };
        let mut params = ForecastParams {
            horizon: 3,
            ..Default::default()
        };
        assert!(compose_forecast(&d, &params).unwrap().point.iter().all(|&p| p == 0.0));
        params.non_negative = false;
        assert!(compose_forecast(&d, &params).unwrap().point.iter().all(|&p| p < 0.0));
    }

    fn arb_decomposition() -> impl Strategy<Value = Decomposition> {
        (
            proptest::collection::vec(-50.0f64..50.0, 48),
            proptest::collection::vec(-5.0f64..5.0, 48),
            proptest::collection::vec(-3.0f64..3.0, 8),
        )
            .prop_map(|(trend, residual, cycle)| Decomposition {
                seasonals: vec![(0..48).map(|t| cycle[t % 8]).collect()],
                periods: vec![8],
                trend,
                residual,
            })
    }

    proptest! {
        #[test]
        fn upper_is_monotone_in_quantile(d in arb_decomposition(), q1 in 0.5f64..0.99, dq in 0.0f64..0.5) {
            let q2 = (q1 + dq).min(0.999);
            let mk = |q| ForecastParams { horizon: 12, quantile: q, non_negative: false, ..Default::default() };
            let a = compose_forecast(&d, &mk(q1)).unwrap();
            let b = compose_forecast(&d, &mk(q2)).unwrap();
            for h in 0..12 {
                prop_assert!(a.upper[h] <= b.upper[h]);
                prop_assert!(a.upper[h] >= a.point[h]);
            }
        }

        #[test]
        fn output_is_sum_of_components(d in arb_decomposition(), q in 0.05f64..0.95) {
            let params = ForecastParams { horizon: 20, quantile: q, non_negative: false, ..Default::default() };
            let f = compose_forecast(&d, &params).unwrap();
            for (h, c) in f.components.iter().enumerate() {
                prop_assert!((f.point[h] - (c.seasonal_sum + c.trend)).abs() <= 1e-12);
                prop_assert!((f.upper[h] - (f.point[h] + c.residual_margin)).abs() <= 1e-12);
            }
        }
    }
}
