//! Period detection: decide whether a series is periodic and recover its
//! dominant cycle lengths.
//!
//! Candidates come from periodogram peaks of the clipped, detrended and
//! median-filtered series. Each candidate is snapped to a local maximum of the
//! unbiased autocorrelation and then scored by how much variance a per-phase
//! seasonal fit at that lag explains. Candidates are admitted shortest first,
//! each scored on what the already admitted periods leave unexplained.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::series::TimeSeries;
use crate::stats::{self, MAD_SCALE};

pub const DEFAULT_MAX_PERIODS: usize = 2;
pub const DEFAULT_STRENGTH_THRESHOLD: f64 = 0.5;

const CLIP_SIGMAS: f64 = 5.0;
const NOISE_FLOOR_FACTOR: f64 = 3.0;
const MIN_ACF_PEAK: f64 = 0.2;
const MAX_CANDIDATES: usize = 12;
const MULTIPLE_TOLERANCE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectParams {
    pub max_periods: usize,
    pub strength_threshold: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            max_periods: DEFAULT_MAX_PERIODS,
            strength_threshold: DEFAULT_STRENGTH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    /// Lags in samples, strongest first.
    pub periods: Vec<usize>,
    pub is_periodic: bool,
    /// Seasonality strength in [0, 1], parallel to `periods`.
    pub strengths: Vec<f64>,
}

impl PeriodReport {
    fn aperiodic() -> Self {
        Self {
            periods: Vec::new(),
            is_periodic: false,
            strengths: Vec::new(),
        }
    }

    pub fn max_strength(&self) -> f64 {
        self.strengths.iter().copied().fold(0.0, f64::max)
    }
}

/// Huber-style clipping, linear detrending and a 3-point median filter.
fn preprocess(values: &[f64]) -> Vec<f64> {
    let center = stats::median(values);
    let spread = MAD_SCALE * stats::mad(values, center);
    let clipped: Vec<f64> = if spread > 0.0 {
        let (lo, hi) = (center - CLIP_SIGMAS * spread, center + CLIP_SIGMAS * spread);
        values.iter().map(|v| v.clamp(lo, hi)).collect()
    } else {
        values.to_vec()
    };
    let (slope, intercept) = stats::linear_fit(&clipped);
    let detrended: Vec<f64> = clipped
        .iter()
        .enumerate()
        .map(|(i, v)| v - (intercept + slope * i as f64))
        .collect();
    stats::moving_median(&detrended, 1)
}

fn periodogram(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let m = stats::mean(xs);
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|x| Complex::new(x - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().take(n / 2 + 1).map(|c| c.norm_sqr()).collect()
}

/// Unbiased autocorrelation normalised to 1 at lag 0, for lags `0..=max_lag`.
fn autocorrelation(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let m = stats::mean(xs);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = xs
        .iter()
        .map(|x| Complex::new(x - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re / n as f64;
    (0..=max_lag.min(n - 1))
        .map(|l| {
            if c0 <= 0.0 {
                0.0
            } else {
                buf[l].re / (n - l) as f64 / c0
            }
        })
        .collect()
}

/// Per-phase mean of `xs` at lag `period`, centred to zero mean over a cycle.
/// `xs[0]` sits at phase `offset % period`.
fn phase_means(xs: &[f64], period: usize, offset: usize) -> Vec<f64> {
    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (i, x) in xs.iter().enumerate() {
        sums[(i + offset) % period] += x;
        counts[(i + offset) % period] += 1;
    }
    let mut profile: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let m = stats::mean(&profile);
    profile.iter_mut().for_each(|p| *p -= m);
    profile
}

struct TrialFit {
    strength: f64,
    residual_variance: f64,
    seasonal: Vec<f64>,
}

/// Trial seasonal fit at `period`: strength is
/// `1 - var(residual) / var(seasonal + residual)` after removing a moving
/// average one period wide. When at least two full cycles remain, the profile
/// and both variances use only the indices where that average has a full
/// window. The residual variance is scaled by `m / (m - period)` for the
/// `period` phase means fitted on `m` samples, so long lags with few cycles
/// do not score by fitting noise.
fn trial_fit(xs: &[f64], period: usize) -> TrialFit {
    let n = xs.len();
    let trend = stats::moving_average(xs, period);
    let (lo, hi) = if n >= 3 * period {
        (period / 2, n - (period - period / 2))
    } else {
        (0, n)
    };
    let detrended: Vec<f64> = xs[lo..hi].iter().zip(&trend[lo..hi]).map(|(x, t)| x - t).collect();
    let profile = phase_means(&detrended, period, lo);
    let residual: Vec<f64> = detrended
        .iter()
        .enumerate()
        .map(|(i, d)| d - profile[(i + lo) % period])
        .collect();
    let total = stats::variance(&detrended);
    let m = residual.len();
    let residual_variance = if m > period {
        stats::variance(&residual) * m as f64 / (m - period) as f64
    } else {
        total
    };
    let strength = if total > 0.0 {
        (1.0 - residual_variance / total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    TrialFit {
        strength,
        residual_variance,
        seasonal: (0..n).map(|i| profile[i % period]).collect(),
    }
}

fn is_near_multiple(long: usize, short: usize) -> bool {
    if long < 2 * short.saturating_sub(MULTIPLE_TOLERANCE) {
        return false;
    }
    let k = ((long as f64) / (short as f64)).round() as usize;
    k >= 2 && long.abs_diff(k * short) <= MULTIPLE_TOLERANCE
}

/// Snap a periodogram bin to the strongest autocorrelation peak whose lag
/// falls between the neighbouring bins' periods. Slower cycles are first
/// removed with a moving average 1.5 periods wide so they do not tilt the
/// autocorrelation around the candidate lag.
fn snap_to_acf_peak(x: &[f64], bin: usize) -> Option<usize> {
    let n = x.len();
    let lo = (n / (bin + 1)).max(2);
    let hi = n.div_ceil(bin - 1).min(n / 2);
    let guess = n as f64 / bin as f64;
    let smooth = stats::moving_average(x, (1.5 * guess).ceil() as usize);
    let high_passed: Vec<f64> = x.iter().zip(&smooth).map(|(a, b)| a - b).collect();
    let acf = autocorrelation(&high_passed, hi + 1);
    let hi = hi.min(acf.len() - 2);
    (lo..=hi)
        .filter(|&l| acf[l] > acf[l - 1] && acf[l] >= acf[l + 1])
        .max_by(|&a, &b| acf[a].total_cmp(&acf[b]).then(b.cmp(&a)))
        .filter(|&l| acf[l] >= MIN_ACF_PEAK)
}

/// Detect up to `max_periods` periods with strength at least
/// `strength_threshold`. The series must be complete with length >= 8.
pub fn detect_periods(series: &TimeSeries, params: DetectParams) -> Result<PeriodReport> {
    let values = series.dense()?;
    detect_periods_in(&values, params)
}

pub fn detect_periods_in(values: &[f64], params: DetectParams) -> Result<PeriodReport> {
    let n = values.len();
    if n < 8 {
        return Err(EngineError::insufficient_data(format!(
            "period detection needs at least 8 samples, got {n}"
        )));
    }
    let x = preprocess(values);
    let energy = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let scale = values.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if energy <= 1e-24 * scale.max(f64::MIN_POSITIVE) || params.max_periods == 0 {
        return Ok(PeriodReport::aperiodic());
    }

    let power = periodogram(&x);
    let floor = NOISE_FLOOR_FACTOR * stats::median(&power[1..]);
    let last = power.len() - 1;
    let mut bins: Vec<usize> = (2..=last)
        .filter(|&k| {
            let left = power[k] > power[k - 1];
            let right = k == last || power[k] >= power[k + 1];
            left && right && power[k] > floor
        })
        .collect();
    // strongest first; near-equal peaks resolve to the smaller period (larger bin)
    bins.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(b.cmp(&a)));
    bins.truncate(MAX_CANDIDATES);

    let mut lags: Vec<usize> = bins
        .iter()
        .filter_map(|&k| snap_to_acf_peak(&x, k))
        .filter(|&p| p >= 2 && 2 * p <= n)
        .collect();
    lags.sort_unstable();
    lags.dedup();

    let mut accepted: Vec<(usize, f64)> = Vec::new();
    let mut remaining = x.clone();
    for p in lags {
        if accepted.iter().any(|&(q, _)| q.abs_diff(p) <= MULTIPLE_TOLERANCE) {
            continue;
        }
        // The autocorrelation peak is pulled by other cycles; settle on the
        // nearby lag whose seasonal fit explains the most variance.
        let reach = (p / 25).max(MULTIPLE_TOLERANCE);
        let Some((p, fit)) = (p.saturating_sub(reach).max(2)..=(p + reach).min(n / 2))
            .map(|lag| (lag, trial_fit(&remaining, lag)))
            .min_by(|a, b| {
                a.1.residual_variance
                    .total_cmp(&b.1.residual_variance)
                    .then(a.0.cmp(&b.0))
            })
        else {
            continue;
        };
        let strength = fit.strength;
        if accepted.iter().any(|&(q, _)| q.abs_diff(p) <= MULTIPLE_TOLERANCE) {
            continue;
        }
        if strength < params.strength_threshold {
            continue;
        }
        // A multiple of an admitted period survives only if, fitted on its
        // own at the exact multiple, it explains strictly more than that
        // period does.
        let redundant = accepted.iter().any(|&(q, _)| {
            is_near_multiple(p, q) && {
                let k = (p as f64 / q as f64).round() as usize;
                trial_fit(&x, k * q).strength <= trial_fit(&x, q).strength
            }
        });
        if redundant {
            continue;
        }
        remaining.iter_mut().zip(&fit.seasonal).for_each(|(r, s)| *r -= s);
        accepted.push((p, strength));
    }

    accepted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    accepted.truncate(params.max_periods);
    Ok(PeriodReport {
        is_periodic: !accepted.is_empty(),
        periods: accepted.iter().map(|a| a.0).collect(),
        strengths: accepted.iter().map(|a| a.1).collect(),
    })
}
