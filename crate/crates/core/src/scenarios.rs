//! Seeded synthetic QPS traces for the six workload archetypes.
//!
//! Every trace is drawn from a ChaCha8 stream seeded with `seed`, so the
//! same spec always yields the same values on every platform.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::series::{EpochMinute, MetricKind, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    /// Level plus AR(1) noise.
    Np,
    /// Daily cycle whose amplitude jitters from day to day.
    Wp,
    /// Stable daily cycle.
    Sp,
    /// Stable cycle plus isolated spikes.
    Noisy,
    /// Stable cycle with one whole day missing.
    Missing,
    /// Stable cycle whose trend bends upward at a seeded minute.
    TrendChange,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        Self::Np,
        Self::Wp,
        Self::Sp,
        Self::Noisy,
        Self::Missing,
        Self::TrendChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Np => "NP",
            Self::Wp => "WP",
            Self::Sp => "SP",
            Self::Noisy => "NOISY",
            Self::Missing => "MISSING",
            Self::TrendChange => "TREND_CHANGE",
        }
    }

    pub fn is_periodic(self) -> bool {
        self != Self::Np
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| EngineError::invalid_config(format!("unknown scenario kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub length_minutes: usize,
    pub seed: u64,
    pub start: EpochMinute,
    pub base_level: f64,
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub period_minutes: usize,
    /// AR(1) coefficient for the aperiodic kind.
    pub ar_coefficient: f64,
    /// Innovation standard deviation of the AR(1) process.
    pub ar_sigma: f64,
    /// Per-cycle amplitude factor is drawn from `1 ± amplitude_jitter`.
    pub amplitude_jitter: f64,
    pub outlier_count: usize,
    pub outlier_magnitude: f64,
    /// Day to drop; drawn from the seed when unset.
    pub missing_day: Option<usize>,
    /// Minute index where the slope changes; drawn from the second half when unset.
    pub trend_break: Option<usize>,
    /// Slope after the break, in QPS per day.
    pub trend_slope_per_day: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Sp,
            length_minutes: 20160,
            seed: 42,
            start: 0,
            base_level: 100.0,
            amplitude: 60.0,
            noise_sigma: 3.0,
            period_minutes: 1440,
            ar_coefficient: 0.7,
            ar_sigma: 10.0,
            amplitude_jitter: 0.5,
            outlier_count: 60,
            outlier_magnitude: 150.0,
            missing_day: None,
            trend_break: None,
            trend_slope_per_day: 20.0,
        }
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EngineError::invalid_config(msg));
        if self.length_minutes == 0 {
            return bad("length_minutes must be positive".into());
        }
        if self.kind.is_periodic() {
            if self.period_minutes < 2 || self.length_minutes < 2 * self.period_minutes {
                return bad(format!(
                    "length {} must cover two periods of {}",
                    self.length_minutes, self.period_minutes
                ));
            }
            if self.kind != ScenarioKind::Wp && self.noise_sigma > 0.05 * self.amplitude.abs() {
                return bad("noise_sigma must stay within 5% of the amplitude".into());
            }
        }
        if !(0.0..1.0).contains(&self.ar_coefficient.abs()) {
            return bad("ar_coefficient must lie in (-1, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.amplitude_jitter) {
            return bad("amplitude_jitter must lie in [0, 1]".into());
        }
        let finite = [
            self.base_level,
            self.amplitude,
            self.noise_sigma,
            self.ar_sigma,
            self.outlier_magnitude,
            self.trend_slope_per_day,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.noise_sigma < 0.0 || self.ar_sigma < 0.0 {
            return bad("scenario parameters must be finite and sigmas non-negative".into());
        }
        if let Some(day) = self.missing_day {
            if (day + 1) * 1440 > self.length_minutes {
                return bad(format!("missing_day {day} lies beyond the trace"));
            }
        }
        if self.kind == ScenarioKind::Missing && self.length_minutes < 1440 {
            return bad("MISSING needs at least one whole day".into());
        }
        if self.trend_break.is_some_and(|b| b >= self.length_minutes) {
            return bad("trend_break lies beyond the trace".into());
        }
        Ok(())
    }
}

/// A generated trace: what the monitor recorded and what the service saw.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub observed: TimeSeries,
    /// Load actually offered to the service, with no gaps.
    pub workload: Vec<f64>,
}

/// The monitored QPS trace for `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<TimeSeries> {
    generate_scenario(spec).map(|s| s.observed)
}

/// The gap-free offered load for `spec`. Equal to [`generate`] except for
/// MISSING, where the dropped day is still served.
pub fn generate_workload(spec: &ScenarioSpec) -> Result<Vec<f64>> {
    generate_scenario(spec).map(|s| s.workload)
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let n = spec.length_minutes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| EngineError::invalid_config(e.to_string()))?;
    let period = spec.period_minutes as f64;
    let cycle = |t: usize| (TAU * t as f64 / period).sin();

    let mut load: Vec<f64> = match spec.kind {
        ScenarioKind::Np => {
            let innov = Normal::new(0.0, spec.ar_sigma).map_err(|e| EngineError::invalid_config(e.to_string()))?;
            let mut x = 0.0;
            (0..n)
                .map(|_| {
                    x = spec.ar_coefficient * x + innov.sample(&mut rng);
                    spec.base_level + x
                })
                .collect()
        }
        ScenarioKind::Wp => {
            let cycles = n.div_ceil(spec.period_minutes);
            let factors: Vec<f64> = (0..cycles)
                .map(|_| 1.0 + rng.random_range(-spec.amplitude_jitter..=spec.amplitude_jitter))
                .collect();
            (0..n)
                .map(|t| {
                    let f = factors[t / spec.period_minutes];
                    spec.base_level + spec.amplitude * f * cycle(t) + noise.sample(&mut rng)
                })
                .collect()
        }
        _ => (0..n)
            .map(|t| spec.base_level + spec.amplitude * cycle(t) + noise.sample(&mut rng))
            .collect(),
    };

    match spec.kind {
        ScenarioKind::Noisy => {
            for _ in 0..spec.outlier_count {
                let at = rng.random_range(0..n);
                load[at] += spec.outlier_magnitude;
            }
        }
        ScenarioKind::TrendChange => {
            let brk = spec
                .trend_break
                .unwrap_or_else(|| rng.random_range(n / 2..n.max(2) * 3 / 4));
            let slope = spec.trend_slope_per_day / 1440.0;
            for (t, v) in load.iter_mut().enumerate().skip(brk) {
                *v += slope * (t - brk) as f64;
            }
        }
        _ => {}
    }
    for v in &mut load {
        *v = v.max(0.0);
    }

    let mut observed: Vec<Option<f64>> = load.iter().copied().map(Some).collect();
    if spec.kind == ScenarioKind::Missing {
        let day = spec.missing_day.unwrap_or_else(|| rng.random_range(0..n / 1440));
        observed[day * 1440..(day + 1) * 1440].fill(None);
    }
    Ok(Scenario {
        observed: TimeSeries::new(spec.start, 1, observed, MetricKind::Qps)?,
        workload: load,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use crate::seasonality::{detect_periods, DetectParams};

    #[test]
    fn same_seed_same_trace() {
        let spec = ScenarioSpec::new(ScenarioKind::Sp, 42);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = ScenarioSpec::new(ScenarioKind::Sp, 43);
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn sp_has_daily_period() {
        let report = detect_periods(&generate(&ScenarioSpec::default()).unwrap(), DetectParams::default()).unwrap();
        assert!(report.is_periodic);
        assert!(report.periods[0].abs_diff(1440) <= 1, "{report:?}");
        assert!(report.strengths[0] >= 0.8, "{report:?}");
    }

    #[test]
    fn np_is_aperiodic() {
        let report = detect_periods(
            &generate(&ScenarioSpec::new(ScenarioKind::Np, 7)).unwrap(),
            DetectParams::default(),
        )
        .unwrap();
        assert!(!report.is_periodic, "{report:?}");
    }

    #[test]
    fn missing_drops_one_day() {
        let s = generate_scenario(&ScenarioSpec::new(ScenarioKind::Missing, 5)).unwrap();
        assert_eq!(s.observed.missing_count(), 1440);
        let first = s.observed.values().iter().position(Option::is_none).unwrap();
        assert_eq!(first % 1440, 0);
        assert!(s.workload.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn noisy_adds_spikes_to_sp() {
        let sp = generate(&ScenarioSpec::new(ScenarioKind::Sp, 3))
            .unwrap()
            .dense()
            .unwrap();
        let noisy = generate(&ScenarioSpec::new(ScenarioKind::Noisy, 3))
            .unwrap()
            .dense()
            .unwrap();
        let raised = sp.iter().zip(&noisy).filter(|(a, b)| b > a).count();
        assert!(raised > 0 && raised <= 60);
        assert!(sp.iter().zip(&noisy).all(|(a, b)| b >= a));
    }

    #[test]
    fn trend_change_bends_after_break() {
        let spec = ScenarioSpec {
            trend_break: Some(10080),
            ..ScenarioSpec::new(ScenarioKind::TrendChange, 3)
        };
        let tc = generate(&spec).unwrap().dense().unwrap();
        let sp = generate(&ScenarioSpec::new(ScenarioKind::Sp, 3))
            .unwrap()
            .dense()
            .unwrap();
        assert_eq!(tc[..10081], sp[..10081]);
        assert!((tc[20159] - sp[20159] - 20.0 * 10079.0 / 1440.0).abs() < 1e-9);
    }

    #[test]
    fn values_are_non_negative() {
        for kind in ScenarioKind::ALL {
            let spec = ScenarioSpec {
                base_level: 5.0,
                noise_sigma: 1.0,
                ..ScenarioSpec::new(kind, 11)
            };
            let s = generate_scenario(&spec).unwrap();
            assert!(s.workload.iter().all(|&v| v >= 0.0), "{kind}");
        }
    }

    #[test]
    fn rejects_short_periodic_trace() {
        let spec = ScenarioSpec {
            length_minutes: 2000,
            ..ScenarioSpec::default()
        };
        assert_eq!(generate(&spec).unwrap_err().kind, ErrorKind::InvalidConfig);
        let np = ScenarioSpec {
            length_minutes: 100,
            ..ScenarioSpec::new(ScenarioKind::Np, 1)
        };
        assert_eq!(generate(&np).unwrap().len(), 100);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ScenarioKind::ALL {
            assert_eq!(kind.as_str().parse::<ScenarioKind>().unwrap(), kind);
        }
        assert_eq!(
            "trend-change".parse::<ScenarioKind>().unwrap(),
            ScenarioKind::TrendChange
        );
    }
}
