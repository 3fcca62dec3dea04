//! Autoscaler configuration mirroring the fields of a predictive HPA
//! custom resource, plus its flat TOML serialization.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::series::{EpochMinute, MetricKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScaleStrategy {
    #[default]
    Auto,
    /// Dry run: plans are produced but never executed.
    Observer,
}

/// A daily UTC time window `[start, end)`, in minutes of the day. Windows
/// with `end <= start` wrap past midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyWindow {
    pub start: u32,
    pub end: u32,
}

const MINUTES_PER_DAY: i64 = 1440;

impl DailyWindow {
    pub fn parse(expr: &str) -> Result<Self> {
        let (a, b) = expr
            .split_once('-')
            .ok_or_else(|| EngineError::invalid_config(format!("window `{expr}` is not of the form HH:MM-HH:MM")))?;
        Ok(Self {
            start: parse_clock(a)?,
            end: parse_clock(b)?,
        })
    }

    pub fn from_bounds(start: &str, end: &str) -> Result<Self> {
        Ok(Self {
            start: parse_clock(start)?,
            end: parse_clock(end)?,
        })
    }

    pub fn contains(&self, t: EpochMinute) -> bool {
        let m = t.rem_euclid(MINUTES_PER_DAY) as u32;
        if self.start < self.end {
            m >= self.start && m < self.end
        } else if self.start > self.end {
            m >= self.start || m < self.end
        } else {
            // start == end covers the whole day
            true
        }
    }

    fn overlaps(&self, other: &DailyWindow) -> bool {
        (0..MINUTES_PER_DAY).any(|m| self.contains(m) && other.contains(m))
    }
}

fn parse_clock(s: &str) -> Result<u32> {
    let s = s.trim();
    let bad = || EngineError::invalid_config(format!("bad clock time `{s}`, expected HH:MM"));
    let (h, m) = s.split_once(':').ok_or_else(bad)?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if h > 24 || m > 59 || (h == 24 && m != 0) {
        return Err(bad());
    }
    Ok((h * 60 + m) % 1440)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceBound {
    pub start_time: String,
    pub end_time: String,
}

impl InstanceBound {
    pub fn window(&self) -> Result<DailyWindow> {
        DailyWindow::from_bounds(&self.start_time, &self.end_time)
    }
}

/// Timed override: inside the daily `schedule` window (`HH:MM-HH:MM`, UTC)
/// the replica count is held within `[forced_min, forced_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CronRule {
    pub schedule: String,
    pub forced_min: u32,
    pub forced_max: u32,
}

impl CronRule {
    pub fn window(&self) -> Result<DailyWindow> {
        DailyWindow::parse(&self.schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoscalerSpec {
    /// Opaque label for the scaled workload.
    #[serde(default)]
    pub scale_target_ref: String,
    #[serde(default)]
    pub metric: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_utilization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rt_ms: Option<f64>,
    #[serde(default)]
    pub scale_strategy: ScaleStrategy,
    pub max_replicas: u32,
    pub min_replicas: u32,
    /// Pod startup delay in minutes.
    #[serde(default = "default_pending_time")]
    pub pending_time: u32,
    /// Minimum spacing between scaling actions in minutes.
    #[serde(default = "default_action_interval")]
    pub action_interval: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instance_bounds: Vec<InstanceBound>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cron_rules: Vec<CronRule>,
}

fn default_pending_time() -> u32 {
    1
}

fn default_action_interval() -> u32 {
    3
}

impl Default for AutoscalerSpec {
    fn default() -> Self {
        Self {
            scale_target_ref: String::new(),
            metric: MetricKind::CpuUtilizationPercent,
            average_utilization: Some(50.0),
            target_rt_ms: None,
            scale_strategy: ScaleStrategy::Auto,
            max_replicas: 100,
            min_replicas: 1,
            pending_time: default_pending_time(),
            action_interval: default_action_interval(),
            instance_bounds: Vec::new(),
            cron_rules: Vec::new(),
        }
    }
}

/// What the capacity model must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Mean response time ceiling in milliseconds.
    RtMs(f64),
    /// Per-pod utilization ceiling in percent.
    UtilizationPercent(f64),
}

impl AutoscalerSpec {
    pub fn target(&self) -> Target {
        match (self.target_rt_ms, self.average_utilization) {
            (Some(rt), _) => Target::RtMs(rt),
            (None, Some(u)) => Target::UtilizationPercent(u),
            (None, None) => Target::UtilizationPercent(50.0),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| EngineError::invalid_config(format!("config: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes to TOML")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| EngineError::io_failure(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Per-minute replica bounds after applying cron overrides.
    pub(crate) fn bounds_at(&self, t: EpochMinute, crons: &[(DailyWindow, &CronRule)]) -> (u32, u32) {
        let mut lo = self.min_replicas;
        let mut hi = self.max_replicas;
        for (w, rule) in crons {
            if w.contains(t) {
                lo = lo.max(rule.forced_min);
                hi = hi.min(rule.forced_max);
            }
        }
        (lo, hi.max(lo))
    }
}

/// Check every invariant of the spec and return it unchanged.
pub fn validate_spec(spec: AutoscalerSpec) -> Result<AutoscalerSpec> {
    if spec.min_replicas < 1 {
        return Err(EngineError::invalid_config("min_replicas must be >= 1"));
    }
    if spec.min_replicas > spec.max_replicas {
        return Err(EngineError::invalid_config(format!(
            "min_replicas ({}) must not exceed max_replicas ({})",
            spec.min_replicas, spec.max_replicas
        )));
    }
    match (spec.average_utilization, spec.target_rt_ms) {
        (Some(_), Some(_)) => {
            return Err(EngineError::invalid_config(
                "average_utilization and target_rt_ms are mutually exclusive",
            ))
        }
        (None, None) => {
            return Err(EngineError::invalid_config(
                "one of average_utilization or target_rt_ms is required",
            ))
        }
        (Some(u), None) => {
            if !(u.is_finite() && u > 0.0) {
                return Err(EngineError::invalid_config("average_utilization must be positive"));
            }
            if spec.metric.is_utilization() && u > 100.0 {
                return Err(EngineError::invalid_config(
                    "average_utilization must be at most 100 for a percentage metric",
                ));
            }
        }
        (None, Some(rt)) => {
            if !(rt.is_finite() && rt > 0.0) {
                return Err(EngineError::invalid_config("target_rt_ms must be positive"));
            }
        }
    }
    if spec.action_interval < 1 {
        return Err(EngineError::invalid_config("action_interval must be >= 1 minute"));
    }
    for b in &spec.instance_bounds {
        b.window()?;
    }
    let mut crons = Vec::with_capacity(spec.cron_rules.len());
    for rule in &spec.cron_rules {
        let w = rule.window()?;
        if rule.forced_min > rule.forced_max {
            return Err(EngineError::invalid_config(format!(
                "cron `{}` forces min {} above max {}",
                rule.schedule, rule.forced_min, rule.forced_max
            )));
        }
        crons.push((w, rule));
    }
    for (i, (wa, ra)) in crons.iter().enumerate() {
        for (wb, rb) in &crons[i + 1..] {
            if (ra.forced_min > rb.forced_max || rb.forced_min > ra.forced_max) && wa.overlaps(wb) {
                return Err(EngineError::invalid_config(format!(
                    "cron `{}` and `{}` overlap with contradictory bounds",
                    ra.schedule, rb.schedule
                )));
            }
        }
    }
    Ok(spec)
}

/// Additional check tying the spec to the series that drives it.
pub fn validate_against_step(spec: &AutoscalerSpec, step_minutes: u32) -> Result<()> {
    if spec.action_interval < step_minutes {
        return Err(EngineError::invalid_config(format!(
            "action_interval {} is shorter than the series step {}",
            spec.action_interval, step_minutes
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use proptest::prelude::*;

    fn base() -> AutoscalerSpec {
        AutoscalerSpec {
            min_replicas: 1,
            max_replicas: 10,
            average_utilization: Some(40.0),
            ..Default::default()
        }
    }

    #[test]
    fn accepts_plain_spec() {
        let s = base();
        assert_eq!(validate_spec(s.clone()).unwrap(), s);
    }

    #[test]
    fn rejects_inverted_replicas() {
        let s = AutoscalerSpec {
            min_replicas: 5,
            max_replicas: 3,
            ..base()
        };
        let e = validate_spec(s).unwrap_err();
        assert_eq!(e.kind, ErrorKind::InvalidConfig);
        assert!(e.detail.contains("min_replicas"));
    }

    #[test]
    fn rejects_zero_threshold() {
        let s = AutoscalerSpec {
            average_utilization: Some(0.0),
            ..base()
        };
        assert_eq!(validate_spec(s).unwrap_err().kind, ErrorKind::InvalidConfig);
    }

    #[test]
    fn rejects_both_targets() {
        let s = AutoscalerSpec {
            target_rt_ms: Some(200.0),
            ..base()
        };
        assert_eq!(validate_spec(s).unwrap_err().kind, ErrorKind::InvalidConfig);
    }

    #[test]
    fn rejects_contradictory_cron() {
        let s = AutoscalerSpec {
            cron_rules: vec![CronRule {
                schedule: "02:00-03:00".into(),
                forced_min: 8,
                forced_max: 4,
            }],
            ..base()
        };
        assert_eq!(validate_spec(s).unwrap_err().kind, ErrorKind::InvalidConfig);

        let s = AutoscalerSpec {
            cron_rules: vec![
                CronRule {
                    schedule: "02:00-03:00".into(),
                    forced_min: 8,
                    forced_max: 9,
                },
                CronRule {
                    schedule: "02:30-04:00".into(),
                    forced_min: 1,
                    forced_max: 4,
                },
            ],
            ..base()
        };
        assert_eq!(validate_spec(s).unwrap_err().kind, ErrorKind::InvalidConfig);
    }

    #[test]
    fn daily_window_wraps_midnight() {
        let w = DailyWindow::parse("23:00-01:00").unwrap();
        assert!(w.contains(23 * 60 + 30));
        assert!(w.contains(1440 * 5 + 30));
        assert!(!w.contains(2 * 60));
        assert!(DailyWindow::parse("25:00-01:00").is_err());
    }

    #[test]
    fn parses_readme_example() {
        let text = r#"
scale_target_ref = "web-frontend"
metric = "CPU_UTILIZATION_PERCENT"
average_utilization = 50.0
scale_strategy = "AUTO"
max_replicas = 60
min_replicas = 2
pending_time = 1
action_interval = 3

[[instance_bounds]]
start_time = "00:00"
end_time = "24:00"

[[cron_rules]]
schedule = "02:00-03:00"
forced_min = 10
forced_max = 60
"#;
        let s = validate_spec(AutoscalerSpec::from_toml_str(text).unwrap()).unwrap();
        assert_eq!(s.max_replicas, 60);
        assert_eq!(s.cron_rules[0].forced_min, 10);
        assert_eq!(s.target(), Target::UtilizationPercent(50.0));
    }

    #[test]
    fn unknown_key_is_invalid_config() {
        let e = AutoscalerSpec::from_toml_str("max_replicas = 3\nmin_replicas = 1\nbogus = 1\n").unwrap_err();
        assert_eq!(e.kind, ErrorKind::InvalidConfig);
    }

    prop_compose! {
        fn valid_spec()(
            min in 1u32..50,
            extra in 0u32..50,
            util in 1u32..=100,
            rt in proptest::option::of(10.0f64..1000.0),
            observer in any::<bool>(),
            pending in 0u32..10,
            interval in 1u32..10,
            cron_min in 1u32..20,
            cron_extra in 0u32..20,
            with_cron in any::<bool>(),
            with_bounds in any::<bool>(),
        ) -> AutoscalerSpec {
            AutoscalerSpec {
                scale_target_ref: "svc".into(),
                metric: MetricKind::CpuUtilizationPercent,
                average_utilization: if rt.is_some() { None } else { Some(util as f64 / 2.0 + 0.25) },
                target_rt_ms: rt,
                scale_strategy: if observer { ScaleStrategy::Observer } else { ScaleStrategy::Auto },
                min_replicas: min,
                max_replicas: min + extra,
                pending_time: pending,
                action_interval: interval,
                instance_bounds: if with_bounds {
                    vec![InstanceBound { start_time: "06:00".into(), end_time: "22:30".into() }]
                } else { vec![] },
                cron_rules: if with_cron {
                    vec![CronRule { schedule: "01:15-02:45".into(), forced_min: cron_min, forced_max: cron_min + cron_extra }]
                } else { vec![] },
            }
        }
    }

    proptest! {
        #[test]
        fn toml_round_trip(spec in valid_spec()) {
            let text = spec.to_toml_string();
            let back = AutoscalerSpec::from_toml_str(&text).unwrap();
            prop_assert_eq!(&back, &spec);
        }

        #[test]
        fn validation_is_idempotent(spec in valid_spec()) {
            let once = validate_spec(spec).unwrap();
            let twice = validate_spec(once.clone()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
