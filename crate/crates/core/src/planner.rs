//! Scaling plan generation: turn a per-step pod requirement into spaced,
//! bounded replica-count actions issued early enough to absorb pod startup.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::{validate_spec, AutoscalerSpec, CronRule, DailyWindow, ScaleStrategy};
use crate::error::{EngineError, Result};
use crate::forecast::Forecast;
use crate::perfmodel::{required_pods_unbounded, PerfModel};
use crate::series::EpochMinute;
use crate::stats;

/// Below this period strength a forecast counts as low confidence...
pub const DEFAULT_CONFIDENCE_STRENGTH: f64 = 0.5;
/// ...when the residual margin also exceeds this share of the median point
/// forecast.
pub const DEFAULT_CONFIDENCE_MARGIN_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionReason {
    Forecast,
    Cron,
    BoundClamp,
    DowngradeFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanAction {
    pub issue_time: EpochMinute,
    pub target_replicas: u32,
    pub reason: ActionReason,
}

/// Half-open minute range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: EpochMinute,
    pub end: EpochMinute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPlan {
    pub actions: Vec<PlanAction>,
    pub mode: ScaleStrategy,
    /// False in observer mode: the plan is informational only.
    pub execute: bool,
    /// Where the requirement exceeded the replica ceiling.
    pub infeasible_windows: Vec<TimeRange>,
}

impl ScalingPlan {
    /// Replica target in force at minute `t`, if any action has been issued.
    pub fn target_at(&self, t: EpochMinute) -> Option<u32> {
        let idx = self.actions.partition_point(|a| a.issue_time <= t);
        idx.checked_sub(1).map(|i| self.actions[i].target_replicas)
    }
}

/// `shifted[t] = max(required[t..=t + pending_steps])`, truncated at the end.
pub fn shift_for_pending(required: &[u32], pending_steps: usize) -> Vec<u32> {
    let n = required.len();
    let mut out = vec![0; n];
    // indices with decreasing values over the look-ahead window
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for (t, slot) in out.iter_mut().enumerate() {
        while next < n && next <= t + pending_steps {
            while window.back().is_some_and(|&j| required[j] <= required[next]) {
                window.pop_back();
            }
            window.push_back(next);
            next += 1;
        }
        while window.front().is_some_and(|&j| j < t) {
            window.pop_front();
        }
        *slot = required[*window.front().expect("window covers t")];
    }
    out
}

/// One candidate per `interval_steps` window, issued at the window start
/// with the window maximum; repeats of the previous target are dropped.
pub fn merge_actions(shifted: &[u32], start: EpochMinute, step_minutes: u32, interval_steps: usize) -> Vec<PlanAction> {
    let mut actions = window_candidates(shifted, start, step_minutes, interval_steps);
    actions.dedup_by_key(|a| a.target_replicas);
    actions
}

fn window_candidates(shifted: &[u32], start: EpochMinute, step_minutes: u32, interval_steps: usize) -> Vec<PlanAction> {
    let w = interval_steps.max(1);
    shifted
        .chunks(w)
        .enumerate()
        .map(|(k, chunk)| PlanAction {
            issue_time: start + (k * w) as i64 * step_minutes as i64,
            target_replicas: *chunk.iter().max().expect("chunks are non-empty"),
            reason: ActionReason::Forecast,
        })
        .collect()
}

struct Windows<'a> {
    crons: Vec<(DailyWindow, &'a CronRule)>,
    instance: Vec<DailyWindow>,
}

impl<'a> Windows<'a> {
    fn new(spec: &'a AutoscalerSpec) -> Result<Self> {
        Ok(Self {
            crons: spec
                .cron_rules
                .iter()
                .map(|r| r.window().map(|w| (w, r)))
                .collect::<Result<_>>()?,
            instance: spec.instance_bounds.iter().map(|b| b.window()).collect::<Result<_>>()?,
        })
    }

    fn allows_action(&self, t: EpochMinute) -> bool {
        self.instance.is_empty() || self.instance.iter().any(|w| w.contains(t))
    }
}

/// Action grid description shared by [`apply_bounds`] callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanGrid {
    pub start: EpochMinute,
    pub step_minutes: u32,
    pub interval_steps: usize,
    /// Number of steps the plan covers.
    pub len: usize,
}

impl PlanGrid {
    fn window_starts(&self) -> impl Iterator<Item = (EpochMinute, EpochMinute)> + '_ {
        let w = self.interval_steps.max(1);
        let step = self.step_minutes as i64;
        (0..self.len).step_by(w).map(move |k| {
            let s = self.start + k as i64 * step;
            let e = self.start + (k + w).min(self.len) as i64 * step;
            (s, e)
        })
    }
}

/// Clamp targets to the replica bounds, apply cron overrides and
/// instance-bound windows, record infeasible stretches and drop repeats.
pub fn apply_bounds(actions: &[PlanAction], spec: &AutoscalerSpec, grid: PlanGrid) -> Result<ScalingPlan> {
    let spec = validate_spec(spec.clone())?;
    let windows = Windows::new(&spec)?;
    let mut out: Vec<PlanAction> = Vec::new();
    let mut infeasible: Vec<TimeRange> = Vec::new();
    let mut cursor = 0;
    let mut current: Option<PlanAction> = None;
    for (s, e) in grid.window_starts() {
        while cursor < actions.len() && actions[cursor].issue_time <= s {
            current = Some(actions[cursor]);
            cursor += 1;
        }
        let Some(source) = current else { continue };
        let wanted = source.target_replicas;
        let (mut lo, mut hi) = (spec.min_replicas, spec.max_replicas);
        let mut cron_bound = false;
        for t in s..e {
            let (l, h) = spec.bounds_at(t, &windows.crons);
            lo = lo.max(l);
            hi = hi.min(h);
        }
        if lo > spec.min_replicas || hi < spec.max_replicas {
            cron_bound = true;
        }
        // a raised floor wins over a conflicting ceiling
        let hi = hi.max(lo);
        if wanted > hi {
            match infeasible.last_mut() {
                Some(r) if r.end == s => r.end = e,
                _ => infeasible.push(TimeRange { start: s, end: e }),
            }
        }
        if !windows.allows_action(s) {
            continue;
        }
        let target = wanted.clamp(lo, hi);
        let reason = if target == wanted {
            source.reason
        } else if cron_bound && (target == lo && lo > spec.min_replicas || target == hi && hi < spec.max_replicas) {
            ActionReason::Cron
        } else {
            ActionReason::BoundClamp
        };
        if out.last().is_some_and(|a| a.target_replicas == target) {
            continue;
        }
        out.push(PlanAction {
            issue_time: s,
            target_replicas: target,
            reason,
        });
    }
    Ok(ScalingPlan {
        actions: out,
        mode: spec.scale_strategy,
        execute: spec.scale_strategy == ScaleStrategy::Auto,
        infeasible_windows: infeasible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanContext {
    /// First minute the plan covers.
    pub start: EpochMinute,
    pub step_minutes: u32,
    /// Reactive pod requirement observed at plan time.
    pub fallback: Option<u32>,
    /// Apply the reactive floor to the whole plan instead of the first window.
    pub low_confidence: bool,
}

/// Shift, merge and bound a requirement array, then apply downgrade
/// protection against the reactive requirement.
pub fn plan_from_requirements(required: &[u32], spec: &AutoscalerSpec, ctx: &PlanContext) -> Result<ScalingPlan> {
    let step = ctx.step_minutes.max(1);
    let interval_steps = spec.action_interval.div_ceil(step).max(1) as usize;
    let pending_steps = spec.pending_time.div_ceil(step) as usize;
    if required.len() < interval_steps {
        return Err(EngineError::insufficient_data(format!(
            "plan horizon of {} steps is shorter than one action interval ({interval_steps})",
            required.len()
        )));
    }
    let shifted = shift_for_pending(required, pending_steps);
    let mut actions = window_candidates(&shifted, ctx.start, step, interval_steps);
    if let Some(reactive) = ctx.fallback {
        let span = if ctx.low_confidence { actions.len() } else { 1 };
        for a in actions.iter_mut().take(span) {
            if reactive > a.target_replicas {
                a.target_replicas = reactive;
                a.reason = ActionReason::DowngradeFallback;
            }
        }
    }
    let grid = PlanGrid {
        start: ctx.start,
        step_minutes: step,
        interval_steps,
        len: required.len(),
    };
    apply_bounds(&actions, spec, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInputs {
    pub start: EpochMinute,
    pub step_minutes: u32,
    /// Strongest detected period strength, `None` for aperiodic input.
    pub period_strength: Option<f64>,
    pub fallback: Option<u32>,
    pub confidence_strength: f64,
    pub confidence_margin_ratio: f64,
}

impl PlanInputs {
    pub fn new(start: EpochMinute) -> Self {
        Self {
            start,
            step_minutes: 1,
            period_strength: None,
            fallback: None,
            confidence_strength: DEFAULT_CONFIDENCE_STRENGTH,
            confidence_margin_ratio: DEFAULT_CONFIDENCE_MARGIN_RATIO,
        }
    }
}

/// Whether a forecast is too uncertain to trust on its own.
pub fn is_low_confidence(forecast: &Forecast, inputs: &PlanInputs) -> bool {
    let weak = inputs.period_strength.is_none_or(|s| s < inputs.confidence_strength);
    let margin = forecast
        .components
        .iter()
        .map(|c| c.residual_margin)
        .fold(0.0, f64::max);
    let median_point = if forecast.point.is_empty() {
        0.0
    } else {
        stats::median(&forecast.point)
    };
    weak && margin > inputs.confidence_margin_ratio * median_point
}

/// Full planning step: upper forecast → pod requirement → plan.
pub fn plan(forecast: &Forecast, model: &PerfModel, spec: &AutoscalerSpec, inputs: &PlanInputs) -> Result<ScalingPlan> {
    let spec = validate_spec(spec.clone())?;
    let target = spec.target();
    let required: Vec<u32> = forecast
        .upper
        .iter()
        .map(|&qps| required_pods_unbounded(model, qps, target, spec.min_replicas))
        .collect::<Result<_>>()?;
    let ctx = PlanContext {
        start: inputs.start,
        step_minutes: inputs.step_minutes,
        fallback: inputs.fallback,
        low_confidence: is_low_confidence(forecast, inputs),
    };
    plan_from_requirements(&required, &spec, &ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CronRule, InstanceBound};
    use crate::error::ErrorKind;
    use crate::forecast::StepComponents;
    use crate::perfmodel::ModelKind;

    fn spec(min: u32, max: u32, interval: u32, pending: u32) -> AutoscalerSpec {
        AutoscalerSpec {
            min_replicas: min,
            max_replicas: max,
            action_interval: interval,
            pending_time: pending,
            ..Default::default()
        }
    }

    fn targets(plan: &ScalingPlan) -> Vec<(EpochMinute, u32)> {
        plan.actions.iter().map(|a| (a.issue_time, a.target_replicas)).collect()
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift_for_pending(&[3, 9, 4], 1), vec![9, 9, 4]);
        let req = [5, 5, 5, 5, 5, 10, 10, 10];
        assert_eq!(shift_for_pending(&req, 0), req.to_vec());
        let shifted = shift_for_pending(&req, 1);
        assert_eq!(shifted.iter().position(|&v| v == 10), Some(4));
    }

    #[test]
    fn merge_examples() {
        let a = merge_actions(&[5, 7, 6, 6, 6, 6], 0, 1, 3);
        assert_eq!(
            a.iter().map(|a| (a.issue_time, a.target_replicas)).collect::<Vec<_>>(),
            vec![(0, 7), (3, 6)]
        );
        assert_eq!(merge_actions(&[4; 12], 0, 1, 3).len(), 1);
        let a = merge_actions(&[1, 1, 2, 2, 3, 1], 10, 1, 1);
        assert_eq!(
            a.iter().map(|a| (a.issue_time, a.target_replicas)).collect::<Vec<_>>(),
            vec![(10, 1), (12, 2), (14, 3), (15, 1)]
        );
    }

    #[test]
    fn clamp_records_infeasible_window() {
        let s = spec(1, 60, 3, 0);
        let ctx = PlanContext {
            start: 0,
            step_minutes: 1,
            fallback: None,
            low_confidence: false,
        };
        let plan = plan_from_requirements(&[20, 20, 20, 67, 67, 67, 20, 20, 20], &s, &ctx).unwrap();
        assert_eq!(targets(&plan), vec![(0, 20), (3, 60), (6, 20)]);
        assert_eq!(plan.actions[1].reason, ActionReason::BoundClamp);
        assert_eq!(plan.infeasible_windows, vec![TimeRange { start: 3, end: 6 }]);
    }

    #[test]
    fn cron_floor_applies_inside_window() {
        let mut s = spec(1, 60, 3, 0);
        s.cron_rules = vec![CronRule {
            schedule: "02:00-03:00".into(),
            forced_min: 10,
            forced_max: 60,
        }];
        let ctx = PlanContext {
            start: 90,
            step_minutes: 1,
            fallback: None,
            low_confidence: false,
        };
        let plan = plan_from_requirements(&vec![4; 120], &s, &ctx).unwrap();
        for t in 120..180 {
            assert_eq!(plan.target_at(t), Some(10), "t={t}");
        }
        assert_eq!(plan.target_at(100), Some(4));
        assert_eq!(plan.target_at(200), Some(4));
        assert!(plan.actions.iter().any(|a| a.reason == ActionReason::Cron));
    }

    #[test]
    fn in_bounds_plan_is_unchanged() {
        let s = spec(1, 60, 1, 0);
        let req = [3, 4, 5, 6, 5, 4];
        let actions = merge_actions(&req, 0, 1, 1);
        let plan = apply_bounds(
            &actions,
            &s,
            PlanGrid {
                start: 0,
                step_minutes: 1,
                interval_steps: 1,
                len: 6,
            },
        )
        .unwrap();
        assert_eq!(plan.actions, actions);
        assert!(plan.infeasible_windows.is_empty());
    }

    #[test]
    fn contradictory_cron_is_rejected() {
        let mut s = spec(1, 60, 3, 0);
        s.cron_rules = vec![CronRule {
            schedule: "02:00-03:00".into(),
            forced_min: 9,
            forced_max: 3,
        }];
        let ctx = PlanContext {
            start: 0,
            step_minutes: 1,
            fallback: None,
            low_confidence: false,
        };
        assert_eq!(
            plan_from_requirements(&[1; 9], &s, &ctx).unwrap_err().kind,
            ErrorKind::InvalidConfig
        );
    }

    #[test]
    fn instance_bounds_hold_last_value() {
        let mut s = spec(1, 60, 1, 0);
        s.instance_bounds = vec![InstanceBound {
            start_time: "00:00".into(),
            end_time: "00:05".into(),
        }];
        let ctx = PlanContext {
            start: 0,
            step_minutes: 1,
            fallback: None,
            low_confidence: false,
        };
        let plan = plan_from_requirements(&[1, 2, 3, 4, 5, 6, 7, 8], &s, &ctx).unwrap();
        assert_eq!(plan.actions.last().unwrap().issue_time, 4);
        assert_eq!(plan.target_at(7), Some(5));
    }

    #[test]
    fn fallback_raises_first_action() {
        let s = spec(1, 60, 3, 0);
        let ctx = PlanContext {
            start: 0,
            step_minutes: 1,
            fallback: Some(12),
            low_confidence: false,
        };
        let plan = plan_from_requirements(&[8; 9], &s, &ctx).unwrap();
        assert_eq!(plan.actions[0].target_replicas, 12);
        assert_eq!(plan.actions[0].reason, ActionReason::DowngradeFallback);
        assert_eq!(plan.target_at(3), Some(8));

        let ctx = PlanContext {
            low_confidence: true,
            ..ctx
        };
        let plan = plan_from_requirements(&[8; 9], &s, &ctx).unwrap();
        assert_eq!(targets(&plan), vec![(0, 12)]);
    }

    #[test]
    fn short_horizon_is_rejected() {
        let s = spec(1, 60, 5, 0);
        let ctx = PlanContext {
            start: 0,
            step_minutes: 1,
            fallback: None,
            low_confidence: false,
        };
        assert_eq!(
            plan_from_requirements(&[1, 2], &s, &ctx).unwrap_err().kind,
            ErrorKind::InsufficientData
        );
    }

    fn forecast_of(upper: Vec<f64>, margin: f64) -> Forecast {
        let h = upper.len();
        Forecast {
            horizon: h,
            point: upper.iter().map(|u| u - margin).collect(),
            upper,
            quantile: 0.95,
            components: vec![
                StepComponents {
                    seasonal_sum: 0.0,
                    trend: 0.0,
                    residual_margin: margin
                };
                h
            ],
        }
    }

    #[test]
    fn observer_mode_keeps_actions() {
        let model = PerfModel::new(ModelKind::Mm1Parallel, 10.0, 0.0).unwrap();
        let f = forecast_of((0..30).map(|t| 40.0 + 2.0 * t as f64).collect(), 1.0);
        let auto = spec(1, 100, 3, 1);
        let observer = AutoscalerSpec {
            scale_strategy: ScaleStrategy::Observer,
            ..auto.clone()
        };
        let inputs = PlanInputs {
            period_strength: Some(0.9),
            ..PlanInputs::new(0)
        };
        let a = plan(&f, &model, &auto, &inputs).unwrap();
        let b = plan(&f, &model, &observer, &inputs).unwrap();
        assert_eq!(a.actions, b.actions);
        assert!(a.execute && !b.execute);
        assert_eq!(b.mode, ScaleStrategy::Observer);
        assert!(a.actions.iter().all(|x| x.reason == ActionReason::Forecast));
    }

    #[test]
    fn low_confidence_detection() {
        let inputs = PlanInputs {
            period_strength: Some(0.2),
            ..PlanInputs::new(0)
        };
        assert!(is_low_confidence(&forecast_of(vec![20.0; 10], 12.0), &inputs));
        assert!(!is_low_confidence(&forecast_of(vec![20.0; 10], 2.0), &inputs));
        let strong = PlanInputs {
            period_strength: Some(0.9),
            ..inputs
        };
        assert!(!is_low_confidence(&forecast_of(vec![20.0; 10], 12.0), &strong));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn check_invariants(plan: &ScalingPlan, spec: &AutoscalerSpec) -> std::result::Result<(), String> {
            for w in plan.actions.windows(2) {
                if w[1].issue_time <= w[0].issue_time {
                    return Err(format!("issue times not increasing: {w:?}"));
                }
                if w[1].target_replicas == w[0].target_replicas {
                    return Err(format!("repeated target: {w:?}"));
                }
                if w[1].issue_time - w[0].issue_time < spec.action_interval as i64 {
                    return Err(format!("spacing below interval: {w:?}"));
                }
            }
            match plan
                .actions
                .iter()
                .find(|a| a.target_replicas < spec.min_replicas || a.target_replicas > spec.max_replicas)
            {
                Some(a) => Err(format!("target out of bounds: {a:?}")),
                None => Ok(()),
            }
        }

        fn arb_case() -> impl Strategy<Value = (Vec<u32>, AutoscalerSpec, PlanContext)> {
            (
                1u32..20,
                0u32..30,
                1u32..6,
                0u32..4,
                prop::option::of(0u32..40),
                any::<bool>(),
                0i64..2880,
            )
                .prop_flat_map(|(min, span, interval, pending, fallback, low, start)| {
                    let spec = spec(min, min + span, interval, pending);
                    let ctx = PlanContext {
                        start,
                        step_minutes: 1,
                        fallback,
                        low_confidence: low,
                    };
                    (
                        prop::collection::vec(0u32..60, interval as usize..80),
                        Just(spec),
                        Just(ctx),
                    )
                })
        }

        proptest! {
            #[test]
            fn plans_satisfy_invariants((req, spec, ctx) in arb_case()) {
                let plan = plan_from_requirements(&req, &spec, &ctx).unwrap();
                prop_assert_eq!(check_invariants(&plan, &spec), Ok(()));
                let first = plan.actions[0];
                prop_assert_eq!(first.issue_time, ctx.start);
                if let Some(r) = ctx.fallback {
                    prop_assert!(first.target_replicas >= r.clamp(spec.min_replicas, spec.max_replicas));
                }
            }

            #[test]
            fn shift_covers_demand(req in prop::collection::vec(0u32..100, 1..60), p in 0usize..6) {
                let shifted = shift_for_pending(&req, p);
                for t in 0..req.len() {
                    prop_assert!(shifted[t.saturating_sub(p)] >= req[t]);
                    prop_assert!(shifted[t] >= req[t]);
                }
            }

            #[test]
            fn raising_requirement_never_lowers_targets(
                (req, spec, ctx) in arb_case(),
                bumps in prop::collection::vec(0u32..5, 80),
            ) {
                let raised: Vec<u32> = req.iter().zip(&bumps).map(|(r, b)| r + b).collect();
                let a = plan_from_requirements(&req, &spec, &ctx).unwrap();
                let b = plan_from_requirements(&raised, &spec, &ctx).unwrap();
                for t in ctx.start..ctx.start + req.len() as i64 {
                    prop_assert!(a.target_at(t) <= b.target_at(t), "t={}", t);
                }
            }
        }
    }
}
