//! Minute-by-minute trace replay for fixed, reactive and predictive policies.
//!
//! Each minute runs in this order: pods whose start-up finished become
//! ready, the policy may issue one scaling action, then the minute's load is
//! served by the ready pods. Scale-ups take `pending_time` minutes to
//! become ready; scale-downs cancel starting pods first and take effect at
//! once.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{validate_spec, AutoscalerSpec, Target};
use crate::error::{EngineError, Result};
use crate::ingest::fill_gaps;
use crate::perfmodel::{avg_rt, required_pods_unbounded, PerfModel};
use crate::pipeline::{self, PipelineOptions};
use crate::planner::ScalingPlan;
use crate::scenarios::Scenario;
use crate::series::{EpochMinute, TimeSeries};

pub const DEFAULT_SYNC_PERIOD: u32 = 1;
pub const DEFAULT_STABILIZATION_WINDOW: u32 = 5;
pub const DEFAULT_REPLAN_EVERY: u32 = 60;
pub const DEFAULT_TRAIN_WINDOW: u32 = 7 * 1440;
/// Recorded utilization (and observed load ratio) when the queue is unstable.
pub const UTILIZATION_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterState {
    pub ready_pods: u32,
    /// `(ready_at_time, count)` in issue order.
    pub pending_pods: Vec<(EpochMinute, u32)>,
    pub time: EpochMinute,
}

impl ClusterState {
    pub fn new(ready_pods: u32, time: EpochMinute) -> Self {
        Self {
            ready_pods,
            pending_pods: Vec::new(),
            time,
        }
    }

    /// Ready plus starting pods.
    pub fn allocated(&self) -> u32 {
        self.ready_pods + self.pending_pods.iter().map(|p| p.1).sum::<u32>()
    }

    /// Move the clock to `t` and promote pods whose start-up has finished.
    pub fn advance_to(&mut self, t: EpochMinute) {
        self.time = t;
        let ready = &mut self.ready_pods;
        self.pending_pods.retain(|&(at, count)| {
            if at <= t {
                *ready += count;
                false
            } else {
                true
            }
        });
    }

    /// Request `target` allocated pods at the current minute.
    pub fn scale_to(&mut self, target: u32, pending_time: u32) {
        let allocated = self.allocated();
        if target > allocated {
            let extra = target - allocated;
            if pending_time == 0 {
                self.ready_pods += extra;
            } else {
                self.pending_pods.push((self.time + pending_time as i64, extra));
            }
            return;
        }
        let mut surplus = allocated - target;
        while surplus > 0 {
            match self.pending_pods.last_mut() {
                Some(last) if last.1 > surplus => {
                    last.1 -= surplus;
                    surplus = 0;
                }
                Some(last) => {
                    surplus -= last.1;
                    self.pending_pods.pop();
                }
                None => {
                    self.ready_pods -= surplus;
                    surplus = 0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Pods that served the minute.
    pub ready_pods: u32,
    /// Fraction of ready capacity in use, capped at [`UTILIZATION_CAP`].
    pub utilization: f64,
    /// Mean response time, when an RT target is configured and the queue is stable.
    pub rt_ms: Option<f64>,
    pub violation: bool,
}

impl StepOutcome {
    /// Observed metric over its target, the quantity a reactive scaler acts on.
    pub fn load_ratio(&self, target: Target) -> f64 {
        match target {
            Target::UtilizationPercent(pct) => self.utilization * 100.0 / pct,
            Target::RtMs(ms) => self.rt_ms.map_or(UTILIZATION_CAP, |rt| (rt / ms).min(UTILIZATION_CAP)),
        }
    }
}

/// Serve one minute of `qps` with the pods ready at `state.time`.
pub fn step(state: &mut ClusterState, qps: f64, model: &PerfModel, target: Target) -> StepOutcome {
    state.advance_to(state.time);
    let ready = state.ready_pods;
    let capacity = ready as f64 * model.service_rate_u;
    let unstable = qps >= capacity;
    let utilization = if ready == 0 {
        if qps > 0.0 {
            UTILIZATION_CAP
        } else {
            0.0
        }
    } else {
        model.utilization(qps, ready).min(UTILIZATION_CAP)
    };
    match target {
        Target::UtilizationPercent(pct) => StepOutcome {
            ready_pods: ready,
            utilization,
            rt_ms: None,
            violation: qps * 100.0 > pct * capacity,
        },
        Target::RtMs(ms) => {
            let rt = if unstable { None } else { avg_rt(model, qps, ready).ok() };
            StepOutcome {
                ready_pods: ready,
                utilization,
                rt_ms: rt,
                violation: rt.is_none_or(|rt| rt > ms),
            }
        }
    }
}

/// Replica count a reactive scaler asks for: `⌈ready · observed / target⌉`.
pub fn hpa_desired(ready: u32, observed: f64, target: f64) -> u32 {
    let raw = (ready as f64 * observed / target - 1e-9).ceil();
    if raw <= 0.0 {
        0
    } else if raw >= u32::MAX as f64 {
        u32::MAX
    } else {
        raw as u32
    }
}

/// Monitored trace plus the load the service really received.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    observed: TimeSeries,
    workload: Vec<f64>,
}

impl SimTrace {
    pub fn new(observed: TimeSeries, workload: Vec<f64>) -> Result<Self> {
        if observed.step_minutes() != 1 {
            return Err(EngineError::invalid_config("simulation needs a one-minute trace"));
        }
        if workload.len() != observed.len() {
            return Err(EngineError::invalid_config(format!(
                "workload has {} samples but the trace has {}",
                workload.len(),
                observed.len()
            )));
        }
        if workload.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EngineError::invalid_config("workload must be finite and non-negative"));
        }
        Ok(Self { observed, workload })
    }

    /// Replay a monitored trace; gaps are served at the interpolated load.
    pub fn from_series(observed: TimeSeries) -> Result<Self> {
        let workload = fill_gaps(&observed)?;
        Self::new(observed, workload)
    }

    pub fn from_scenario(scenario: Scenario) -> Result<Self> {
        Self::new(scenario.observed, scenario.workload)
    }

    pub fn observed(&self) -> &TimeSeries {
        &self.observed
    }

    pub fn workload(&self) -> &[f64] {
        &self.workload
    }

    pub fn len(&self) -> usize {
        self.workload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workload.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Index of the first scored minute; earlier minutes are history only.
    pub eval_start: usize,
    pub sync_period: u32,
    pub stabilization_window: u32,
    pub train_window: u32,
    pub replan_every: u32,
    pub pipeline: PipelineOptions,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            eval_start: DEFAULT_TRAIN_WINDOW as usize,
            sync_period: DEFAULT_SYNC_PERIOD,
            stabilization_window: DEFAULT_STABILIZATION_WINDOW,
            train_window: DEFAULT_TRAIN_WINDOW,
            replan_every: DEFAULT_REPLAN_EVERY,
            pipeline: PipelineOptions::default(),
        }
    }
}

impl SimOptions {
    fn check(&self, trace: &SimTrace) -> Result<()> {
        if self.eval_start >= trace.len() {
            return Err(EngineError::insufficient_data(format!(
                "evaluation starts at minute {} but the trace has {} minutes",
                self.eval_start,
                trace.len()
            )));
        }
        if self.sync_period == 0 || self.replan_every == 0 || self.train_window == 0 {
            return Err(EngineError::invalid_config(
                "sync_period, replan_every and train_window must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Policy {
    #[serde(rename = "FIXPOD")]
    FixPod,
    Hpa,
    Ahpa,
}

impl Policy {
    pub fn label(self) -> &'static str {
        match self {
            Self::FixPod => "FixPod",
            Self::Hpa => "HPA",
            Self::Ahpa => "AHPA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: Policy,
    /// Minute of the first scored sample.
    pub start: EpochMinute,
    pub total_minutes: usize,
    pub cost_pod_minutes: u64,
    pub violating_minutes: usize,
    pub violation_rate: f64,
    pub max_pods: u32,
    pub action_count: usize,
    /// Sum of absolute minute-to-minute changes in ready pods.
    pub total_variation: u64,
    /// Replan boundaries where the pipeline failed and reactive scaling took over.
    pub fallback_windows: Vec<EpochMinute>,
    /// Ready pods per scored minute.
    pub pod_trace: Vec<u32>,
    pub utilization_trace: Vec<f64>,
    pub violation_trace: Vec<bool>,
}

impl SimReport {
    /// Per-minute CSV with header `ts,qps,pods,utilization,violation`.
    pub fn write_csv(&self, qps: &[f64], mut out: impl Write) -> Result<()> {
        let io = |e: std::io::Error| EngineError::io_failure(e.to_string());
        writeln!(out, "ts,qps,pods,utilization,violation").map_err(io)?;
        for i in 0..self.total_minutes {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.start + i as i64,
                qps.get(i).copied().unwrap_or(f64::NAN),
                self.pod_trace[i],
                self.utilization_trace[i],
                u8::from(self.violation_trace[i])
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

struct Recorder {
    policy: Policy,
    start: EpochMinute,
    pods: Vec<u32>,
    utilization: Vec<f64>,
    violations: Vec<bool>,
    actions: usize,
    fallbacks: Vec<EpochMinute>,
}

impl Recorder {
    fn new(policy: Policy, start: EpochMinute, capacity: usize) -> Self {
        Self {
            policy,
            start,
            pods: Vec::with_capacity(capacity),
            utilization: Vec::with_capacity(capacity),
            violations: Vec::with_capacity(capacity),
            actions: 0,
            fallbacks: Vec::new(),
        }
    }

    fn scale(&mut self, state: &mut ClusterState, target: u32, pending_time: u32) {
        if target != state.allocated() {
            state.scale_to(target, pending_time);
            self.actions += 1;
        }
    }

    fn record(&mut self, outcome: &StepOutcome) {
        self.pods.push(outcome.ready_pods);
        self.utilization.push(outcome.utilization);
        self.violations.push(outcome.violation);
    }

    fn finish(self) -> SimReport {
        let total = self.pods.len();
        let violating = self.violations.iter().filter(|v| **v).count();
        SimReport {
            policy: self.policy,
            start: self.start,
            total_minutes: total,
            cost_pod_minutes: self.pods.iter().map(|&p| p as u64).sum(),
            violating_minutes: violating,
            violation_rate: if total == 0 {
                0.0
            } else {
                violating as f64 / total as f64
            },
            max_pods: self.pods.iter().copied().max().unwrap_or(0),
            action_count: self.actions,
            total_variation: self.pods.windows(2).map(|w| w[0].abs_diff(w[1]) as u64).sum(),
            fallback_windows: self.fallbacks,
            pod_trace: self.pods,
            utilization_trace: self.utilization,
            violation_trace: self.violations,
        }
    }
}

/// Constant replica count over the scored minutes.
pub fn run_fixpod(
    trace: &SimTrace,
    pods: u32,
    model: &PerfModel,
    target: Target,
    options: &SimOptions,
) -> Result<SimReport> {
    options.check(trace)?;
    if pods == 0 {
        return Err(EngineError::invalid_config("a fixed deployment needs at least one pod"));
    }
    let t0 = trace.observed.time_at(options.eval_start);
    let mut rec = Recorder::new(Policy::FixPod, t0, trace.len() - options.eval_start);
    let mut state = ClusterState::new(pods, t0);
    for i in options.eval_start..trace.len() {
        state.advance_to(trace.observed.time_at(i));
        let outcome = step(&mut state, trace.workload[i], model, target);
        rec.record(&outcome);
    }
    Ok(rec.finish())
}

/// Smallest fixed deployment that never violates the target over the scored minutes.
pub fn peak_pods(trace: &SimTrace, model: &PerfModel, target: Target, options: &SimOptions) -> Result<u32> {
    options.check(trace)?;
    let peak = trace.workload[options.eval_start..].iter().copied().fold(0.0, f64::max);
    let mut pods = required_pods_unbounded(model, peak, target, 1)?;
    // an RT target also needs the queue strictly stable
    while step(&mut ClusterState::new(pods, 0), peak, model, target).violation {
        pods += 1;
    }
    Ok(pods)
}

/// Reactive controller: every sync period, scale to the replica count that
/// would have brought the last observed minute to target; scale-downs wait
/// for the stabilization window.
struct Reactive {
    sync_period: u32,
    window: u32,
    history: VecDeque<(EpochMinute, u32)>,
}

impl Reactive {
    fn new(options: &SimOptions) -> Self {
        Self {
            sync_period: options.sync_period,
            window: options.stabilization_window,
            history: VecDeque::new(),
        }
    }

    fn desired(spec: &AutoscalerSpec, last: &StepOutcome) -> u32 {
        hpa_desired(last.ready_pods.max(1), last.load_ratio(spec.target()), 1.0)
            .clamp(spec.min_replicas, spec.max_replicas)
    }

    fn decide(
        &mut self,
        elapsed: usize,
        state: &ClusterState,
        last: &StepOutcome,
        spec: &AutoscalerSpec,
    ) -> Option<u32> {
        if !elapsed.is_multiple_of(self.sync_period as usize) {
            return None;
        }
        let t = state.time;
        let desired = Self::desired(spec, last);
        self.history.push_back((t, desired));
        while self
            .history
            .front()
            .is_some_and(|&(at, _)| at <= t - self.window.max(1) as i64)
        {
            self.history.pop_front();
        }
        let allocated = state.allocated();
        if desired >= allocated {
            return Some(desired);
        }
        let stabilized = self.history.iter().map(|h| h.1).max().unwrap_or(desired);
        Some(stabilized.min(allocated))
    }
}

/// Pods ready and the outcome of the minute just before the scored range.
fn warm_start(
    trace: &SimTrace,
    spec: &AutoscalerSpec,
    model: &PerfModel,
    options: &SimOptions,
) -> Result<(ClusterState, StepOutcome)> {
    let prev = options.eval_start.saturating_sub(1);
    let qps = trace.workload[prev];
    let pods = required_pods_unbounded(model, qps, spec.target(), spec.min_replicas)?.min(spec.max_replicas);
    let mut state = ClusterState::new(pods, trace.observed.time_at(prev));
    let outcome = step(&mut state, qps, model, spec.target());
    Ok((state, outcome))
}

pub fn run_hpa(trace: &SimTrace, spec: &AutoscalerSpec, model: &PerfModel, options: &SimOptions) -> Result<SimReport> {
    let spec = validate_spec(spec.clone())?;
    options.check(trace)?;
    let (mut state, mut last) = warm_start(trace, &spec, model, options)?;
    let t0 = trace.observed.time_at(options.eval_start);
    let mut rec = Recorder::new(Policy::Hpa, t0, trace.len() - options.eval_start);
    let mut hpa = Reactive::new(options);
    for i in options.eval_start..trace.len() {
        state.advance_to(trace.observed.time_at(i));
        if let Some(target) = hpa.decide(i - options.eval_start, &state, &last, &spec) {
            rec.scale(&mut state, target, spec.pending_time);
        }
        last = step(&mut state, trace.workload[i], model, spec.target());
        rec.record(&last);
    }
    Ok(rec.finish())
}

/// Walk-forward predictive scaling: replan every `replan_every` minutes on
/// the trailing `train_window` of the monitored trace and execute the plan
/// until the next boundary.
pub fn run_ahpa(trace: &SimTrace, spec: &AutoscalerSpec, model: &PerfModel, options: &SimOptions) -> Result<SimReport> {
    let spec = validate_spec(spec.clone())?;
    options.check(trace)?;
    if trace.len() <= options.train_window as usize {
        return Err(EngineError::insufficient_data(format!(
            "trace of {} minutes does not exceed the {}-minute training window",
            trace.len(),
            options.train_window
        )));
    }
    let mut pipeline_options = options.pipeline;
    pipeline_options.forecast.horizon = (options.replan_every + spec.pending_time + spec.action_interval) as usize;
    let (mut state, mut last) = warm_start(trace, &spec, model, options)?;
    let t0 = trace.observed.time_at(options.eval_start);
    let mut rec = Recorder::new(Policy::Ahpa, t0, trace.len() - options.eval_start);
    let mut reactive = Reactive::new(options);
    let mut plan: Option<ScalingPlan> = None;
    let mut next_action = 0;
    for i in options.eval_start..trace.len() {
        let elapsed = i - options.eval_start;
        if elapsed.is_multiple_of(options.replan_every as usize) {
            let from = i.saturating_sub(options.train_window as usize);
            let fallback = Reactive::desired(&spec, &last);
            let attempt = trace
                .observed
                .slice(from, i)
                .and_then(|history| pipeline::run(&history, model, &spec, &pipeline_options, Some(fallback)));
            plan = match attempt {
                Ok(run) => Some(run.plan),
                Err(err) => {
                    log::warn!(
                        "replan at minute {} fell back to reactive scaling: {err}",
                        trace.observed.time_at(i)
                    );
                    rec.fallbacks.push(trace.observed.time_at(i));
                    None
                }
            };
            next_action = 0;
        }
        state.advance_to(trace.observed.time_at(i));
        match &plan {
            Some(p) if p.execute => {
                while next_action < p.actions.len() && p.actions[next_action].issue_time <= state.time {
                    let target = p.actions[next_action].target_replicas;
                    rec.scale(&mut state, target, spec.pending_time);
                    next_action += 1;
                }
            }
            _ => {
                if let Some(target) = reactive.decide(elapsed, &state, &last, &spec) {
                    rec.scale(&mut state, target, spec.pending_time);
                }
            }
        }
        last = step(&mut state, trace.workload[i], model, spec.target());
        rec.record(&last);
    }
    Ok(rec.finish())
}

/// FixPod sized at the scored peak, HPA and AHPA on the same trace.
pub fn compare(
    trace: &SimTrace,
    spec: &AutoscalerSpec,
    model: &PerfModel,
    options: &SimOptions,
) -> Result<[SimReport; 3]> {
    let spec = validate_spec(spec.clone())?;
    let pods = peak_pods(trace, model, spec.target(), options)?;
    Ok([
        run_fixpod(trace, pods, model, spec.target(), options)?,
        run_hpa(trace, &spec, model, options)?,
        run_ahpa(trace, &spec, model, options)?,
    ])
}

/// Cost / VR / Max Pod rows with one column per report.
pub fn format_table(dataset: &str, reports: &[SimReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10}|| {:^width$}",
        "DataSet",
        dataset,
        width = 12 * reports.len()
    );
    let _ = write!(out, "{:<10}||", "Metric");
    for r in reports {
        let _ = write!(out, " {:>11}", r.policy.label());
    }
    out.push('\n');
    type Cell = fn(&SimReport) -> String;
    let rows: [(&str, Cell); 3] = [
        ("Cost", |r| r.cost_pod_minutes.to_string()),
        ("VR", |r| format!("{:.4}", r.violation_rate)),
        ("Max Pod", |r| r.max_pods.to_string()),
    ];
    for (name, cell) in rows {
        let _ = write!(out, "{name:<10}||");
        for r in reports {
            let _ = write!(out, " {:>11}", cell(r));
        }
        out.push('\n');
    }
    out
}
