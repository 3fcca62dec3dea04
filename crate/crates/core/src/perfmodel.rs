//! Queueing performance model: maps an arrival rate to mean response time
//! and inverts that map to the minimum pod count meeting a target.
//!
//! Two readings of a pool of identical pods are supported. `Mm1Parallel`
//! treats each pod as its own M/M/1 queue receiving `qps / pods`, which makes
//! the pod requirement linear in QPS. `Mmc` puts all pods behind one shared
//! FIFO queue (M/M/c); the mean wait comes from Erlang C and Little's law.
//!
//! Rates are per second internally; response times are milliseconds at the
//! API boundary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Target;
use crate::error::{EngineError, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    #[serde(rename = "MM1_PARALLEL")]
    Mm1Parallel,
    Mmc,
}

impl std::str::FromStr for ModelKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mm1" | "mm1_parallel" | "m/m/1" => Ok(ModelKind::Mm1Parallel),
            "mmc" | "m/m/c" => Ok(ModelKind::Mmc),
            other => Err(EngineError::invalid_config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfModel {
    pub kind: ModelKind,
    /// Queries per second one pod serves.
    pub service_rate_u: f64,
    /// Fixed latency outside the queue, in milliseconds.
    pub other_latency_ms: f64,
    /// Pods per unit QPS under a utilization target (linear model).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_coefficient_c: Option<f64>,
}

impl PerfModel {
    pub fn new(kind: ModelKind, service_rate_u: f64, other_latency_ms: f64) -> Result<Self> {
        if !(service_rate_u.is_finite() && service_rate_u > 0.0) {
            return Err(EngineError::invalid_config("service rate must be positive"));
        }
        if !(other_latency_ms.is_finite() && other_latency_ms >= 0.0) {
            return Err(EngineError::invalid_config("other latency must be non-negative"));
        }
        Ok(Self {
            kind,
            service_rate_u,
            other_latency_ms,
            linear_coefficient_c: None,
        })
    }

    /// Attach `C = 1 / (u · target_fraction)` for a utilization target.
    pub fn with_utilization_target(mut self, target_percent: f64) -> Self {
        self.linear_coefficient_c = Some(1.0 / (self.service_rate_u * target_percent / 100.0));
        self
    }

    /// Per-pod utilization (fraction of capacity) at `qps` over `pods`.
    pub fn utilization(&self, qps: f64, pods: u32) -> f64 {
        qps / (pods as f64 * self.service_rate_u)
    }
}

/// Probability that an arrival waits in an M/M/c queue with `servers`
/// servers and offered load `offered_load = λ/μ`.
///
/// Uses the Erlang B recurrence `B(k) = a·B(k-1) / (k + a·B(k-1))` and
/// `C = B / (1 - ρ(1 - B))`, which never forms a factorial or a power.
pub fn erlang_c(servers: u32, offered_load: f64) -> Result<f64> {
    if servers == 0 {
        return Err(EngineError::invalid_config("erlang_c needs at least one server"));
    }
    if !(offered_load.is_finite() && offered_load >= 0.0) {
        return Err(EngineError::invalid_config("offered load must be non-negative"));
    }
    let c = servers as f64;
    if offered_load >= c {
        return Err(EngineError::unstable_queue(format!(
            "offered load {offered_load} >= {servers} servers"
        )));
    }
    let mut b = 1.0;
    for k in 1..=servers {
        b = offered_load * b / (k as f64 + offered_load * b);
    }
    let rho = offered_load / c;
    Ok(b / (1.0 - rho * (1.0 - b)))
}

/// Mean response time in milliseconds for `qps` spread over `pods`.
pub fn avg_rt(model: &PerfModel, qps: f64, pods: u32) -> Result<f64> {
    if pods == 0 {
        return Err(EngineError::invalid_config("pods must be >= 1"));
    }
    if !(qps.is_finite() && qps >= 0.0) {
        return Err(EngineError::invalid_config("qps must be non-negative"));
    }
    let u = model.service_rate_u;
    let seconds = match model.kind {
        ModelKind::Mm1Parallel => {
            let per_pod = qps / pods as f64;
            if per_pod >= u {
                return Err(EngineError::unstable_queue(format!(
                    "per-pod load {per_pod} >= service rate {u}"
                )));
            }
            1.0 / (u - per_pod)
        }
        ModelKind::Mmc => {
            let c = pods as f64;
            let wait_probability = erlang_c(pods, qps / u)?;
            let wait = wait_probability / (c * u - qps);
            wait + 1.0 / u
        }
    };
    Ok(1000.0 * seconds + model.other_latency_ms)
}

fn rt_meets(model: &PerfModel, qps: f64, pods: u32, target_ms: f64) -> bool {
    avg_rt(model, qps, pods).is_ok_and(|rt| rt <= target_ms)
}

fn utilization_meets(model: &PerfModel, qps: f64, pods: u32, target_percent: f64) -> bool {
    qps * 100.0 <= target_percent * model.service_rate_u * pods as f64
}

/// Smallest pod count in `[min_replicas, max_replicas]` meeting `target`.
pub fn required_pods(model: &PerfModel, qps: f64, target: Target, min_replicas: u32, max_replicas: u32) -> Result<u32> {
    if min_replicas == 0 || min_replicas > max_replicas {
        return Err(EngineError::invalid_config(format!(
            "replica bounds [{min_replicas}, {max_replicas}] are invalid"
        )));
    }
    if !(qps.is_finite() && qps >= 0.0) {
        return Err(EngineError::invalid_config("qps must be non-negative"));
    }
    if qps == 0.0 {
        return Ok(min_replicas);
    }
    let u = model.service_rate_u;
    let meets: Box<dyn Fn(u32) -> bool> = match target {
        Target::UtilizationPercent(pct) => {
            if !pct.is_finite() || pct <= 0.0 {
                return Err(EngineError::invalid_config("utilization target must be positive"));
            }
            Box::new(move |n| utilization_meets(model, qps, n, pct))
        }
        Target::RtMs(rt) => {
            if rt <= model.other_latency_ms + 1000.0 / u {
                return Err(EngineError::invalid_config(format!(
                    "RT target {rt} ms is below the no-queue floor {} ms",
                    model.other_latency_ms + 1000.0 / u
                )));
            }
            Box::new(move |n| rt_meets(model, qps, n, rt))
        }
    };
    // Initial guess: closed form where one exists, else the stability floor.
    let guess = match (target, model.kind) {
        (Target::UtilizationPercent(pct), _) => (qps * 100.0 / (u * pct)).ceil(),
        (Target::RtMs(rt), ModelKind::Mm1Parallel) => (qps / (u - 1000.0 / (rt - model.other_latency_ms))).ceil(),
        (Target::RtMs(_), ModelKind::Mmc) => (qps / u).floor() + 1.0,
    };
    let mut n = guess.clamp(1.0, u32::MAX as f64) as u32;
    // Correct for rounding in the closed forms.
    while n > 1 && meets(n - 1) {
        n -= 1;
    }
    while !meets(n) {
        if n >= max_replicas {
            return Err(EngineError::no_feasible_pods(format!(
                "{max_replicas} replicas cannot serve {qps} qps within target"
            )));
        }
        n += 1;
    }
    let n = n.max(min_replicas);
    if n > max_replicas {
        return Err(EngineError::no_feasible_pods(format!(
            "{qps} qps needs {n} replicas, above the maximum {max_replicas}"
        )));
    }
    Ok(n)
}

/// Requirement ignoring the upper replica bound.
pub fn required_pods_unbounded(model: &PerfModel, qps: f64, target: Target, min_replicas: u32) -> Result<u32> {
    required_pods(model, qps, target, min_replicas.max(1), u32::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    RtMs(f64),
    CpuPercent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    pub qps: f64,
    pub pods: u32,
    pub observed: Observation,
}

impl FitSample {
    fn per_pod_load(&self) -> f64 {
        self.qps / self.pods as f64
    }
}

const MIN_FIT_SAMPLES: usize = 10;
const MIN_LOAD_LEVELS: usize = 3;
const SCAN_POINTS: usize = 400;
const GOLDEN_REL_TOL: f64 = 1e-6;

/// Least-squares `other_latency` for a fixed service rate, and the SSE.
fn rt_objective(kind: ModelKind, u: f64, samples: &[(f64, u32, f64)]) -> Option<(f64, f64)> {
    let probe = PerfModel {
        kind,
        service_rate_u: u,
        other_latency_ms: 0.0,
        linear_coefficient_c: None,
    };
    let queueing: Vec<f64> = samples
        .iter()
        .map(|&(qps, pods, _)| avg_rt(&probe, qps, pods).ok())
        .collect::<Option<_>>()?;
    let offset = samples.iter().zip(&queueing).map(|(s, q)| s.2 - q).sum::<f64>() / samples.len() as f64;
    let other = offset.max(0.0);
    let sse = samples
        .iter()
        .zip(&queueing)
        .map(|(s, q)| (q + other - s.2).powi(2))
        .sum();
    Some((other, sse))
}

fn golden_section(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (hi - lo) > GOLDEN_REL_TOL * 0.5 * (hi + lo).abs() {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Fit a model from history. RT observations fit `(u, other_latency)` by
/// least squares (1-D search over `u`, closed-form offset); CPU observations
/// give `u` as the median of `qps / (pods · cpu_fraction)`.
pub fn fit(samples: &[FitSample], kind: ModelKind, utilization_target: Option<f64>) -> Result<PerfModel> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(EngineError::insufficient_data(format!(
            "fitting needs at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|s| s.pods == 0 || !(s.qps.is_finite() && s.qps >= 0.0))
    {
        return Err(EngineError::invalid_config("samples need pods >= 1 and qps >= 0"));
    }
    let mut levels: Vec<f64> = samples.iter().map(FitSample::per_pod_load).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1e-12));
    if levels.len() == 1 {
        return Err(EngineError::degenerate_series(
            "all samples share one per-pod load level",
        ));
    }
    if levels.len() < MIN_LOAD_LEVELS {
        return Err(EngineError::insufficient_data(format!(
            "fitting needs {MIN_LOAD_LEVELS} distinct load levels, got {}",
            levels.len()
        )));
    }
    let max_load = *levels.last().unwrap();

    let rts: Option<Vec<(f64, u32, f64)>> = samples
        .iter()
        .map(|s| match s.observed {
            Observation::RtMs(rt) => Some((s.qps, s.pods, rt)),
            Observation::CpuPercent(_) => None,
        })
        .collect();
    let cpus: Option<Vec<f64>> = samples
        .iter()
        .map(|s| match s.observed {
            Observation::CpuPercent(cpu) if cpu > 0.0 => Some(s.per_pod_load() / (cpu / 100.0)),
            _ => None,
        })
        .collect();

    let mut model = match (rts, cpus) {
        (Some(rts), _) => {
            let lo = max_load * (1.0 + 1e-9);
            let hi = 100.0 * max_load;
            let sse = |u: f64| rt_objective(kind, u, &rts).map_or(f64::INFINITY, |r| r.1);
            let ratio = (hi / lo).powf(1.0 / (SCAN_POINTS - 1) as f64);
            let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| lo * ratio.powi(i as i32)).collect();
            let best = (0..grid.len())
                .min_by(|&a, &b| sse(grid[a]).total_cmp(&sse(grid[b])))
                .unwrap();
            let a = grid[best.saturating_sub(1)];
            let b = grid[(best + 1).min(grid.len() - 1)];
            let u = golden_section(a, b, sse);
            let (other, _) = rt_objective(kind, u, &rts)
                .ok_or_else(|| EngineError::unstable_queue("fitted service rate leaves a sample unstable"))?;
            PerfModel::new(kind, u, other)?
        }
        (None, Some(rates)) => PerfModel::new(kind, stats::median(&rates), 0.0)?,
        (None, None) => {
            return Err(EngineError::invalid_config(
                "samples must all carry RT, or all carry positive CPU",
            ))
        }
    };
    if model.service_rate_u <= max_load {
        return Err(EngineError::unstable_queue(format!(
            "fitted service rate {} does not exceed observed per-pod load {max_load}",
            model.service_rate_u
        )));
    }
    if let Some(t) = utilization_target {
        model = model.with_utilization_target(t);
    }
    Ok(model)
}

/// Read `qps,pods,rt_ms` (or `qps,pods,cpu_percent`) CSV samples.
pub fn read_fit_samples(path: &Path) -> Result<Vec<FitSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| EngineError::io_failure(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| EngineError::io_failure(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(q), Some(p)) = (col("qps"), col("pods")) else {
        return Err(EngineError::io_failure("fit csv needs `qps` and `pods` columns"));
    };
    let (obs_col, is_rt) = match (col("rt_ms"), col("cpu_percent")) {
        (Some(c), _) => (c, true),
        (None, Some(c)) => (c, false),
        _ => {
            return Err(EngineError::io_failure(
                "fit csv needs an `rt_ms` or `cpu_percent` column",
            ))
        }
    };
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| EngineError::io_failure(e.to_string()))?;
        let parse = |i: usize| record.get(i).and_then(|v| v.parse::<f64>().ok());
        let (Some(qps), Some(pods), Some(obs)) = (parse(q), parse(p), parse(obs_col)) else {
            continue;
        };
        out.push(FitSample {
            qps,
            pods: pods as u32,
            observed: if is_rt {
                Observation::RtMs(obs)
            } else {
                Observation::CpuPercent(obs)
            },
        });
    }
    Ok(out)
}
