//! Subcommand implementations. Each returns after writing its outputs and the
//! run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ahpa_core::decompose::decompose;
use ahpa_core::ingest::{read_trace, regularize, repair};
use ahpa_core::perfmodel::{fit, read_fit_samples, ModelKind};
use ahpa_core::pipeline::{self, forecast_series};
use ahpa_core::planner::ActionReason;
use ahpa_core::scenarios::{generate_scenario, ScenarioKind};
use ahpa_core::seasonality::detect_periods;
use ahpa_core::sim::{compare, format_table, peak_pods, run_ahpa, run_fixpod, run_hpa, SimReport, SimTrace};
use ahpa_core::{EngineError, MetricKind, Result, TimeSeries};

use crate::config::RunConfig;
use crate::output::{manifest_for_file, Run};

pub struct Globals {
    pub config: RunConfig,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| EngineError::io_failure(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Write a single-file result to `--out`, or print it when no path is given.
fn emit(mut run: Run, out: Option<&Path>, config: &RunConfig, body: &str) -> Result<()> {
    match out {
        Some(path) => {
            run.write(path, body.as_bytes())?;
            run.finish(&manifest_for_file(path), config)
        }
        None => print_stdout(body),
    }
}

/// Print to stdout; a closed pipe ends output quietly.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(EngineError::io_failure(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

#[derive(serde::Serialize)]
struct PlanLine {
    t: i64,
    replicas: u32,
    reason: ActionReason,
}

fn load_series(run: &mut Run, path: &Path, step: u32, metric: MetricKind) -> Result<TimeSeries> {
    let raw = read_trace(path, metric)?;
    run.input(path)?;
    if raw.skipped_rows > 0 {
        log::warn!("{}: skipped {} unparseable rows", path.display(), raw.skipped_rows);
    }
    regularize(&raw, step)
}

pub fn generate(globals: &Globals, kind: Option<ScenarioKind>, length: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut spec = globals.config.scenario.clone();
    if let Some(k) = kind {
        spec.kind = k;
    }
    if let Some(n) = length {
        spec.length_minutes = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let scenario = generate_scenario(&spec)?;
    let series = &scenario.observed;
    let mut body = String::from("timestamp,value\n");
    for (i, v) in series.values().iter().enumerate() {
        if let Some(v) = v {
            let _ = writeln!(body, "{},{v}", series.time_at(i) * 60);
        }
    }
    let config = RunConfig {
        scenario: spec,
        ..globals.config.clone()
    };
    emit(Run::new("generate"), globals.out.as_deref(), &config, &body)
}

pub fn detect(globals: &Globals, trace: &Path, step: u32, metric: MetricKind) -> Result<()> {
    let mut run = Run::new("detect");
    let series = load_series(&mut run, trace, step, metric)?;
    let repaired = repair(&series, globals.config.pipeline.repair)?;
    let report = detect_periods(&repaired, globals.config.pipeline.detect)?;
    emit(run, globals.out.as_deref(), &globals.config, &to_json(&report)?)
}

pub fn decompose_cmd(globals: &Globals, trace: &Path, step: u32, metric: MetricKind) -> Result<()> {
    let mut run = Run::new("decompose");
    let series = load_series(&mut run, trace, step, metric)?;
    let repaired = repair(&series, globals.config.pipeline.repair)?;
    let report = detect_periods(&repaired, globals.config.pipeline.detect)?;
    let d = decompose(&repaired, &report)?;
    let values = repaired.dense()?;
    let mut body = String::from("ts,value,trend");
    for p in &d.periods {
        let _ = write!(body, ",seasonal_{p}");
    }
    body.push_str(",residual\n");
    for (i, v) in values.iter().enumerate() {
        let _ = write!(body, "{},{v},{}", repaired.time_at(i), d.trend[i]);
        for s in &d.seasonals {
            let _ = write!(body, ",{}", s[i]);
        }
        let _ = writeln!(body, ",{}", d.residual[i]);
    }
    emit(run, globals.out.as_deref(), &globals.config, &body)
}

pub struct ForecastFlags {
    pub horizon: Option<usize>,
    pub quantile: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

pub fn forecast(globals: &Globals, trace: &Path, step: u32, metric: MetricKind, flags: ForecastFlags) -> Result<()> {
    let mut run = Run::new("forecast");
    let series = load_series(&mut run, trace, step, metric)?;
    let mut config = globals.config.clone();
    let params = &mut config.pipeline.forecast;
    params.horizon = flags.horizon.unwrap_or(params.horizon);
    params.quantile = flags.quantile.unwrap_or(params.quantile);
    params.alpha = flags.alpha.unwrap_or(params.alpha);
    params.beta = flags.beta.unwrap_or(params.beta);
    params.non_negative = metric.is_non_negative();
    let result = forecast_series(&series, &config.pipeline)?;
    let mut body = String::from("ts,point,upper\n");
    let f = &result.forecast;
    for h in 0..f.horizon {
        let _ = writeln!(
            body,
            "{},{},{}",
            series.time_at(series.len() + h),
            f.point[h],
            f.upper[h]
        );
    }
    emit(run, globals.out.as_deref(), &config, &body)
}

pub fn fit_cmd(globals: &Globals, samples: &Path, kind: ModelKind) -> Result<()> {
    let mut run = Run::new("fit");
    let data = read_fit_samples(samples)?;
    run.input(samples)?;
    let model = fit(&data, kind, globals.config.spec.average_utilization)?;
    emit(run, globals.out.as_deref(), &globals.config, &to_json(&model)?)
}

pub fn plan(globals: &Globals, trace: &Path, step: u32, fallback: Option<u32>) -> Result<()> {
    let mut run = Run::new("plan");
    let series = load_series(&mut run, trace, step, MetricKind::Qps)?;
    let model = globals.config.model.build()?;
    let result = pipeline::run(
        &series,
        &model,
        &globals.config.spec,
        &globals.config.pipeline,
        fallback,
    )?;
    let plan = &result.plan;
    for w in &plan.infeasible_windows {
        log::warn!("demand exceeds max_replicas during [{}, {})", w.start, w.end);
    }
    let mut body = String::new();
    for a in &plan.actions {
        let line = PlanLine {
            t: a.issue_time,
            replicas: a.target_replicas,
            reason: a.reason,
        };
        let _ = writeln!(
            body,
            "{}",
            serde_json::to_string(&line).map_err(|e| EngineError::io_failure(e.to_string()))?
        );
    }
    emit(run, globals.out.as_deref(), &globals.config, &body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyArg {
    Fixpod,
    Hpa,
    Ahpa,
    All,
}

pub fn simulate(
    globals: &Globals,
    policy: PolicyArg,
    trace_path: Option<&Path>,
    kind: Option<ScenarioKind>,
    seed: Option<u64>,
) -> Result<()> {
    let mut run = Run::new("simulate");
    let mut config = globals.config.clone();
    let (trace, dataset) = match trace_path {
        Some(path) => {
            let series = load_series(&mut run, path, 1, MetricKind::Qps)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (SimTrace::from_series(series)?, name)
        }
        None => {
            if let Some(k) = kind {
                config.scenario.kind = k;
            }
            if let Some(s) = seed {
                config.scenario.seed = s;
            }
            let scenario = generate_scenario(&config.scenario)?;
            (SimTrace::from_scenario(scenario)?, config.scenario.kind.to_string())
        }
    };
    let model = config.model.build()?;
    let spec = &config.spec;
    let options = config.sim_options();
    let reports: Vec<SimReport> = match policy {
        PolicyArg::All => compare(&trace, spec, &model, &options)?.to_vec(),
        PolicyArg::Fixpod => {
            let pods = peak_pods(&trace, &model, spec.target(), &options)?;
            vec![run_fixpod(&trace, pods, &model, spec.target(), &options)?]
        }
        PolicyArg::Hpa => vec![run_hpa(&trace, spec, &model, &options)?],
        PolicyArg::Ahpa => vec![run_ahpa(&trace, spec, &model, &options)?],
    };
    if !globals.quiet || globals.out.is_none() {
        print_stdout(&format_table(&dataset, &reports))?;
    }
    if let Some(dir) = &globals.out {
        let qps = &trace.workload()[options.eval_start..];
        for r in &reports {
            let name = r.policy.label().to_ascii_lowercase();
            run.write(&dir.join(format!("{name}.json")), to_json(r)?.as_bytes())?;
            let mut csv = Vec::new();
            r.write_csv(qps, &mut csv)?;
            run.write(&dir.join(format!("{name}.csv")), &csv)?;
        }
        run.finish(&dir.join("manifest.json"), &config)?;
    }
    Ok(())
}
