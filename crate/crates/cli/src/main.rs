//! `ahpa` command-line entry point.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on engine errors (printed on
//! stderr as one JSON object).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use ahpa_core::perfmodel::ModelKind;
use ahpa_core::scenarios::ScenarioKind;
use ahpa_core::{EngineError, MetricKind};

use commands::{ForecastFlags, Globals, PolicyArg};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "ahpa", version, about = "Predictive horizontal autoscaling toolkit")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output file, or output directory for `simulate`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Scenario seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors and primary output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct TraceArgs {
    /// Metric trace, CSV (`timestamp,value`) or JSON lines.
    #[arg(long, value_name = "FILE")]
    trace: PathBuf,
    /// Grid step in minutes.
    #[arg(long, default_value_t = 1)]
    step: u32,
    #[arg(long, default_value = "QPS")]
    metric: MetricKind,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic workload trace.
    Generate {
        #[arg(long)]
        kind: Option<ScenarioKind>,
        /// Trace length in minutes.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Report the detected periods of a trace as JSON.
    Detect(TraceArgs),
    /// Write trend, seasonal and residual components as CSV.
    Decompose(TraceArgs),
    /// Forecast the steps after the end of a trace.
    Forecast {
        #[command(flatten)]
        input: TraceArgs,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Fit a capacity model from `qps,pods,rt_ms` samples.
    Fit {
        #[arg(long, value_name = "FILE")]
        samples: PathBuf,
        #[arg(long, default_value = "mm1")]
        model: ModelKind,
    },
    /// Emit a scaling plan for the window after a QPS trace as JSON lines.
    Plan {
        /// QPS trace.
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        #[arg(long, default_value_t = 1)]
        step: u32,
        /// Autoscaler config; same format as `--config`.
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        /// Current reactive pod requirement.
        #[arg(long)]
        fallback: Option<u32>,
    },
    /// Replay a QPS trace under one or all policies.
    Simulate {
        #[arg(long, value_enum, default_value = "all")]
        policy: PolicyArg,
        /// QPS trace at one-minute steps.
        #[arg(long, value_name = "FILE", conflicts_with = "kind")]
        trace: Option<PathBuf>,
        /// Generate the trace instead of reading one.
        #[arg(long)]
        kind: Option<ScenarioKind>,
        /// Autoscaler config; same format as `--config`.
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), EngineError> {
    let config_path = match &cli.command {
        Command::Plan { spec: Some(p), .. } | Command::Simulate { spec: Some(p), .. } => Some(p.clone()),
        _ => cli.config.clone(),
    };
    let globals = Globals {
        config: RunConfig::load(config_path.as_deref())?,
        out: cli.out,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Generate { kind, length } => commands::generate(&globals, kind, length, cli.seed),
        Command::Detect(a) => commands::detect(&globals, &a.trace, a.step, a.metric),
        Command::Decompose(a) => commands::decompose_cmd(&globals, &a.trace, a.step, a.metric),
        Command::Forecast {
            input,
            horizon,
            quantile,
            alpha,
            beta,
        } => commands::forecast(
            &globals,
            &input.trace,
            input.step,
            input.metric,
            ForecastFlags {
                horizon,
                quantile,
                alpha,
                beta,
            },
        ),
        Command::Fit { samples, model } => commands::fit_cmd(&globals, &samples, model),
        Command::Plan {
            trace, step, fallback, ..
        } => commands::plan(&globals, &trace, step, fallback),
        Command::Simulate {
            policy, trace, kind, ..
        } => commands::simulate(&globals, policy, trace.as_deref(), kind, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let (Some(_), Command::Plan { spec: Some(_), .. } | Command::Simulate { spec: Some(_), .. }) =
        (&cli.config, &cli.command)
    {
        let _ = Cli::command()
            .error(
                clap::error::ErrorKind::ArgumentConflict,
                "--spec and --config cannot be used together",
            )
            .print();
        return ExitCode::from(1);
    }
    let default_level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AHPA_LOG", default_level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
