//! Run configuration: the autoscaler spec as top-level keys plus optional
//! `[model]`, `[pipeline]`, `[simulation]` and `[scenario]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ahpa_core::perfmodel::{ModelKind, PerfModel};
use ahpa_core::pipeline::PipelineOptions;
use ahpa_core::scenarios::ScenarioSpec;
use ahpa_core::sim::SimOptions;
use ahpa_core::{validate_spec, AutoscalerSpec, EngineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub service_rate_u: f64,
    pub other_latency_ms: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mm1Parallel,
            service_rate_u: 10.0,
            other_latency_ms: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<PerfModel> {
        PerfModel::new(self.kind, self.service_rate_u, self.other_latency_ms)
    }
}

/// Simulation settings; the pipeline options live in their own table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub eval_start: usize,
    pub sync_period: u32,
    pub stabilization_window: u32,
    pub train_window: u32,
    pub replan_every: u32,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let d = SimOptions::default();
        Self {
            eval_start: d.eval_start,
            sync_period: d.sync_period,
            stabilization_window: d.stabilization_window,
            train_window: d.train_window,
            replan_every: d.replan_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct RunConfig {
    pub spec: AutoscalerSpec,
    pub model: ModelConfig,
    pub pipeline: PipelineOptions,
    pub simulation: SimulationConfig,
    pub scenario: ScenarioSpec,
}

fn section<T: for<'de> Deserialize<'de> + Default>(table: &mut toml::Table, name: &str) -> Result<T> {
    match table.remove(name) {
        None => Ok(T::default()),
        Some(value) => value
            .try_into()
            .map_err(|e| EngineError::invalid_config(format!("[{name}]: {e}"))),
    }
}

impl RunConfig {
    /// Parse a config document. Without any top-level keys the default spec
    /// is used; otherwise `max_replicas` and `min_replicas` are required.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| EngineError::invalid_config(format!("config: {e}")))?;
        let model = section(&mut table, "model")?;
        let pipeline = section(&mut table, "pipeline")?;
        let simulation = section(&mut table, "simulation")?;
        let scenario = section(&mut table, "scenario")?;
        let spec = if table.is_empty() {
            AutoscalerSpec::default()
        } else {
            toml::Value::Table(table)
                .try_into()
                .map_err(|e| EngineError::invalid_config(format!("config: {e}")))?
        };
        Ok(Self {
            spec: validate_spec(spec)?,
            model,
            pipeline,
            simulation,
            scenario,
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).map_err(|e| EngineError::io_failure(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn sim_options(&self) -> SimOptions {
        let s = self.simulation;
        SimOptions {
            eval_start: s.eval_start,
            sync_period: s.sync_period,
            stabilization_window: s.stabilization_window,
            train_window: s.train_window,
            replan_every: s.replan_every,
            pipeline: self.pipeline,
        }
    }
}
