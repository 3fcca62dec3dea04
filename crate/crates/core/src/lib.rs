//! Predictive horizontal autoscaling engine.
//!
//! The pipeline runs `ingest` → `seasonality` → `decompose` → `forecast` →
//! `perfmodel` → `planner`; `sim` replays traces against fixed, reactive and
//! predictive policies and `scenarios` synthesises the workloads used to
//! evaluate them.

pub mod config;
pub mod decompose;
pub mod error;
pub mod forecast;
pub mod ingest;
pub mod perfmodel;
pub mod pipeline;
pub mod planner;
pub mod scenarios;
pub mod seasonality;
pub mod series;
pub mod sim;
mod stats;

pub use config::{validate_spec, AutoscalerSpec, ScaleStrategy, Target};
pub use error::{EngineError, ErrorKind, Result};
pub use series::{EpochMinute, MetricKind, TimeSeries};
