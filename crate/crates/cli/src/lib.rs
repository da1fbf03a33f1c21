//! Replication harness around the `broodsize` library: experiment
//! configuration, presets for the reference simulation studies, a parallel
//! runner with deterministic CSV output, and histogram export.

pub mod config;
pub mod error;
pub mod histogram;
pub mod runner;

pub use config::{preset, Cell, EstimatorKind, ExperimentConfig, ModelSource, Scale, PRESETS};
pub use error::{CliError, Result};
pub use histogram::{emit_histograms, write_histograms, Histogram};
pub use runner::{run_experiment, CellSummary, EstimandSummary, Failure, ReplicationSummary};
