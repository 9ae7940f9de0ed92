//! Experiment orchestration: configuration, the training loop, metric
//! persistence, reset-curve synthesis, plotting, and invariant checks.

mod config;
mod metrics;
mod plot;
mod reset;
mod runner;
pub mod verify;

pub use config::{ExperimentConfig, RunKind, ScheduleConfig, TaskConfig};
pub use metrics::{parse_csv, parse_jsonl, write_metrics, MetricRow, MetricWriter};
pub use plot::{render_plot, PlotSpec};
pub use reset::{reset_curve_rows, synthesize_reset_curve};
pub use runner::{run_experiment, run_sweep, RunMeta, RunSummary};
