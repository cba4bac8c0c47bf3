//! Experiment orchestration: configuration, simulated federated rounds,
//! reports and the command line.

mod cli;
mod config;
mod report;
mod sim;

pub use cli::{parse_grid, run_cli};
pub use config::{CodecConfig, DatasetSpec, ExperimentConfig, ModelSpec, ProbeConfig, Timing};
pub use report::{emit_report, write_metrics_csv, ReportPaths, Summary, METRICS_HEADER};
pub use sim::{run_experiment, run_probe_experiment, RoundMetrics, RoundOutcome, Simulation};
