//! Training and evaluation protocols, metrics, and sweeps.

pub mod config;
pub mod metrics;
pub mod runner;
pub mod sweep;

pub use config::{ConfigError, ExperimentFile, ResolvedExperiment};
pub use metrics::{
    metrics_csv_header, metrics_csv_row, utilization, DayOutcome, DeliveryStats, EpisodeMetrics,
};
pub use runner::{
    run_day, run_evaluation, run_training, DecisionHandler, EvalPolicy, EvalReport, Scenario,
    TraceRow, TrainDayRow, Trainer, TrainingLog, TrainingMode,
};
pub use sweep::{expand_cells, run_sweep, sweep_csv, SweepAxes, SweepCell, SweepFile, SweepRow};
