//! Hyperparameter and sensitivity sweeps: a cartesian grid of overrides on
//! top of a base experiment, each cell trained and evaluated under shared
//! seeds.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, TargetUpdate};

use super::config::{ConfigError, ExperimentFile, ResolvedExperiment};
use super::metrics::EpisodeMetrics;
use super::runner::{run_evaluation, run_training, EvalPolicy, Scenario, TrainingMode};

/// Sweep axes; empty axes keep the base value. The grid is the cartesian
/// product of the non-empty axes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub memory: Vec<usize>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub batch: Vec<usize>,
    #[serde(default)]
    pub update_every: Vec<u32>,
    #[serde(default)]
    pub rp: Vec<f64>,
    #[serde(default)]
    pub daily_orders: Vec<u32>,
    #[serde(default)]
    pub couriers: Vec<usize>,
}

/// A sweep config file: a base experiment plus the axes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepFile {
    #[serde(flatten)]
    pub base: ExperimentFile,
    #[serde(default)]
    pub sweep: SweepAxes,
}

impl SweepFile {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// One fully specified grid cell.
#[derive(Clone)]
pub struct SweepCell {
    pub label: String,
    pub scenario: Scenario,
    pub agent: AgentConfig,
    pub mode: TrainingMode,
    pub training_days: u32,
    pub test_days: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub metrics: Option<EpisodeMetrics>,
    pub error: Option<String>,
}

/// Expands the axes against the resolved base into the cell list, in
/// row-major axis order (memory, gamma, batch, update period, rp, daily
/// orders, couriers).
pub fn expand_cells(base: &ResolvedExperiment, axes: &SweepAxes) -> Vec<SweepCell> {
    fn axis<T: Clone>(values: &[T]) -> Vec<Option<T>> {
        if values.is_empty() {
            vec![None]
        } else {
            values.iter().cloned().map(Some).collect()
        }
    }

    let mut cells = Vec::new();
    for memory in axis(&axes.memory) {
        for gamma in axis(&axes.gamma) {
            for batch in axis(&axes.batch) {
                for update in axis(&axes.update_every) {
                    for rp in axis(&axes.rp) {
                        for orders in axis(&axes.daily_orders) {
                            for couriers in axis(&axes.couriers) {
                                let mut agent = base.agent.clone();
                                let mut scenario = base.scenario.clone();
                                let mut label = Vec::new();
                                if let Some(m) = memory {
                                    agent.memory_capacity = m;
                                    label.push(format!("M={m}"));
                                }
                                if let Some(g) = gamma {
                                    agent.gamma = g;
                                    label.push(format!("gamma={g}"));
                                }
                                if let Some(b) = batch {
                                    agent.batch_size = b;
                                    label.push(format!("B={b}"));
                                }
                                if let Some(u) = update {
                                    agent.update = TargetUpdate::Hard { every: u };
                                    label.push(format!("U={u}"));
                                }
                                if let Some(r) = rp {
                                    scenario.rp = r;
                                    label.push(format!("RP={r}"));
                                }
                                if let Some(n) = orders {
                                    scenario.daily_orders = n;
                                    label.push(format!("N={n}"));
                                }
                                if let Some(c) = couriers {
                                    scenario.couriers = c;
                                    label.push(format!("C={c}"));
                                }
                                cells.push(SweepCell {
                                    label: if label.is_empty() {
                                        "base".into()
                                    } else {
                                        label.join(";")
                                    },
                                    scenario,
                                    agent,
                                    mode: base.mode,
                                    training_days: base.training_days,
                                    test_days: base.test_days,
                                    seed: base.seed,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    cells
}

fn run_cell(cell: &SweepCell) -> EpisodeMetrics {
    let (agent, _log) = run_training(
        &cell.scenario,
        &cell.agent,
        cell.mode,
        cell.training_days,
        cell.seed,
    );
    let mut policy = match cell.mode {
        TrainingMode::Single => EvalPolicy::SingleShared(agent.online),
        TrainingMode::Multi => EvalPolicy::Multi(agent.online),
    };
    run_evaluation(&cell.scenario, &mut policy, cell.test_days, cell.seed).metrics
}

/// Trains and evaluates every cell, `jobs` cells in parallel. A panicking
/// cell is reported in its row; the sweep continues.
pub fn run_sweep(cells: &[SweepCell], jobs: usize) -> Vec<SweepRow> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|cell| {
                let outcome =
                    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_cell(cell)));
                match outcome {
                    Ok(metrics) => SweepRow {
                        label: cell.label.clone(),
                        metrics: Some(metrics),
                        error: None,
                    },
                    Err(panic) => SweepRow {
                        label: cell.label.clone(),
                        metrics: None,
                        error: Some(panic_message(panic)),
                    },
                }
            })
            .collect()
    })
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "cell panicked".into()
    }
}

/// Sweep results as CSV: the cell label followed by the shared metric
/// columns.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let metric_cols = super::metrics::metrics_csv_header()
        .splitn(2, ',')
        .nth(1)
        .unwrap();
    let mut out = format!("label,{metric_cols}\n");
    for row in rows {
        match (&row.metrics, &row.error) {
            (Some(m), _) => {
                out.push_str(&super::metrics::metrics_csv_row(&row.label, m));
                out.push('\n');
            }
            (None, Some(e)) => {
                out.push_str(&format!(
                    "{},error:{},,,,,,,,,\n",
                    row.label,
                    e.replace(',', ";")
                ));
            }
            (None, None) => unreachable!(),
        }
    }
    out
}
