//! Command-line surface for the dispatch simulator.
//!
//! Subcommands: `generate-region`, `train`, `evaluate`, `compare`,
//! `sweep`, and `simulate`. Every run writes a `manifest.json` into its
//! output directory recording the exact command, resolved seed, and the
//! config text, so a run can be reproduced byte for byte.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use dispatchsim_core::baselines::ThresholdPolicy;
use dispatchsim_core::experiment::{
    expand_cells, metrics_csv_header, metrics_csv_row, run_day, run_evaluation, run_sweep,
    run_training, sweep_csv, EvalPolicy, ExperimentFile, ResolvedExperiment, SweepFile, TraceRow,
    TrainingMode,
};
use dispatchsim_core::mdp::state_action_space_size;
use dispatchsim_core::neural::Network;
use dispatchsim_core::region::{generate_synthetic_region, save_region};
use dispatchsim_core::seeds;

const OUT_DIR_ENV: &str = "DISPATCHSIM_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "dispatchsim",
    version,
    about = "Courier dispatch simulator, value-network trainer, and evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic region file.
    GenerateRegion {
        #[arg(long, default_value_t = 10)]
        height: u32,
        #[arg(long, default_value_t = 10)]
        width: u32,
        #[arg(long, default_value_t = 7)]
        restaurants: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output path for the region file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an agent per the experiment config.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed; controls all randomness in the run.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint greedily over the test days.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate the rule-based baselines and a checkpoint on shared seeds.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train and evaluate every cell of a config grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Parallel cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Trace one simulated day under a policy.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `p45`, `p60`, or `checkpoint:<path>`.
        #[arg(long, default_value = "p45")]
        policy: String,
        /// Test-day index to simulate.
        #[arg(long, default_value_t = 0)]
        day: u32,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the per-minute trace to this file (default: trace.csv in
        /// the output directory).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: Vec<String>,
    version: String,
    seed: u64,
    config_path: Option<String>,
    /// The fully resolved config (every field explicit); rerunning with
    /// this text and the recorded seed reproduces the run byte for byte.
    config_text: String,
    outputs: Vec<String>,
    wall_clock_seconds: f64,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenerateRegion {
            height,
            width,
            restaurants,
            seed,
            out,
        } => {
            let region = generate_synthetic_region(height, width, restaurants, seed)?;
            save_region(&region, &out)?;
            println!(
                "wrote {}: {}x{} grid, {} restaurants, depot {}",
                out.display(),
                region.height,
                region.width,
                region.restaurants.len(),
                region.depot
            );
            Ok(())
        }
        Command::Train {
            config,
            seed,
            out_dir,
        } => cmd_train(config.as_deref(), seed, out_dir),
        Command::Evaluate {
            config,
            checkpoint,
            seed,
            out_dir,
        } => cmd_evaluate(config.as_deref(), &checkpoint, seed, out_dir),
        Command::Compare {
            config,
            checkpoint,
            seed,
            out_dir,
        } => cmd_compare(config.as_deref(), &checkpoint, seed, out_dir),
        Command::Sweep {
            config,
            jobs,
            seed,
            out_dir,
        } => cmd_sweep(&config, jobs, seed, out_dir),
        Command::Simulate {
            config,
            policy,
            day,
            seed,
            trace,
            out_dir,
        } => cmd_simulate(config.as_deref(), &policy, day, seed, trace, out_dir),
    }
}

/// Loads the config (or the built-in defaults when absent), folding an
/// optional seed override into both the resolution and the recorded
/// config. Returns the resolution, the fully resolved config text (every
/// field explicit, suitable for exact reruns), and the config path.
fn load_experiment(
    config: Option<&Path>,
    seed: Option<u64>,
) -> Result<(ResolvedExperiment, String, Option<String>)> {
    let (mut file, path_str) = match config {
        Some(path) => {
            let file = ExperimentFile::load(path)
                .with_context(|| format!("loading config {}", path.display()))?;
            (file, Some(path.display().to_string()))
        }
        None => (ExperimentFile::default(), None),
    };
    if let Some(s) = seed {
        file.protocol.seed = s;
    }
    let base = config.and_then(|p| p.parent()).unwrap_or(Path::new("."));
    let resolved = file.resolve(base)?;
    Ok((resolved, file.to_toml(), path_str))
}

fn resolve_out_dir(out_dir: Option<PathBuf>, subcommand: &str) -> Result<PathBuf> {
    let dir = out_dir.unwrap_or_else(|| {
        let base = std::env::var(OUT_DIR_ENV).unwrap_or_else(|_| "runs".into());
        Path::new(&base).join(subcommand)
    });
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn write_manifest(
    dir: &Path,
    seed: u64,
    config_path: Option<String>,
    config_text: String,
    outputs: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: std::env::args().collect(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_path,
        config_text,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_train(config: Option<&Path>, seed: Option<u64>, out_dir: Option<PathBuf>) -> Result<()> {
    let started = Instant::now();
    let (exp, text, path_str) = load_experiment(config, seed)?;
    let dir = resolve_out_dir(out_dir, "train")?;

    let region = &exp.scenario.region;
    let space = state_action_space_size(
        u64::from(region.height.max(region.width)).max(2),
        region.restaurants.len() as u64,
        exp.scenario.couriers as u64,
        exp.scenario.max_queue as u64,
    );
    println!(
        "training {} ({:?} mode) on {}: {} days, seed {}",
        exp.variant, exp.mode, region.name, exp.training_days, exp.seed
    );
    println!(
        "state-action space (accept/reject/depot/restaurant): {}/{}/{}/{}",
        space.accept, space.reject, space.depot, space.restaurant
    );

    let (agent, log) = run_training(
        &exp.scenario,
        &exp.agent,
        exp.mode,
        exp.training_days,
        exp.seed,
    );

    let ckpt = dir.join("model.ckpt");
    agent.online.save_checkpoint(&ckpt)?;
    let log_path = dir.join("training_log.csv");
    std::fs::write(&log_path, log.to_csv())?;
    let resolved_cfg = dir.join("resolved-config.toml");
    std::fs::write(&resolved_cfg, &text)?;

    if let Some(last) = log.rows.last() {
        println!(
            "done: day {} reward {:.1}, mean loss {:.4}, rejected {}/{}",
            last.day, last.reward, last.mean_loss, last.rejected, last.generated
        );
    }
    println!("checkpoint: {}", ckpt.display());
    write_manifest(
        &dir,
        exp.seed,
        path_str,
        text,
        &[ckpt, log_path, resolved_cfg],
        started,
    )
}

/// Builds the evaluation policy for a checkpoint under the experiment's
/// mode, validating the network dimensions against the scenario.
fn load_policy(exp: &ResolvedExperiment, checkpoint: &Path) -> Result<EvalPolicy> {
    if !checkpoint.exists() {
        bail!("checkpoint not found: {}", checkpoint.display());
    }
    let net = Network::load_checkpoint(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let (want_in, want_out) = exp.mode.network_shape(&exp.scenario);
    if net.desc.input != want_in || net.desc.output != want_out {
        bail!(
            "checkpoint {} has shape {}x{}, but the config ({:?} mode, {} couriers, {} restaurants) needs {}x{}",
            checkpoint.display(),
            net.desc.input,
            net.desc.output,
            exp.mode,
            exp.scenario.couriers,
            exp.scenario.region.restaurants.len(),
            want_in,
            want_out
        );
    }
    Ok(match exp.mode {
        TrainingMode::Single => EvalPolicy::SingleShared(net),
        TrainingMode::Multi => EvalPolicy::Multi(net),
    })
}

fn cmd_evaluate(
    config: Option<&Path>,
    checkpoint: &Path,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
) -> Result<()> {
    let started = Instant::now();
    let (exp, text, path_str) = load_experiment(config, seed)?;
    let dir = resolve_out_dir(out_dir, "evaluate")?;

    let mut policy = load_policy(&exp, checkpoint)?;
    let mut report = run_evaluation(&exp.scenario, &mut policy, exp.test_days, exp.seed);
    report.policy = exp.variant.clone();

    let csv_path = dir.join("evaluation.csv");
    let mut csv = format!("{}\n", metrics_csv_header());
    csv.push_str(&metrics_csv_row(&report.policy, &report.metrics));
    csv.push('\n');
    std::fs::write(&csv_path, &csv)?;
    let json_path = dir.join("evaluation.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;

    print!("{csv}");
    write_manifest(
        &dir,
        exp.seed,
        path_str,
        text,
        &[csv_path, json_path],
        started,
    )
}

fn cmd_compare(
    config: Option<&Path>,
    checkpoint: &Path,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
) -> Result<()> {
    let started = Instant::now();
    let (exp, text, path_str) = load_experiment(config, seed)?;
    let dir = resolve_out_dir(out_dir, "compare")?;

    let mut rows = format!("{}\n", metrics_csv_header());
    for baseline in [ThresholdPolicy::p45(), ThresholdPolicy::p60()] {
        let mut policy = EvalPolicy::Baseline(baseline);
        let report = run_evaluation(&exp.scenario, &mut policy, exp.test_days, exp.seed);
        rows.push_str(&metrics_csv_row(&report.policy, &report.metrics));
        rows.push('\n');
    }
    let mut policy = load_policy(&exp, checkpoint)?;
    let report = run_evaluation(&exp.scenario, &mut policy, exp.test_days, exp.seed);
    rows.push_str(&metrics_csv_row(&exp.variant, &report.metrics));
    rows.push('\n');

    let csv_path = dir.join("comparison.csv");
    std::fs::write(&csv_path, &rows)?;
    print!("{rows}");
    write_manifest(&dir, exp.seed, path_str, text, &[csv_path], started)
}

fn cmd_sweep(
    config: &Path,
    jobs: usize,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
) -> Result<()> {
    let started = Instant::now();
    let file =
        SweepFile::load(config).with_context(|| format!("loading config {}", config.display()))?;
    let base_dir = config.parent().unwrap_or(Path::new("."));
    let mut base = file.base.resolve(base_dir)?;
    if let Some(s) = seed {
        base.seed = s;
    }
    let dir = resolve_out_dir(out_dir, "sweep")?;

    let cells = expand_cells(&base, &file.sweep);
    println!("sweeping {} cells with {} job(s)", cells.len(), jobs);
    let rows = run_sweep(&cells, jobs);
    let csv = sweep_csv(&rows);
    let csv_path = dir.join("sweep.csv");
    std::fs::write(&csv_path, &csv)?;
    print!("{csv}");
    for row in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "cell {} failed: {}",
            row.label,
            row.error.as_deref().unwrap_or("unknown")
        );
    }
    let text = std::fs::read_to_string(config).unwrap_or_default();
    write_manifest(
        &dir,
        base.seed,
        Some(config.display().to_string()),
        text,
        &[csv_path],
        started,
    )
}

fn cmd_simulate(
    config: Option<&Path>,
    policy_spec: &str,
    day: u32,
    seed: Option<u64>,
    trace: Option<PathBuf>,
    out_dir: Option<PathBuf>,
) -> Result<()> {
    let started = Instant::now();
    let (exp, text, path_str) = load_experiment(config, seed)?;
    let dir = resolve_out_dir(out_dir, "simulate")?;

    let mut policy = match policy_spec {
        "p45" => EvalPolicy::Baseline(ThresholdPolicy::p45()),
        "p60" => EvalPolicy::Baseline(ThresholdPolicy::p60()),
        other => match other.strip_prefix("checkpoint:") {
            Some(path) => load_policy(&exp, Path::new(path))?,
            None => bail!("unknown policy `{other}` (expected p45, p60, or checkpoint:<path>)"),
        },
    };

    let day_seed = seeds::derive(exp.seed, seeds::STREAM_TEST, u64::from(day));
    let mut rows: Vec<TraceRow> = Vec::new();
    let outcome = run_day(&exp.scenario, day, day_seed, &mut policy, Some(&mut rows));

    let trace_path = trace.unwrap_or_else(|| dir.join("trace.csv"));
    let mut csv = String::from("minute,courier,row,col,mode,event\n");
    for r in &rows {
        let courier = if r.courier == usize::MAX {
            "-".to_string()
        } else {
            r.courier.to_string()
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.minute, courier, r.row, r.col, r.mode, r.event
        ));
    }
    std::fs::write(&trace_path, csv)?;

    let day_json = dir.join("day.json");
    std::fs::write(&day_json, serde_json::to_string_pretty(&outcome)?)?;
    println!(
        "day {day} under {policy_spec}: {} orders, {} delivered, {} rejected, reward {:.1}",
        outcome.generated, outcome.delivered, outcome.rejected, outcome.reward
    );
    println!("trace: {}", trace_path.display());
    write_manifest(
        &dir,
        exp.seed,
        path_str,
        text,
        &[trace_path, day_json],
        started,
    )
}
