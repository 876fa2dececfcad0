//! `confrob`: decision-aware conformal sets for robust optimization.
//!
//! Subcommands: `gen-data` (synthetic CSV), `run` (experiment from a TOML
//! config), `reproduce` (benchmark tables at desk or paper scale), `sweep`
//! (sensitivity sweeps), `validate` (oracle suite), `version`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod config;
mod reference;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use confrob::data;
use confrob::pipeline::{
    run_experiment, run_sweep, EvalReport, ExperimentConfig, SweepConfig, SweepKind,
    TaskKind,
};

use config::{LearnerConfig, RunConfig, SplitConfig};

/// A CLI failure with its intended exit code.
#[derive(Debug)]
pub struct CliError {
    message: String,
    exit: u8,
}

impl CliError {
    fn config(message: String) -> Self {
        Self { message, exit: 2 }
    }

    fn config_str(message: &str) -> Self {
        Self::config(message.to_string())
    }

    fn runtime(message: String) -> Self {
        Self { message, exit: 1 }
    }

    fn from_config_err(e: impl std::fmt::Display) -> Self {
        Self::config(e.to_string())
    }

    fn from_runtime_err(e: impl std::fmt::Display) -> Self {
        Self::runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "confrob", version, about = "Decision-aware conformal sets for robust optimization")]
struct Cli {
    /// Offset added to every seed, for disjoint replication batches.
    #[arg(long, global = true, env = "CONFROB_SEED_OFFSET", default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV.
    GenData {
        /// Number of rows (at least 1).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Outcome dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment described by a TOML config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Print the resolved job matrix and run nothing.
        #[arg(long)]
        dry_run: bool,
        /// Worker count for independent cells (default 1 keeps timing
        /// columns stable).
        #[arg(long)]
        jobs: Option<usize>,
        /// Run directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce the benchmark tables at desk or paper scale.
    Reproduce {
        /// Which table: synthetic | energy.
        #[arg(long)]
        table: String,
        /// desk (n=m=100, 500 test, 3 seeds) or paper (n=m=300, 1000 test,
        /// 5 seeds).
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Energy CSV path (required for --table energy).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "runs/reproduce")]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Sensitivity sweeps over the learn fraction, outcome dimension, or
    /// hyperplane count.
    Sweep {
        /// split-fraction | dimension | hyperplanes
        #[arg(long)]
        kind: String,
        /// Comma-separated sweep values (fractions or integers).
        #[arg(long)]
        values: Option<String>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the oracle validation suite and emit a pass/fail JSON report.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random instances for the quantile/MILP check.
        #[arg(long, default_value_t = 50)]
        milp_trials: usize,
        /// Random instances for the duality check.
        #[arg(long, default_value_t = 100)]
        duality_trials: usize,
        /// Resampled splits for the coverage band.
        #[arg(long, default_value_t = 200)]
        coverage_reps: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::GenData { n, seed, d, out } => cmd_gen_data(n, seed + cli.seed_offset, d, &out),
        Command::Run {
            config,
            dry_run,
            jobs,
            out,
        } => cmd_run(&config, dry_run, jobs, out, cli.seed_offset),
        Command::Reproduce {
            table,
            scale,
            data,
            out,
            jobs,
        } => cmd_reproduce(&table, &scale, data, out, jobs, cli.seed_offset),
        Command::Sweep {
            kind,
            values,
            seeds,
            out,
            jobs,
        } => cmd_sweep(&kind, values, seeds, out, jobs, cli.seed_offset),
        Command::Validate {
            seed,
            milp_trials,
            duality_trials,
            coverage_reps,
            out,
        } => cmd_validate(
            seed + cli.seed_offset,
            milp_trials,
            duality_trials,
            coverage_reps,
            out,
        ),
        Command::Version => {
            println!("confrob {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_gen_data(n: usize, seed: u64, d: usize, out: &Path) -> Result<ExitCode, CliError> {
    if n == 0 {
        return Err(CliError::config_str("--n must be at least 1"));
    }
    let ds = data::gen_synthetic(n, d, seed).map_err(CliError::from_config_err)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
        }
    }
    data::write_csv(&ds, out).map_err(CliError::from_runtime_err)?;
    println!("wrote {} rows to {}", n, out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(
    config_path: &Path,
    dry_run: bool,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    seed_offset: u64,
) -> Result<ExitCode, CliError> {
    let file = RunConfig::parse_file(config_path)?;
    let out_dir = out
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs/run"));
    let cfg = file.resolve(out_dir.clone(), seed_offset, jobs)?;

    if dry_run {
        println!("job matrix ({} cells):", cfg.seeds.len() * cfg.methods.len());
        for &seed in &cfg.seeds {
            for method in &cfg.methods {
                println!("  task={} method={} seed={seed}", cfg.task.name(), method.name());
            }
        }
        return Ok(ExitCode::SUCCESS);
    }

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", out_dir.display())))?;
    // Echo the resolved config so the run can be reproduced from its own
    // directory.
    let mut resolved = file.clone();
    resolved.out_dir = Some(out_dir.clone());
    resolved.seeds = cfg.seeds.clone();
    resolved.jobs = cfg.jobs;
    std::fs::write(out_dir.join("config.toml"), resolved.to_toml())
        .map_err(|e| CliError::runtime(format!("config echo: {e}")))?;

    let report = run_experiment(&cfg).map_err(CliError::from_runtime_err)?;
    print_summary(&report);
    println!("artifacts in {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn reproduce_config(
    task: TaskKind,
    scale: &str,
    data_path: Option<PathBuf>,
    out_dir: PathBuf,
    jobs: Option<usize>,
    seed_offset: u64,
) -> Result<ExperimentConfig, CliError> {
    let (split, seeds) = match (task, scale) {
        (TaskKind::Energy, _) => (
            SplitConfig::fractions(0.5, 0.15, 0.15, 0.2),
            match scale {
                "desk" => vec![0, 1, 2],
                "paper" => vec![0, 1, 2, 3, 4],
                other => {
                    return Err(CliError::config(format!(
                        "--scale '{other}' is not 'desk' or 'paper'"
                    )))
                }
            },
        ),
        (_, "desk") => (SplitConfig::sizes(400, 100, 100, 500), vec![0, 1, 2]),
        (_, "paper") => (
            SplitConfig::sizes(1200, 300, 300, 1000),
            vec![0, 1, 2, 3, 4],
        ),
        (_, other) => {
            return Err(CliError::config(format!(
                "--scale '{other}' is not 'desk' or 'paper'"
            )))
        }
    };
    let file = RunConfig {
        task: task.name().into(),
        alpha: 0.1,
        k: 4,
        d: 2,
        seeds,
        methods: vec![
            "bonferroni-box".into(),
            "conformal-box".into(),
            "conformal-ball".into(),
            "fixed-polyhedron".into(),
            "min-size-polyhedron".into(),
            "ours-no-recal".into(),
            "ours".into(),
        ],
        out_dir: Some(out_dir.clone()),
        jobs: jobs.unwrap_or(1),
        data_path,
        bounding_pad: 0.10,
        mc_volume_samples: 100_000,
        ridge_lambda: 1e-3,
        split,
        learner: LearnerConfig::default(),
    };
    file.resolve(out_dir, seed_offset, jobs)
}

#[derive(Serialize)]
struct ReproduceRow {
    task: String,
    method: String,
    metric: String,
    value: f64,
    reference: f64,
    delta: f64,
}

#[derive(Serialize)]
struct ReproduceReport {
    schema_version: u32,
    scale: String,
    reference_source: String,
    note: String,
    rows: Vec<ReproduceRow>,
}

fn cmd_reproduce(
    table: &str,
    scale: &str,
    data: Option<PathBuf>,
    out: PathBuf,
    jobs: Option<usize>,
    seed_offset: u64,
) -> Result<ExitCode, CliError> {
    let tasks: Vec<TaskKind> = match table {
        "synthetic" => vec![TaskKind::Linear, TaskKind::Quadratic, TaskKind::Newsvendor],
        "energy" => {
            if data.is_none() {
                return Err(CliError::config_str(
                    "--data is required for --table energy (path to the energy CSV)",
                ));
            }
            vec![TaskKind::Energy]
        }
        other => {
            return Err(CliError::config(format!(
                "--table '{other}' is not 'synthetic' or 'energy'"
            )))
        }
    };

    let mut rows = Vec::new();
    for task in &tasks {
        let task_dir = out.join(task.name());
        let cfg = reproduce_config(
            *task,
            scale,
            data.clone(),
            task_dir.clone(),
            jobs,
            seed_offset,
        )?;
        let report = run_experiment(&cfg).map_err(CliError::from_runtime_err)?;
        print_summary(&report);
        for &(method, cov, vol, wc, regret) in reference::reference_rows(task.name()) {
            for (metric, reference) in [
                ("coverage", cov),
                ("volume_rel", vol),
                ("wc_cost", wc),
                ("regret", regret),
            ] {
                if let Some(value) = report.mean_metric(method, metric) {
                    rows.push(ReproduceRow {
                        task: task.name().into(),
                        method: method.into(),
                        metric: metric.into(),
                        value,
                        reference,
                        delta: value - reference,
                    });
                }
            }
        }
    }

    let rep = ReproduceReport {
        schema_version: 1,
        scale: scale.into(),
        reference_source: reference::reference_source(tasks[0].name()).into(),
        note: "the synthetic generator is documented but not fully pinned upstream; \
               orderings are comparable, magnitudes are informational"
            .into(),
        rows,
    };
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    let path = out.join("reproduce_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&rep).expect("report"))
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;

    let mut table_text = String::new();
    let _ = writeln!(
        table_text,
        "{:<11} {:<20} {:<11} {:>9} {:>9} {:>9}",
        "task", "method", "metric", "value", "ref", "delta"
    );
    for r in &rep.rows {
        let _ = writeln!(
            table_text,
            "{:<11} {:<20} {:<11} {:>9.3} {:>9.3} {:>+9.3}",
            r.task, r.method, r.metric, r.value, r.reference, r.delta
        );
    }
    println!("{table_text}");
    println!("report written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_values(values: Option<String>, default: &[f64]) -> Result<Vec<f64>, CliError> {
    match values {
        None => Ok(default.to_vec()),
        Some(s) => s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::config(format!("--values: '{v}' is not numeric")))
            })
            .collect(),
    }
}

fn cmd_sweep(
    kind: &str,
    values: Option<String>,
    seeds: usize,
    out: PathBuf,
    jobs: Option<usize>,
    seed_offset: u64,
) -> Result<ExitCode, CliError> {
    if seeds == 0 {
        return Err(CliError::config_str("--seeds must be at least 1"));
    }
    // Desk-scale base configuration for the decision-aware method.
    let file = RunConfig {
        task: "linear".into(),
        alpha: 0.1,
        k: 4,
        d: 2,
        seeds: (0..seeds as u64).collect(),
        methods: vec!["ours".into()],
        out_dir: Some(out.clone()),
        jobs: jobs.unwrap_or(1),
        data_path: None,
        bounding_pad: 0.10,
        mc_volume_samples: 100_000,
        ridge_lambda: 1e-3,
        split: SplitConfig::sizes(400, 100, 100, 300),
        learner: LearnerConfig::default(),
    };
    let base = file.resolve(out.clone(), seed_offset, jobs)?;

    let sweep_kind = match kind {
        "split-fraction" => SweepKind::SplitFraction {
            fractions: parse_values(values, &[0.1, 0.3, 0.5, 0.7, 0.9])?,
            learn_cal_total: 200,
        },
        "dimension" => {
            let dims = parse_values(values, &[2.0, 3.0, 4.0])?
                .into_iter()
                .map(|v| v as usize)
                .collect();
            SweepKind::OutcomeDim { dims }
        }
        "hyperplanes" => {
            let ks = parse_values(values, &[4.0, 6.0, 8.0, 12.0])?
                .into_iter()
                .map(|v| v as usize)
                .collect();
            SweepKind::Hyperplanes { ks }
        }
        other => {
            return Err(CliError::config(format!(
                "--kind '{other}' is not split-fraction, dimension, or hyperplanes"
            )))
        }
    };
    let rows = run_sweep(&SweepConfig {
        base,
        kind: sweep_kind,
    })
    .map_err(CliError::from_runtime_err)?;
    println!("{:<16} {:>8} {:<11} {:>10} {:>10}", "sweep", "value", "metric", "mean", "std");
    for r in &rows {
        println!(
            "{:<16} {:>8} {:<11} {:>10.4} {:>10.4}",
            r.sweep, r.value, r.metric, r.mean, r.std
        );
    }
    println!("sweep.csv written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(
    seed: u64,
    milp_trials: usize,
    duality_trials: usize,
    coverage_reps: usize,
    out: Option<PathBuf>,
) -> Result<ExitCode, CliError> {
    let report =
        confrob::validation::run_all_with(seed, milp_trials, duality_trials, coverage_reps);
    let json = serde_json::to_string_pretty(&report).expect("report");
    match out {
        Some(path) => {
            std::fs::write(&path, &json)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            println!("validation report written to {}", path.display());
        }
        None => println!("{json}"),
    }
    for check in &report.checks {
        let status = if check.inconclusive {
            "INCONCLUSIVE"
        } else if check.passed {
            "PASS"
        } else {
            "FAIL"
        };
        eprintln!("{status}: {} ({} trials)", check.name, check.trials);
    }
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::runtime("validation checks failed".into()))
    }
}

fn print_summary(report: &EvalReport) {
    println!(
        "{:<11} {:<20} {:>9} {:>9} {:>9} {:>9}",
        "task", "method", "coverage", "vol_rel", "wc_cost", "regret"
    );
    let summary = report.summary();
    let methods: Vec<(String, String)> = {
        let mut seen = Vec::new();
        for row in &summary {
            let key = (row.task.clone(), row.method.clone());
            if !seen.contains(&key) {
                seen.push(key);
            }
        }
        seen
    };
    for (task, method) in methods {
        let get = |metric: &str| -> f64 {
            summary
                .iter()
                .find(|r| r.task == task && r.method == method && r.metric == metric)
                .map(|r| r.mean)
                .unwrap_or(f64::NAN)
        };
        println!(
            "{:<11} {:<20} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            task,
            method,
            get("coverage"),
            get("volume_rel"),
            get("wc_cost"),
            get("regret")
        );
    }
}
