//! Experiment orchestration: seeds x methods x tasks, sweeps, and run
//! artifacts.
//!
//! A run directory receives `results.csv` (long format: seed, task, method,
//! metric, value), `summary.json` (mean and std per cell), `timings.csv`
//! (wall-clock per phase; excluded from the determinism contract because
//! wall-clock is not a function of the configuration), and one JSON file per
//! (task, method, seed) cell under `cells/` for resumability. Metric outputs
//! are a pure function of the configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    prepare_task, reference_box_volume, LearnerSettings, Method,
    MethodMetrics, PhaseTimings, PipelineError,
};
use crate::conformal;
use crate::data::{self, SplitSpec};
use crate::robust::Objective;

pub const SCHEMA_VERSION: u32 = 1;

/// Which benchmark task a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Linear,
    Quadratic,
    Newsvendor,
    Energy,
}

impl TaskKind {
    pub fn parse(name: &str) -> Result<Self, PipelineError> {
        Ok(match name {
            "linear" => TaskKind::Linear,
            "quadratic" => TaskKind::Quadratic,
            "newsvendor" => TaskKind::Newsvendor,
            "energy" => TaskKind::Energy,
            other => {
                return Err(PipelineError::BadConfig(format!(
                    "unknown task '{other}' (expected linear|quadratic|newsvendor|energy)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Linear => "linear",
            TaskKind::Quadratic => "quadratic",
            TaskKind::Newsvendor => "newsvendor",
            TaskKind::Energy => "energy",
        }
    }

    /// The decision objective the task benchmarks.
    pub fn objective(&self, d: usize) -> Result<Objective, PipelineError> {
        let mut c = vec![0.0; d];
        if d >= 1 {
            c[0] = -0.08;
        }
        Ok(match self {
            TaskKind::Linear | TaskKind::Energy => Objective::linear(c, None),
            TaskKind::Quadratic => {
                if d != 2 {
                    return Err(PipelineError::BadConfig(
                        "the quadratic task needs outcome dimension 2".into(),
                    ));
                }
                Objective::quadratic(c, None, 0.08)
            }
            TaskKind::Newsvendor => {
                if d != 2 {
                    return Err(PipelineError::BadConfig(
                        "the newsvendor task needs outcome dimension 2".into(),
                    ));
                }
                Objective::newsvendor(0.3, 0.7, 2)
            }
        })
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub alpha: f64,
    pub k: usize,
    pub d: usize,
    pub split: SplitSpec,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub learner: LearnerSettings,
    pub data_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub bounding_pad: f64,
    pub mc_volume_samples: usize,
    pub ridge_lambda: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PipelineError::BadConfig(format!(
                "alpha: {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.k < self.d + 1 {
            return Err(PipelineError::BadConfig(format!(
                "k: {} below d + 1 = {}",
                self.k,
                self.d + 1
            )));
        }
        if self.seeds.is_empty() {
            return Err(PipelineError::BadConfig("seeds: empty".into()));
        }
        if self.methods.is_empty() {
            return Err(PipelineError::BadConfig("methods: empty".into()));
        }
        if self.task == TaskKind::Energy && self.data_path.is_none() {
            return Err(PipelineError::BadConfig(
                "data_path: the energy task needs a CSV path".into(),
            ));
        }
        if let SplitSpec::Sizes(a, b, c, d) = self.split {
            if a == 0 || b == 0 || c == 0 || d == 0 {
                return Err(PipelineError::BadConfig(
                    "split: all four sizes must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn total_rows(&self) -> usize {
        match self.split {
            SplitSpec::Sizes(a, b, c, d) => a + b + c + d,
            SplitSpec::Fractions(..) => 0, // determined by the dataset
        }
    }
}

/// One completed (task, method, seed) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub schema_version: u32,
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub metrics: MethodMetrics,
    pub timings: PhaseTimings,
    /// Learned hyperplanes, when the method produces a polytope.
    pub params: Option<conformal::ParamsSnapshot>,
}

/// Aggregated run output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub cells: Vec<CellResult>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub task: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

pub const METRIC_NAMES: [&str; 5] = ["coverage", "volume", "volume_rel", "wc_cost", "regret"];

fn metric_value(m: &MethodMetrics, name: &str) -> f64 {
    match name {
        "coverage" => m.coverage,
        "volume" => m.volume,
        "volume_rel" => m.volume_rel,
        "wc_cost" => m.wc_cost,
        "regret" => m.regret,
        _ => f64::NAN,
    }
}

impl EvalReport {
    /// Mean and standard deviation per (task, method, metric).
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(String, String), Vec<&MethodMetrics>> = BTreeMap::new();
        for cell in &self.cells {
            groups
                .entry((cell.task.clone(), cell.method.clone()))
                .or_default()
                .push(&cell.metrics);
        }
        let mut rows = Vec::new();
        for ((task, method), ms) in groups {
            for metric in METRIC_NAMES {
                let vals: Vec<f64> = ms.iter().map(|m| metric_value(m, metric)).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
                rows.push(SummaryRow {
                    task: task.clone(),
                    method: method.clone(),
                    metric: metric.into(),
                    mean,
                    std,
                    n_seeds: vals.len(),
                });
            }
        }
        rows
    }

    /// Mean of one metric for one method across seeds.
    pub fn mean_metric(&self, method: &str, metric: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.method == method)
            .map(|c| metric_value(&c.metrics, metric))
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Build the dataset for a (task, seed) pair, including the energy
/// standardization step.
fn build_seed_data(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(data::Dataset, data::Splits), PipelineError> {
    match cfg.task {
        TaskKind::Energy => {
            let path = cfg.data_path.as_ref().expect("validated");
            let raw = data::load_energy(path)?;
            let splits = data::make_splits(raw.len(), cfg.split, seed)?;
            let standardizer = data::Standardizer::fit(&raw.x, &splits.train)?;
            Ok((standardizer.transform_dataset(&raw), splits))
        }
        _ => {
            let total = cfg.total_rows();
            if total == 0 {
                return Err(PipelineError::BadConfig(
                    "synthetic tasks need absolute split sizes".into(),
                ));
            }
            let ds = data::gen_synthetic(total, cfg.d, seed)?;
            let splits = data::make_splits(total, cfg.split, seed)?;
            Ok((ds, splits))
        }
    }
}

/// Compute every missing cell for one seed.
fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    missing: &[Method],
) -> Result<Vec<CellResult>, PipelineError> {
    let (ds, splits) = build_seed_data(cfg, seed)?;
    let task = prepare_task(
        &ds,
        &splits,
        cfg.alpha,
        cfg.k,
        cfg.ridge_lambda,
        cfg.bounding_pad,
    )?;
    let obj = cfg.task.objective(cfg.d)?;
    let reference = reference_box_volume(&task, cfg.mc_volume_samples, seed)?;
    let mut out = Vec::new();
    for &method in missing {
        let (metrics, timings, params) = super::run_method(
            method,
            &task,
            &obj,
            &cfg.learner,
            seed,
            reference,
            cfg.mc_volume_samples,
        )?;
        out.push(CellResult {
            schema_version: SCHEMA_VERSION,
            task: cfg.task.name().into(),
            method: method.name().into(),
            seed,
            metrics,
            timings,
            params,
        });
    }
    Ok(out)
}

fn cell_path(dir: &Path, cfg: &ExperimentConfig, method: Method, seed: u64) -> PathBuf {
    dir.join(format!(
        "{}_{}_{}.json",
        cfg.task.name(),
        method.name(),
        seed
    ))
}

/// Execute the experiment, reusing any cells already on disk, and write the
/// run artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport, PipelineError> {
    cfg.validate()?;
    let cells_dir = cfg.out_dir.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(io_err(&cells_dir))?;

    // Load cached cells; collect the missing work per seed.
    let mut cells: Vec<CellResult> = Vec::new();
    let mut work: Vec<(u64, Vec<Method>)> = Vec::new();
    for &seed in &cfg.seeds {
        let mut missing = Vec::new();
        for &method in &cfg.methods {
            let path = cell_path(&cells_dir, cfg, method, seed);
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    let cell: CellResult = serde_json::from_str(&text).map_err(|e| {
                        PipelineError::BadConfig(format!(
                            "corrupt cell file {}: {e}",
                            path.display()
                        ))
                    })?;
                    cells.push(cell);
                }
                Err(_) => missing.push(method),
            }
        }
        if !missing.is_empty() {
            work.push((seed, missing));
        }
    }

    // Seeds are independent jobs; the merge below is keyed, so order of
    // completion does not matter.
    let computed: Vec<Result<Vec<CellResult>, PipelineError>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| PipelineError::BadConfig(format!("thread pool: {e}")))?;
        pool.install(|| {
            work.par_iter()
                .map(|(seed, missing)| run_seed(cfg, *seed, missing))
                .collect()
        })
    } else {
        work.iter()
            .map(|(seed, missing)| run_seed(cfg, *seed, missing))
            .collect()
    };
    for batch in computed {
        for cell in batch? {
            let path = cells_dir.join(format!("{}_{}_{}.json", cell.task, cell.method, cell.seed));
            let text = serde_json::to_string_pretty(&cell)
                .expect("cell serialization cannot fail");
            std::fs::write(&path, text).map_err(io_err(&path))?;
            cells.push(cell);
        }
    }

    // Canonical order: task, method, seed.
    cells.sort_by(|a, b| {
        (&a.task, &a.method, a.seed).cmp(&(&b.task, &b.method, b.seed))
    });

    let mut notes = Vec::new();
    if cfg.task == TaskKind::Energy {
        if let SplitSpec::Fractions(..) = cfg.split {
            notes.push(
                "energy split uses proportional fractions: the 1200/300/300/1000 \
                 protocol exceeds the 768 available rows"
                    .to_string(),
            );
        }
    }
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        cells,
        notes,
    };
    write_artifacts(&report, &cfg.out_dir)?;
    Ok(report)
}

/// Write results.csv, summary.json, and timings.csv.
pub fn write_artifacts(report: &EvalReport, out_dir: &Path) -> Result<(), PipelineError> {
    let mut results = String::from("seed,task,method,metric,value\n");
    for cell in &report.cells {
        for metric in METRIC_NAMES {
            let _ = writeln!(
                results,
                "{},{},{},{},{}",
                cell.seed,
                cell.task,
                cell.method,
                metric,
                metric_value(&cell.metrics, metric)
            );
        }
    }
    let path = out_dir.join("results.csv");
    std::fs::write(&path, results).map_err(io_err(&path))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        schema_version: u32,
        rows: Vec<SummaryRow>,
        notes: &'a [String],
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        rows: report.summary(),
        notes: &report.notes,
    };
    let path = out_dir.join("summary.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&summary).expect("summary serialization"),
    )
    .map_err(io_err(&path))?;

    let mut timings = String::from("seed,task,method,learn_secs,calibrate_secs,evaluate_secs\n");
    for cell in &report.cells {
        let _ = writeln!(
            timings,
            "{},{},{},{},{},{}",
            cell.seed,
            cell.task,
            cell.method,
            cell.timings.learn_secs,
            cell.timings.calibrate_secs,
            cell.timings.evaluate_secs
        );
    }
    let path = out_dir.join("timings.csv");
    std::fs::write(&path, timings).map_err(io_err(&path))?;
    Ok(())
}

/// Sensitivity sweeps over the learn fraction, the outcome dimension, or the
/// number of hyperplanes.
#[derive(Debug, Clone)]
pub enum SweepKind {
    /// Learn fraction of a fixed learn+calibrate budget.
    SplitFraction {
        fractions: Vec<f64>,
        learn_cal_total: usize,
    },
    OutcomeDim { dims: Vec<usize> },
    Hyperplanes { ks: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub kind: SweepKind,
}

/// One aggregated sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub sweep: String,
    pub value: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

/// Run the decision-aware method across the sweep grid and aggregate the
/// metrics; emits `sweep.csv` into the base run directory.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, PipelineError> {
    let base = &cfg.base;
    base.validate()?;
    std::fs::create_dir_all(&base.out_dir).map_err(io_err(&base.out_dir))?;

    let points: Vec<(String, f64, ExperimentConfig)> = match &cfg.kind {
        SweepKind::SplitFraction {
            fractions,
            learn_cal_total,
        } => fractions
            .iter()
            .map(|&f| {
                let n_learn = ((f * *learn_cal_total as f64).round() as usize)
                    .clamp(1, learn_cal_total - 1);
                let n_cal = learn_cal_total - n_learn;
                let (train, test) = match base.split {
                    SplitSpec::Sizes(a, _, _, d) => (a, d),
                    _ => (400, 300),
                };
                let mut c = base.clone();
                c.split = SplitSpec::Sizes(train, n_learn, n_cal, test);
                ("learn_fraction".to_string(), f, c)
            })
            .collect(),
        SweepKind::OutcomeDim { dims } => dims
            .iter()
            .map(|&d| {
                let mut c = base.clone();
                c.d = d;
                // Templates in higher dimension need K >= 2d.
                c.k = base.k.max(2 * d);
                ("outcome_dim".to_string(), d as f64, c)
            })
            .collect(),
        SweepKind::Hyperplanes { ks } => ks
            .iter()
            .map(|&k| {
                let mut c = base.clone();
                c.k = k;
                ("hyperplanes".to_string(), k as f64, c)
            })
            .collect(),
    };

    let mut rows = Vec::new();
    for (name, value, mut point_cfg) in points {
        // Each sweep point keeps its own cell cache.
        point_cfg.out_dir = base
            .out_dir
            .join(format!("{}_{}", name, fmt_value(value)));
        let report = run_experiment(&point_cfg)?;
        for sr in report.summary() {
            if sr.method == "ours" {
                rows.push(SweepRow {
                    sweep: name.clone(),
                    value,
                    metric: sr.metric,
                    mean: sr.mean,
                    std: sr.std,
                });
            }
        }
    }

    let mut csv = String::from("sweep,value,metric,mean,std\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.sweep, r.value, r.metric, r.mean, r.std);
    }
    let path = base.out_dir.join("sweep.csv");
    std::fs::write(&path, csv).map_err(io_err(&path))?;
    Ok(rows)
}

fn fmt_value(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::LearnerKind;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            task: TaskKind::Linear,
            alpha: 0.1,
            k: 4,
            d: 2,
            split: SplitSpec::Sizes(60, 40, 40, 60),
            seeds: vec![0],
            methods: vec![
                Method::Ours(LearnerKind::Pinball),
                Method::ConformalBox,
            ],
            learner: LearnerSettings {
                iters: 50,
                ..LearnerSettings::default()
            },
            data_path: None,
            out_dir: dir.to_path_buf(),
            jobs: 1,
            bounding_pad: 0.10,
            mc_volume_samples: 2000,
            ridge_lambda: 1e-3,
        }
    }

    #[test]
    fn one_seed_two_methods_emits_two_cells() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&tiny_config(dir.path())).unwrap();
        assert_eq!(report.cells.len(), 2);
        assert!(dir.path().join("results.csv").exists());
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join("timings.csv").exists());
    }

    #[test]
    fn reruns_are_byte_identical_and_resumable() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_experiment(&tiny_config(d1.path())).unwrap();
        run_experiment(&tiny_config(d2.path())).unwrap();
        let r1 = std::fs::read(d1.path().join("results.csv")).unwrap();
        let r2 = std::fs::read(d2.path().join("results.csv")).unwrap();
        assert_eq!(r1, r2);
        let s1 = std::fs::read(d1.path().join("summary.json")).unwrap();
        let s2 = std::fs::read(d2.path().join("summary.json")).unwrap();
        assert_eq!(s1, s2);

        // Resume: a rerun in the same directory reuses cells and reproduces
        // the same results file.
        run_experiment(&tiny_config(d1.path())).unwrap();
        let r1b = std::fs::read(d1.path().join("results.csv")).unwrap();
        assert_eq!(r1, r1b);
    }

    #[test]
    fn parallel_jobs_match_sequential_output() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mut c1 = tiny_config(d1.path());
        c1.seeds = vec![0, 1, 2];
        let mut c2 = tiny_config(d2.path());
        c2.seeds = vec![0, 1, 2];
        c2.jobs = 3;
        run_experiment(&c1).unwrap();
        run_experiment(&c2).unwrap();
        let r1 = std::fs::read(d1.path().join("results.csv")).unwrap();
        let r2 = std::fs::read(d2.path().join("results.csv")).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn config_validation_names_fields() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.alpha = 1.5;
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("alpha"));

        let mut cfg = tiny_config(dir.path());
        cfg.k = 2;
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("k:"));
    }

    #[test]
    fn sweep_emits_rows_per_point_and_metric() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = tiny_config(dir.path());
        base.methods = vec![Method::Ours(LearnerKind::Pinball)];
        base.learner.iters = 20;
        let rows = run_sweep(&SweepConfig {
            base,
            kind: SweepKind::SplitFraction {
                fractions: vec![0.3, 0.7],
                learn_cal_total: 80,
            },
        })
        .unwrap();
        assert_eq!(rows.len(), 2 * METRIC_NAMES.len());
        assert!(dir.path().join("sweep.csv").exists());
    }
}
