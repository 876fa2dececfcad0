//! Run configuration: a TOML file with flat keys and two sections. Unknown
//! keys are hard errors so that typos cannot silently corrupt a sweep.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use confrob::data::SplitSpec;
use confrob::pipeline::{
    ExperimentConfig, LearnerKind, LearnerSettings, Method, TaskKind,
};

use crate::CliError;

fn default_alpha() -> f64 {
    0.1
}
fn default_k() -> usize {
    4
}
fn default_d() -> usize {
    2
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_methods() -> Vec<String> {
    vec!["ours".into(), "conformal-box".into(), "fixed-polyhedron".into()]
}
fn default_jobs() -> usize {
    1
}
fn default_pad() -> f64 {
    0.10
}
fn default_mc() -> usize {
    100_000
}
fn default_lambda() -> f64 {
    1e-3
}

/// Split section: absolute sizes or fractions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_split_mode")]
    pub mode: String,
    pub train: f64,
    pub learn: f64,
    pub calibrate: f64,
    pub test: f64,
}

fn default_split_mode() -> String {
    "sizes".into()
}

impl SplitConfig {
    pub fn to_spec(&self) -> Result<SplitSpec, CliError> {
        match self.mode.as_str() {
            "sizes" => Ok(SplitSpec::Sizes(
                self.train as usize,
                self.learn as usize,
                self.calibrate as usize,
                self.test as usize,
            )),
            "fractions" => Ok(SplitSpec::Fractions(
                self.train,
                self.learn,
                self.calibrate,
                self.test,
            )),
            other => Err(CliError::config(format!(
                "split.mode: '{other}' is not 'sizes' or 'fractions'"
            ))),
        }
    }

    pub fn sizes(train: usize, learn: usize, calibrate: usize, test: usize) -> Self {
        Self {
            mode: "sizes".into(),
            train: train as f64,
            learn: learn as f64,
            calibrate: calibrate as f64,
            test: test as f64,
        }
    }

    pub fn fractions(train: f64, learn: f64, calibrate: f64, test: f64) -> Self {
        Self {
            mode: "fractions".into(),
            train,
            learn,
            calibrate,
            test,
        }
    }
}

/// Learner section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default = "default_learner_kind")]
    pub kind: String,
    #[serde(default = "LearnerConfig::default_gamma")]
    pub gamma: f64,
    #[serde(default = "LearnerConfig::default_step0")]
    pub step0: f64,
    #[serde(default = "LearnerConfig::default_batch")]
    pub batch: usize,
    #[serde(default = "LearnerConfig::default_iters")]
    pub iters: usize,
    #[serde(default = "LearnerConfig::default_b_max")]
    pub b_max: f64,
    #[serde(default = "LearnerConfig::default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "LearnerConfig::default_max_iters")]
    pub max_iters: usize,
}

fn default_learner_kind() -> String {
    "pinball".into()
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            kind: default_learner_kind(),
            gamma: Self::default_gamma(),
            step0: Self::default_step0(),
            batch: Self::default_batch(),
            iters: Self::default_iters(),
            b_max: Self::default_b_max(),
            epsilon: Self::default_epsilon(),
            max_iters: Self::default_max_iters(),
        }
    }
}

impl LearnerConfig {
    fn default_gamma() -> f64 {
        LearnerSettings::default().gamma
    }
    fn default_step0() -> f64 {
        LearnerSettings::default().step0
    }
    fn default_batch() -> usize {
        LearnerSettings::default().batch
    }
    fn default_iters() -> usize {
        LearnerSettings::default().iters
    }
    fn default_b_max() -> f64 {
        LearnerSettings::default().b_max
    }
    fn default_epsilon() -> f64 {
        LearnerSettings::default().epsilon
    }
    fn default_max_iters() -> usize {
        LearnerSettings::default().max_iters
    }

    pub fn to_settings(&self) -> Result<LearnerSettings, CliError> {
        let kind = match self.kind.as_str() {
            "pinball" => LearnerKind::Pinball,
            "ccg" => LearnerKind::Ccg,
            other => {
                return Err(CliError::config(format!(
                    "learner.kind: '{other}' is not 'pinball' or 'ccg'"
                )))
            }
        };
        Ok(LearnerSettings {
            kind,
            gamma: self.gamma,
            step0: self.step0,
            batch: self.batch,
            iters: self.iters,
            b_max: self.b_max,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
        })
    }
}

/// The full run configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub data_path: Option<PathBuf>,
    #[serde(default = "default_pad")]
    pub bounding_pad: f64,
    #[serde(default = "default_mc")]
    pub mc_volume_samples: usize,
    #[serde(default = "default_lambda")]
    pub ridge_lambda: f64,
    pub split: SplitConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
}

impl RunConfig {
    pub fn parse_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Resolve into the pipeline configuration, applying the seed offset.
    pub fn resolve(
        &self,
        out_dir: PathBuf,
        seed_offset: u64,
        jobs_override: Option<usize>,
    ) -> Result<ExperimentConfig, CliError> {
        let task = TaskKind::parse(&self.task).map_err(CliError::from_config_err)?;
        let learner = self.learner.to_settings()?;
        let methods = self
            .methods
            .iter()
            .map(|m| Method::parse(m, learner.kind).map_err(CliError::from_config_err))
            .collect::<Result<Vec<_>, _>>()?;
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds: empty".into()));
        }
        let cfg = ExperimentConfig {
            task,
            alpha: self.alpha,
            k: self.k,
            d: self.d,
            split: self.split.to_spec()?,
            seeds: self.seeds.iter().map(|s| s + seed_offset).collect(),
            methods,
            learner,
            data_path: self.data_path.clone(),
            out_dir,
            jobs: jobs_override.unwrap_or(self.jobs),
            bounding_pad: self.bounding_pad,
            mc_volume_samples: self.mc_volume_samples,
            ridge_lambda: self.ridge_lambda,
        };
        cfg.validate().map_err(CliError::from_config_err)?;
        Ok(cfg)
    }

    /// Echo of the resolved configuration written into the run directory.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }
}
