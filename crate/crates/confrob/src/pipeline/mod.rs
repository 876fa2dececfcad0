//! The two-stage procedure, baselines, and per-method evaluation.
//!
//! Stage 1 learns the set geometry on the learn split; stage 2 re-derives the
//! radius by split-conformal calibration on the independent calibration
//! split, restoring finite-sample coverage after the data-dependent
//! selection. Baselines that do not learn geometry calibrate directly on the
//! calibration split, so the zero-iteration ablation of the learned method
//! coincides with the fixed polyhedron exactly.

pub mod experiment;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccg::{self, CcgConfig, CcgError};
use crate::conformal::{self, ConformalError, ParamsSnapshot, SetParams};
use crate::data::{DataError, RidgePredictor};
use crate::geometry::{GeometryError, Halfspaces, Polytope};
use crate::pinball::{PinballConfig, PinballError, TrainLoss, Trainer};
use crate::robust::{self, FeasibleRegion, Objective, RobustError};
use crate::vecops;

pub use experiment::{
    run_experiment, run_sweep, EvalReport, ExperimentConfig, SweepConfig, SweepKind, TaskKind,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unrecognized method name '{0}'")]
    UnknownMethod(String),
    #[error("method '{method}' failed: {message}")]
    MethodFailed { method: String, message: String },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    Pinball(#[from] PinballError),
    #[error(transparent)]
    Ccg(#[from] CcgError),
}

/// Which learner backs the decision-aware method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Pinball,
    Ccg,
}

/// A benchmarked uncertainty-set method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ours(LearnerKind),
    OursNoRecal(LearnerKind),
    BonferroniBox,
    ConformalBox,
    ConformalBall,
    FixedPolyhedron,
    MinSizePolyhedron,
}

impl Method {
    /// Parse a method name; "ours" variants take the learner from settings.
    pub fn parse(name: &str, learner: LearnerKind) -> Result<Self, PipelineError> {
        Ok(match name {
            "ours" => Method::Ours(learner),
            "ours-no-recal" => Method::OursNoRecal(learner),
            "bonferroni-box" => Method::BonferroniBox,
            "conformal-box" => Method::ConformalBox,
            "conformal-ball" => Method::ConformalBall,
            "fixed-polyhedron" => Method::FixedPolyhedron,
            "min-size-polyhedron" => Method::MinSizePolyhedron,
            other => return Err(PipelineError::UnknownMethod(other.into())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ours(_) => "ours",
            Method::OursNoRecal(_) => "ours-no-recal",
            Method::BonferroniBox => "bonferroni-box",
            Method::ConformalBox => "conformal-box",
            Method::ConformalBall => "conformal-ball",
            Method::FixedPolyhedron => "fixed-polyhedron",
            Method::MinSizePolyhedron => "min-size-polyhedron",
        }
    }
}

/// Learner hyperparameters resolved from configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSettings {
    pub kind: LearnerKind,
    pub gamma: f64,
    pub step0: f64,
    pub batch: usize,
    pub iters: usize,
    pub b_max: f64,
    /// CCG certificate tolerance.
    pub epsilon: f64,
    /// CCG iteration cap.
    pub max_iters: usize,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        let p = PinballConfig::for_alpha(300, 0.1);
        Self {
            kind: LearnerKind::Pinball,
            gamma: p.gamma,
            step0: p.step0,
            batch: p.batch,
            iters: p.iters,
            b_max: p.b_max,
            epsilon: 1e-4,
            max_iters: 50,
        }
    }
}

impl LearnerSettings {
    fn pinball_config(&self, n: usize, alpha: f64, seed: u64) -> PinballConfig {
        let mut cfg = PinballConfig::for_alpha(n, alpha);
        cfg.gamma = self.gamma;
        cfg.step0 = self.step0;
        cfg.batch = self.batch.min(n.max(1));
        cfg.iters = self.iters;
        cfg.b_max = self.b_max;
        cfg.seed = seed;
        cfg
    }

    fn ccg_config(&self, k: usize) -> CcgConfig {
        CcgConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            b_max: self.b_max,
            k,
            ..CcgConfig::default()
        }
    }
}

/// The fitted shape of an uncertainty set; a concrete set arises by placing
/// it at a prediction center.
#[derive(Debug, Clone)]
pub enum SetModel {
    Poly { params: SetParams, radius: f64 },
    Ball { radius: f64 },
}

/// A concrete set at one context.
#[derive(Debug, Clone)]
pub enum UncertaintySet {
    Poly(Polytope),
    Ball { center: Vec<f64>, radius: f64 },
}

impl UncertaintySet {
    pub fn contains(&self, y: &[f64]) -> Result<bool, PipelineError> {
        match self {
            UncertaintySet::Poly(p) => Ok(p.contains(y)?),
            UncertaintySet::Ball { center, radius } => {
                if radius.is_infinite() {
                    return Ok(true);
                }
                Ok(vecops::dist2(center, y) <= radius + 1e-9)
            }
        }
    }
}

impl SetModel {
    pub fn set_at(&self, center: Vec<f64>) -> Result<UncertaintySet, PipelineError> {
        Ok(match self {
            SetModel::Poly { params, radius } => {
                UncertaintySet::Poly(conformal::build_set(params, *radius, center)?)
            }
            SetModel::Ball { radius } => UncertaintySet::Ball {
                center,
                radius: *radius,
            },
        })
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            SetModel::Poly { radius, .. } | SetModel::Ball { radius } => radius.is_infinite(),
        }
    }
}

/// Everything one (task, seed) cell needs to fit and evaluate methods.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub predictor: RidgePredictor,
    pub learn_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub cal_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub test_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub learn_residuals: Vec<Vec<f64>>,
    pub cal_residuals: Vec<Vec<f64>>,
    pub alpha: f64,
    pub k: usize,
    pub d: usize,
    /// Bounding box of training outcomes padded by 10%, the fallback domain
    /// for degenerate whole-space sets.
    pub y_box: (Vec<f64>, Vec<f64>),
}

impl TaskData {
    /// Representative context for learning: the mean learn-split feature
    /// vector, mapped through the predictor.
    pub fn learn_center(&self) -> Vec<f64> {
        let p = self.learn_pairs[0].0.len();
        let mut mean = vec![0.0; p];
        for (x, _) in &self.learn_pairs {
            vecops::axpy(&mut mean, 1.0, x);
        }
        for v in mean.iter_mut() {
            *v /= self.learn_pairs.len() as f64;
        }
        self.predictor.predict(&mean)
    }

    fn pooled_residuals(&self) -> Vec<Vec<f64>> {
        let mut all = self.learn_residuals.clone();
        all.extend(self.cal_residuals.iter().cloned());
        all
    }
}

/// Build task data from a dataset and split indices.
pub fn prepare_task(
    ds: &crate::data::Dataset,
    splits: &crate::data::Splits,
    alpha: f64,
    k: usize,
    ridge_lambda: f64,
    bounding_pad: f64,
) -> Result<TaskData, PipelineError> {
    let train_pairs = ds.select(&splits.train);
    let predictor = crate::data::ridge_fit(&train_pairs, ridge_lambda)?;
    let learn_pairs = ds.select(&splits.learn);
    let cal_pairs = ds.select(&splits.calibrate);
    let test_pairs = ds.select(&splits.test);
    let learn_residuals = predictor.residuals(&learn_pairs);
    let cal_residuals = predictor.residuals(&cal_pairs);
    let d = ds.outcome_dim();

    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (_, y) in &train_pairs {
        for j in 0..d {
            lo[j] = lo[j].min(y[j]);
            hi[j] = hi[j].max(y[j]);
        }
    }
    for j in 0..d {
        let pad = bounding_pad * (hi[j] - lo[j]).abs().max(1e-9);
        lo[j] -= pad;
        hi[j] += pad;
    }

    Ok(TaskData {
        predictor,
        learn_pairs,
        cal_pairs,
        test_pairs,
        learn_residuals,
        cal_residuals,
        alpha,
        k,
        d,
        y_box: (lo, hi),
    })
}

/// Stage 1 (learn the geometry) plus stage 2 (re-calibrate the radius) for
/// the decision-aware methods, as a reusable entry point.
pub fn two_stage(
    task: &TaskData,
    obj: &Objective,
    settings: &LearnerSettings,
    seed: u64,
    recalibrate: bool,
) -> Result<SetModel, PipelineError> {
    let (learn_res, cal_res): (Vec<Vec<f64>>, &[Vec<f64>]) = if recalibrate {
        (task.learn_residuals.clone(), &task.cal_residuals)
    } else {
        // Ablation: learn and calibrate on the pooled residuals.
        let pooled = task.pooled_residuals();
        (pooled, &[])
    };
    let center = task.learn_center();
    let params = match settings.kind {
        LearnerKind::Pinball => {
            let cfg = settings.pinball_config(learn_res.len(), task.alpha, seed);
            Trainer::new(&learn_res, center, obj, cfg)?.train(task.k)?.params
        }
        LearnerKind::Ccg => {
            ccg::train_ccg(
                &learn_res,
                &center,
                obj,
                task.alpha,
                &settings.ccg_config(task.k),
            )?
            .params
        }
    };
    let scores = if recalibrate {
        params.scores(cal_res)?
    } else {
        params.scores(&learn_res)?
    };
    let radius = conformal::conformal_radius(&scores, task.alpha)?;
    Ok(SetModel::Poly { params, radius })
}

/// Fit one method on a prepared task.
pub fn fit_method(
    method: Method,
    task: &TaskData,
    obj: &Objective,
    settings: &LearnerSettings,
    seed: u64,
) -> Result<SetModel, PipelineError> {
    let alpha = task.alpha;
    match method {
        Method::Ours(kind) => {
            let s = LearnerSettings {
                kind,
                ..settings.clone()
            };
            two_stage(task, obj, &s, seed, true)
        }
        Method::OursNoRecal(kind) => {
            let s = LearnerSettings {
                kind,
                ..settings.clone()
            };
            two_stage(task, obj, &s, seed, false)
        }
        Method::BonferroniBox => {
            // Per-coordinate split-conformal intervals at level alpha / d.
            let d = task.d;
            let level = alpha / d as f64;
            let mut w = Vec::with_capacity(2 * d);
            let mut b = Vec::with_capacity(2 * d);
            for j in 0..d {
                let scores: Vec<f64> =
                    task.cal_residuals.iter().map(|e| e[j].abs()).collect();
                let q = conformal::conformal_radius(&scores, level)?;
                let mut plus = vec![0.0; d];
                plus[j] = 1.0;
                let mut minus = vec![0.0; d];
                minus[j] = -1.0;
                w.push(plus);
                w.push(minus);
                b.push(-q);
                b.push(-q);
            }
            if b.iter().any(|v| v.is_infinite()) {
                // Degenerate: some coordinate demanded a quantile beyond the
                // sample; fall back to the whole space.
                return Ok(SetModel::Poly {
                    params: SetParams::uniform_template(2 * d, d)?,
                    radius: f64::INFINITY,
                });
            }
            let params = SetParams::new(Halfspaces::new(w, b)?)?;
            Ok(SetModel::Poly {
                params,
                radius: 0.0,
            })
        }
        Method::ConformalBox => {
            let scores: Vec<f64> = task
                .cal_residuals
                .iter()
                .map(|e| e.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .collect();
            let radius = conformal::conformal_radius(&scores, alpha)?;
            Ok(SetModel::Poly {
                params: SetParams::uniform_template(2 * task.d, task.d)?,
                radius,
            })
        }
        Method::ConformalBall => {
            let scores: Vec<f64> =
                task.cal_residuals.iter().map(|e| vecops::norm2(e)).collect();
            let radius = conformal::conformal_radius(&scores, alpha)?;
            Ok(SetModel::Ball { radius })
        }
        Method::FixedPolyhedron => {
            let params = SetParams::uniform_template(task.k, task.d)?;
            let scores = params.scores(&task.cal_residuals)?;
            let radius = conformal::conformal_radius(&scores, alpha)?;
            Ok(SetModel::Poly { params, radius })
        }
        Method::MinSizePolyhedron => {
            // The pinball learner with set volume in place of the robust
            // loss; re-calibrated like the decision-aware method.
            let center = task.learn_center();
            let mut cfg =
                settings.pinball_config(task.learn_residuals.len(), alpha, seed);
            cfg.step0 = cfg.step0.min(0.01); // area gradients scale with the perimeter
            let params = Trainer::with_loss(
                &task.learn_residuals,
                center,
                obj,
                cfg,
                TrainLoss::Volume,
            )?
            .train(task.k)?
            .params;
            let scores = params.scores(&task.cal_residuals)?;
            let radius = conformal::conformal_radius(&scores, alpha)?;
            Ok(SetModel::Poly { params, radius })
        }
    }
}

/// Metric values for one (seed, method) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub coverage: f64,
    pub volume: f64,
    pub volume_rel: f64,
    pub wc_cost: f64,
    pub regret: f64,
}

/// Wall-clock seconds per phase (reported separately from the deterministic
/// metric outputs).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub learn_secs: f64,
    pub calibrate_secs: f64,
    pub evaluate_secs: f64,
}

/// The smallest hindsight loss over the simplex at a realized outcome.
pub fn best_in_hindsight(obj: &Objective, y: &[f64]) -> f64 {
    match obj {
        Objective::Linear { c, q } => {
            let mut best = f64::INFINITY;
            for i in 0..c.len() {
                let v = c[i] + vecops::dot(&q[i], y);
                best = best.min(v);
            }
            best
        }
        _ => {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while hi - lo > 1e-8 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                let f1 = obj.value(&[m1, 1.0 - m1], y);
                let f2 = obj.value(&[m2, 1.0 - m2], y);
                if f1 < f2 {
                    hi = m2;
                } else if f1 > f2 {
                    lo = m1;
                } else {
                    lo = m1;
                    hi = m2;
                }
            }
            let t = 0.5 * (lo + hi);
            obj.value(&[t, 1.0 - t], y)
        }
    }
}

/// A box polytope spanning the given bounds (whole-space fallback domain).
fn box_polytope(lo: &[f64], hi: &[f64]) -> Result<Polytope, PipelineError> {
    let d = lo.len();
    let mut w = Vec::with_capacity(2 * d);
    let mut b = Vec::with_capacity(2 * d);
    for j in 0..d {
        let mut plus = vec![0.0; d];
        plus[j] = 1.0;
        let mut minus = vec![0.0; d];
        minus[j] = -1.0;
        w.push(plus);
        w.push(minus);
        b.push(-hi[j]);
        b.push(lo[j]);
    }
    Ok(Polytope::new(
        Halfspaces::new(w, b)?,
        vec![0.0; d],
        0.0,
    )?)
}

/// Evaluate a fitted model on the test split: coverage, volume (raw and
/// relative to the conformal-box reference), mean worst-case cost at the
/// prescribed decisions, and mean regret. Whole-space sets fall back to the
/// padded training-outcome box for the decision problem.
pub fn evaluate(
    model: &SetModel,
    task: &TaskData,
    obj: &Objective,
    reference_volume: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<MethodMetrics, PipelineError> {
    if task.test_pairs.is_empty() {
        return Err(PipelineError::BadConfig("empty test split".into()));
    }
    let region = FeasibleRegion::simplex(obj.decision_dim());
    let mut covered = 0usize;
    let mut wc_sum = 0.0;
    let mut regret_sum = 0.0;

    // The set shape is context-independent (only the center moves), so the
    // decision geometry can be prepared once.
    enum Prepared {
        PolyVerts { verts0: Vec<Vec<f64>>, params: SetParams, radius: f64 },
        Ball { radius: f64 },
        WholeSpace { fallback: Polytope },
    }
    let prepared = match model {
        SetModel::Poly { params, radius } if radius.is_finite() => {
            let set0 = conformal::build_set(params, *radius, vec![0.0; task.d])?;
            Prepared::PolyVerts {
                verts0: set0.enumerate_vertices()?,
                params: params.clone(),
                radius: *radius,
            }
        }
        SetModel::Ball { radius } if radius.is_finite() => Prepared::Ball { radius: *radius },
        _ => Prepared::WholeSpace {
            fallback: box_polytope(&task.y_box.0, &task.y_box.1)?,
        },
    };

    for (x, y) in &task.test_pairs {
        let center = task.predictor.predict(x);
        let (inside, decision_value, z) = match &prepared {
            Prepared::PolyVerts { verts0, params, radius } => {
                let eps = vecops::sub(y, &center);
                let inside = params.score(&eps)? <= *radius + 1e-9;
                let verts: Vec<Vec<f64>> = verts0
                    .iter()
                    .map(|v| vecops::add(v, &center))
                    .collect();
                let (z, val) = robust::robust_decision_over_vertices(&verts, obj, &region)?;
                (inside, val, z)
            }
            Prepared::Ball { radius } => {
                let inside = vecops::dist2(&center, y) <= radius + 1e-9;
                let (z, val) = robust::robust_decision_ball(&center, *radius, obj, &region)?;
                (inside, val, z)
            }
            Prepared::WholeSpace { fallback } => {
                let (z, val) = robust::robust_decision(fallback, obj, &region)?;
                (true, val, z)
            }
        };
        if inside {
            covered += 1;
        }
        wc_sum += decision_value;
        regret_sum += obj.value(&z, y) - best_in_hindsight(obj, y);
    }

    let n = task.test_pairs.len() as f64;
    let volume = match &prepared {
        Prepared::PolyVerts { params, radius, .. } => {
            conformal::build_set(params, *radius, vec![0.0; task.d])?
                .volume(mc_samples, seed ^ 0x5eed)?
        }
        Prepared::Ball { radius } => ball_volume(*radius, task.d),
        Prepared::WholeSpace { .. } => f64::INFINITY,
    };
    Ok(MethodMetrics {
        coverage: covered as f64 / n,
        volume,
        volume_rel: volume / reference_volume,
        wc_cost: wc_sum / n,
        regret: regret_sum / n,
    })
}

/// Volume of the d-ball of the given radius.
pub fn ball_volume(radius: f64, d: usize) -> f64 {
    // V_d = pi^(d/2) / Gamma(d/2 + 1) * r^d for the dimensions used here.
    let unit = match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        4 => std::f64::consts::PI * std::f64::consts::PI / 2.0,
        _ => f64::NAN,
    };
    unit * radius.powi(d as i32)
}

/// Reference volume: the conformal-box baseline on the same calibration data.
pub fn reference_box_volume(task: &TaskData, mc_samples: usize, seed: u64) -> Result<f64, PipelineError> {
    let model = fit_method(
        Method::ConformalBox,
        task,
        &Objective::linear(vec![0.0; task.d], None),
        &LearnerSettings::default(),
        seed,
    )?;
    match &model {
        SetModel::Poly { params, radius } if radius.is_finite() => {
            Ok(conformal::build_set(params, *radius, vec![0.0; task.d])?
                .volume(mc_samples, seed ^ 0x5eed)?)
        }
        _ => Ok(f64::INFINITY),
    }
}

/// Fit and evaluate one method with per-phase timings.
pub fn run_method(
    method: Method,
    task: &TaskData,
    obj: &Objective,
    settings: &LearnerSettings,
    seed: u64,
    reference_volume: f64,
    mc_samples: usize,
) -> Result<(MethodMetrics, PhaseTimings, Option<ParamsSnapshot>), PipelineError> {
    let t0 = Instant::now();
    let model = fit_method(method, task, obj, settings, seed).map_err(|e| {
        PipelineError::MethodFailed {
            method: method.name().into(),
            message: e.to_string(),
        }
    })?;
    let learn_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let metrics = evaluate(&model, task, obj, reference_volume, mc_samples, seed)?;
    let evaluate_secs = t1.elapsed().as_secs_f64();

    let snapshot = match &model {
        SetModel::Poly { params, .. } => Some(ParamsSnapshot::from(params)),
        SetModel::Ball { .. } => None,
    };
    Ok((
        metrics,
        PhaseTimings {
            learn_secs,
            calibrate_secs: 0.0, // calibration is folded into the fit phase
            evaluate_secs,
        },
        snapshot,
    ))
}
