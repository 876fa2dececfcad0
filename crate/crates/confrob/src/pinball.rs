//! Stochastic pinball-subgradient learning of the set geometry.
//!
//! The hard quantile constraint on the radius is relaxed into a pinball
//! penalty: the surrogate is `max_{y in C(theta, r)} g(z, y) + gamma L(theta, r)`
//! with `L(theta, r) = mean_i rho_tau(S_i(theta) - r)`. Each iteration picks a
//! minibatch, computes the worst-case vertex for the current set, forms a
//! subgradient, and applies a projected step. The worst-case term contributes
//! through the envelope of the inner maximization: with facet multipliers
//! `lambda` at the maximizing vertex, its derivatives are `-lambda_k eps*`
//! in `w_k`, `-lambda_k` in `b_k`, and `sum_k lambda_k` in `r`, so faces
//! active at expensive outcomes are pulled inward while the pinball penalty
//! holds the quantile. The parameter family is kept well-posed by projection:
//! unit-norm rows, offsets clipped to `[-b_max, b_max]`, and positive
//! spanning restored by blending toward the uniform template.
//!
//! A volume-loss variant replaces the worst-case term with the set area
//! (exact boundary-integral gradients in 2-d); it backs the minimum-size
//! baseline.
//!
//! The trained radius and decision iterates are discarded on output: the
//! radius is re-derived by conformal calibration and the decision re-solved
//! exactly, which is what keeps the two-stage procedure valid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conformal::{ConformalError, SetParams};
use crate::geometry::{positively_spans, GeometryError, Halfspaces, Polytope};
use crate::robust::{self, Objective, RobustError};
use crate::vecops;

#[derive(Debug, Error)]
pub enum PinballError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least K = {k} learn samples, got {n}")]
    TooFewSamples { n: usize, k: usize },
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Robust(#[from] RobustError),
}

/// Configuration of the pinball-subgradient trainer.
#[derive(Debug, Clone)]
pub struct PinballConfig {
    /// Calibration-penalty weight gamma > 0.
    pub gamma: f64,
    /// Target quantile tau in (0, 1).
    pub tau: f64,
    /// Base step size; iteration l uses `step0 / sqrt(l + 1)`.
    pub step0: f64,
    /// Minibatch size B <= n.
    pub batch: usize,
    /// Iteration budget.
    pub iters: usize,
    /// Offset bound: |b_k| <= b_max after projection.
    pub b_max: f64,
    pub seed: u64,
}

impl PinballConfig {
    /// Defaults with the quantile target `tau_n = c_n / n` for the given
    /// calibration level (clamped into (0, 1); the boundary behaves like the
    /// max score either way).
    pub fn for_alpha(n: usize, alpha: f64) -> Self {
        let c_n = crate::conformal::quantile_index(n, alpha);
        let tau = (c_n as f64 / n as f64).clamp(1e-9, 1.0 - 1e-9);
        Self {
            gamma: 2.0,
            tau,
            step0: 0.05,
            batch: 32.min(n.max(1)),
            iters: 4000,
            b_max: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), PinballError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(PinballError::InvalidConfig(format!(
                "tau must lie in (0,1), got {}",
                self.tau
            )));
        }
        if self.gamma <= 0.0 {
            return Err(PinballError::InvalidConfig("gamma must be positive".into()));
        }
        if self.batch == 0 || self.batch > n {
            return Err(PinballError::InvalidConfig(format!(
                "batch size {} must lie in 1..={n}",
                self.batch
            )));
        }
        if self.b_max <= 0.0 {
            return Err(PinballError::InvalidConfig("b_max must be positive".into()));
        }
        Ok(())
    }
}

/// Pinball loss `rho_tau(u) = tau u_+ + (1 - tau)(-u)_+`.
pub fn pinball(u: f64, tau: f64) -> f64 {
    tau * u.max(0.0) + (1.0 - tau) * (-u).max(0.0)
}

/// Mean pinball loss of scores about a radius.
pub fn pinball_loss(scores: &[f64], r: f64, tau: f64) -> f64 {
    scores.iter().map(|&s| pinball(s - r, tau)).sum::<f64>() / scores.len() as f64
}

/// Smallest minimizer of the mean pinball loss over r: the order statistic
/// satisfying `#{S_i < r} <= tau n <= #{S_i <= r}`.
pub fn pinball_radius_scores(scores: &[f64], tau: f64) -> f64 {
    let n = scores.len();
    assert!(n > 0, "empty scores");
    let t = tau * n as f64;
    let rounded = t.round();
    let k = if (t - rounded).abs() <= 1e-9 * t.abs().max(1.0) {
        (rounded as usize).max(1)
    } else {
        t.ceil() as usize
    };
    let k = k.clamp(1, n);
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[k - 1]
}

/// [`pinball_radius_scores`] on the scores of the given residuals.
pub fn pinball_radius(
    params: &SetParams,
    residuals: &[Vec<f64>],
    tau: f64,
) -> Result<f64, PinballError> {
    let scores = params.scores(residuals)?;
    Ok(pinball_radius_scores(&scores, tau))
}

/// The subdifferential sandwich characterizing empirical tau-quantiles.
pub fn satisfies_quantile_sandwich(scores: &[f64], r: f64, tau: f64) -> bool {
    let n = scores.len() as f64;
    let below = scores.iter().filter(|&&s| s < r).count() as f64;
    let at_or_below = scores.iter().filter(|&&s| s <= r).count() as f64;
    below <= tau * n + 1e-12 && tau * n <= at_or_below + 1e-12
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut u = z.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (1.0 - css) / (j + 1) as f64;
        if uj + t > 0.0 {
            theta = t;
        }
    }
    (0..n).map(|j| (z[j] + theta).max(0.0)).collect()
}

/// Projection onto the admissible parameter family: rows renormalized to unit
/// norm (degenerate rows replaced by their template row), offsets clipped to
/// `[-b_max, b_max]`, and positive spanning restored, when lost, by the
/// smallest blend toward the uniform template (bisection to 1e-3).
pub fn project_theta(params: &SetParams, b_max: f64) -> Result<SetParams, PinballError> {
    let k = params.num_halfspaces();
    let d = params.dim();
    let template = Halfspaces::uniform_template(k, d)?;

    let normalize_rows = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .enumerate()
            .map(|(i, row)| {
                let norm = vecops::norm2(row);
                if !norm.is_finite() || norm < 1e-12 {
                    template.normals()[i].clone()
                } else {
                    row.iter().map(|v| v / norm).collect()
                }
            })
            .collect()
    };

    let rows = normalize_rows(params.halfspaces().normals());
    let b: Vec<f64> = params
        .halfspaces()
        .offsets()
        .iter()
        .map(|v| v.clamp(-b_max, b_max))
        .collect();

    let rows = if positively_spans(&rows)? {
        rows
    } else {
        // Smallest blend coefficient toward the template restoring spanning.
        let blend = |beta: f64| -> Vec<Vec<f64>> {
            let mixed: Vec<Vec<f64>> = rows
                .iter()
                .zip(template.normals())
                .map(|(w, t)| {
                    w.iter()
                        .zip(t)
                        .map(|(wv, tv)| (1.0 - beta) * wv + beta * tv)
                        .collect()
                })
                .collect();
            normalize_rows(&mixed)
        };
        let mut lo = 0.0;
        let mut hi = 1.0;
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if positively_spans(&blend(mid))? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        blend(hi)
    };

    Ok(SetParams::new(Halfspaces::new(rows, b)?)?)
}

/// Trainer state: the parameter family, the relaxed radius, and the decision
/// iterate.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: SetParams,
    pub radius: f64,
    pub z: Vec<f64>,
}

/// Which first term the surrogate minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainLoss {
    /// Worst-case decision loss over the current set.
    Robust,
    /// Set volume (2-d only); the minimum-size ablation.
    Volume,
}

/// Worst-case information for the envelope term of the robust loss.
#[derive(Debug, Clone)]
pub struct WorstInfo {
    /// Maximizing vertex, absolute coordinates.
    pub vertex: Vec<f64>,
    /// Facet multipliers of the inner maximization at that vertex.
    pub lambda: Vec<f64>,
    /// Vertex in residual coordinates (vertex - center).
    pub eps_star: Vec<f64>,
}

/// A subgradient of the surrogate at fixed inner vertex.
#[derive(Debug, Clone)]
pub struct SurrogateGrad {
    pub d_w: Vec<Vec<f64>>,
    pub d_b: Vec<f64>,
    pub d_r: f64,
    pub d_z: Vec<f64>,
}

impl SurrogateGrad {
    pub fn norm(&self) -> f64 {
        let mut acc = self.d_r * self.d_r;
        for row in &self.d_w {
            acc += vecops::dot(row, row);
        }
        acc += vecops::dot(&self.d_b, &self.d_b);
        acc += vecops::dot(&self.d_z, &self.d_z);
        acc.sqrt()
    }
}

/// Subgradient of `g(z, y*) + gamma * mean_batch rho_tau(S_i - r)` at
/// `(theta, r, z)`. Scores exactly at the radius take the upper pinball
/// coefficient `tau`. When worst-case information is supplied, the first
/// term contributes its envelope derivatives through the facet multipliers;
/// with `None` (empty set, or a pinball-only probe) only the calibration
/// penalty acts on `(theta, r)`.
#[allow(clippy::too_many_arguments)]
pub fn surrogate_subgradient(
    params: &SetParams,
    r: f64,
    z: &[f64],
    batch: &[&Vec<f64>],
    worst: Option<&WorstInfo>,
    obj: &Objective,
    tau: f64,
    gamma: f64,
) -> Result<SurrogateGrad, PinballError> {
    let k = params.num_halfspaces();
    let d = params.dim();
    let mut d_w = vec![vec![0.0; d]; k];
    let mut d_b = vec![0.0; k];
    let mut d_r = 0.0;
    let scale = gamma / batch.len() as f64;

    let w = params.halfspaces().normals();
    let boff = params.halfspaces().offsets();
    for eps in batch {
        // Active affine piece of the max (smallest index on ties).
        let mut best_k = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for kk in 0..k {
            let v = vecops::dot(&w[kk], eps) + boff[kk];
            if v > best_v {
                best_v = v;
                best_k = kk;
            }
        }
        let s = best_v;
        let xi = if s >= r { tau } else { -(1.0 - tau) };
        vecops::axpy(&mut d_w[best_k], scale * xi, eps);
        d_b[best_k] += scale * xi;
        d_r -= scale * xi;
    }

    let d_z = match worst {
        Some(info) => {
            for kk in 0..k {
                let lam = info.lambda[kk];
                if lam != 0.0 {
                    vecops::axpy(&mut d_w[kk], -lam, &info.eps_star);
                    d_b[kk] -= lam;
                    d_r += lam;
                }
            }
            obj.grad_z(z, &info.vertex)
        }
        None => vec![0.0; z.len()],
    };
    Ok(SurrogateGrad { d_w, d_b, d_r, d_z })
}

/// Exact gradient of the 2-d set area in `(w, b, r)` via boundary integrals:
/// moving facet k outward sweeps its length, so `d vol / d r = sum_k len_k`,
/// `d vol / d b_k = -len_k`, and `d vol / d w_k = -len_k centroid_k` in
/// residual coordinates.
pub fn area_gradient(
    params: &SetParams,
    r: f64,
    verts_residual: &[Vec<f64>],
) -> Result<SurrogateGrad, PinballError> {
    let k = params.num_halfspaces();
    let d = params.dim();
    if d != 2 {
        return Err(PinballError::InvalidConfig(format!(
            "volume loss supports outcome dimension 2, got {d}"
        )));
    }
    let mut d_w = vec![vec![0.0; d]; k];
    let mut d_b = vec![0.0; k];
    let mut d_r = 0.0;
    if verts_residual.len() >= 2 {
        let w = params.halfspaces().normals();
        let boff = params.halfspaces().offsets();
        let n = verts_residual.len();
        for i in 0..n {
            let a = &verts_residual[i];
            let bb = &verts_residual[(i + 1) % n];
            let len = vecops::dist2(a, bb);
            if len < 1e-12 {
                continue;
            }
            let mid = [(a[0] + bb[0]) / 2.0, (a[1] + bb[1]) / 2.0];
            // The facet this edge lies on: tightest constraint at the midpoint.
            let mut owner = 0usize;
            let mut best = f64::NEG_INFINITY;
            for kk in 0..k {
                let v = vecops::dot(&w[kk], &mid) + boff[kk];
                if v > best {
                    best = v;
                    owner = kk;
                }
            }
            if (best - r).abs() > 1e-6 {
                continue; // numerically detached edge
            }
            d_b[owner] -= len;
            d_r += len;
            vecops::axpy(&mut d_w[owner], -len, &mid);
        }
    }
    Ok(SurrogateGrad {
        d_w,
        d_b,
        d_r,
        d_z: Vec::new(),
    })
}

/// Per-iteration trace of the trainer.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    /// Full-data surrogate objective at the start of each iteration.
    pub surrogate: Vec<f64>,
    pub radius: Vec<f64>,
    pub pinball: Vec<f64>,
    pub step_norm: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: SetParams,
    pub trace: TrainTrace,
}

/// The pinball-subgradient trainer for one learning split and a fixed
/// representative context (its prediction is the set center during training).
pub struct Trainer<'a> {
    pub residuals: &'a [Vec<f64>],
    pub center: Vec<f64>,
    pub obj: &'a Objective,
    pub cfg: PinballConfig,
    pub loss: TrainLoss,
}

/// Outcome of one projected step.
#[derive(Debug, Clone)]
pub struct StepStats {
    /// Value of the first surrogate term (worst case or area), when the set
    /// was nonempty.
    pub first_term: Option<f64>,
    pub grad: SurrogateGrad,
}

impl<'a> Trainer<'a> {
    pub fn new(
        residuals: &'a [Vec<f64>],
        center: Vec<f64>,
        obj: &'a Objective,
        cfg: PinballConfig,
    ) -> Result<Self, PinballError> {
        Self::with_loss(residuals, center, obj, cfg, TrainLoss::Robust)
    }

    pub fn with_loss(
        residuals: &'a [Vec<f64>],
        center: Vec<f64>,
        obj: &'a Objective,
        cfg: PinballConfig,
        loss: TrainLoss,
    ) -> Result<Self, PinballError> {
        cfg.validate(residuals.len())?;
        Ok(Self {
            residuals,
            center,
            obj,
            cfg,
            loss,
        })
    }

    fn dim(&self) -> usize {
        self.center.len()
    }

    /// Initial state: uniform-angle template with zero offsets, radius at the
    /// pinball quantile of the initial scores, uniform decision.
    pub fn initial_state(&self, k: usize) -> Result<TrainState, PinballError> {
        if self.residuals.len() < k {
            return Err(PinballError::TooFewSamples {
                n: self.residuals.len(),
                k,
            });
        }
        let params = SetParams::uniform_template(k, self.dim())?;
        let radius = pinball_radius(&params, self.residuals, self.cfg.tau)?;
        let p = self.obj.decision_dim();
        Ok(TrainState {
            params,
            radius,
            z: vec![1.0 / p as f64; p],
        })
    }

    /// One projected subgradient step on the given minibatch.
    pub fn subgradient_step(
        &self,
        state: &TrainState,
        batch_idx: &[usize],
        step: f64,
    ) -> Result<(TrainState, StepStats), PinballError> {
        // Repair the family first if the set became unbounded.
        let params = if positively_spans(state.params.halfspaces().normals())? {
            state.params.clone()
        } else {
            project_theta(&state.params, self.cfg.b_max)?
        };

        let set = Polytope::new(
            params.halfspaces().clone(),
            self.center.clone(),
            state.radius,
        )?;
        let verts = set.enumerate_vertices()?;
        let batch: Vec<&Vec<f64>> = batch_idx.iter().map(|&i| &self.residuals[i]).collect();

        let mut first_term = None;
        let grad = match self.loss {
            TrainLoss::Robust => {
                // Empty set: only the calibration penalty acts this step.
                let worst = if verts.is_empty() {
                    None
                } else {
                    let (value, y_star) =
                        robust::worst_over_vertices(&state.z, &verts, self.obj)?;
                    first_term = Some(value);
                    let dir = robust::grad_u(self.obj, &state.z, &y_star);
                    let (lambda, _) = robust::facet_multipliers(&set, &dir)?;
                    let eps_star = vecops::sub(&y_star, &self.center);
                    Some(WorstInfo {
                        vertex: y_star,
                        lambda,
                        eps_star,
                    })
                };
                surrogate_subgradient(
                    &params,
                    state.radius,
                    &state.z,
                    &batch,
                    worst.as_ref(),
                    self.obj,
                    self.cfg.tau,
                    self.cfg.gamma,
                )?
            }
            TrainLoss::Volume => {
                let mut grad = surrogate_subgradient(
                    &params,
                    state.radius,
                    &state.z,
                    &batch,
                    None,
                    self.obj,
                    self.cfg.tau,
                    self.cfg.gamma,
                )?;
                if !verts.is_empty() {
                    first_term = Some(set.volume(0, 0)?);
                    let verts_resid: Vec<Vec<f64>> = verts
                        .iter()
                        .map(|v| vecops::sub(v, &self.center))
                        .collect();
                    let area = area_gradient(&params, state.radius, &verts_resid)?;
                    for (row, arow) in grad.d_w.iter_mut().zip(&area.d_w) {
                        vecops::axpy(row, 1.0, arow);
                    }
                    vecops::axpy(&mut grad.d_b, 1.0, &area.d_b);
                    grad.d_r += area.d_r;
                }
                grad
            }
        };

        let mut new_w: Vec<Vec<f64>> = params.halfspaces().normals().to_vec();
        for (row, g) in new_w.iter_mut().zip(&grad.d_w) {
            vecops::axpy(row, -step, g);
        }
        let mut new_b: Vec<f64> = params.halfspaces().offsets().to_vec();
        vecops::axpy(&mut new_b, -step, &grad.d_b);
        let raw = SetParams::new(Halfspaces::new(new_w, new_b)?)?;
        let new_params = project_theta(&raw, self.cfg.b_max)?;

        let new_radius = state.radius - step * grad.d_r;
        let mut new_z = state.z.clone();
        vecops::axpy(&mut new_z, -step, &grad.d_z);
        let new_z = project_simplex(&new_z);

        Ok((
            TrainState {
                params: new_params,
                radius: new_radius,
                z: new_z,
            },
            StepStats { first_term, grad },
        ))
    }

    /// Full-data surrogate value of a state (worst case or area, plus the
    /// calibration penalty over all learn residuals); empty sets contribute
    /// only the penalty.
    pub fn surrogate_value(&self, state: &TrainState) -> Result<f64, PinballError> {
        let scores = state.params.scores(self.residuals)?;
        let penalty = self.cfg.gamma * pinball_loss(&scores, state.radius, self.cfg.tau);
        let set = Polytope::new(
            state.params.halfspaces().clone(),
            self.center.clone(),
            state.radius,
        )?;
        let verts = set.enumerate_vertices()?;
        if verts.is_empty() {
            return Ok(penalty);
        }
        let first = match self.loss {
            TrainLoss::Robust => robust::worst_over_vertices(&state.z, &verts, self.obj)?.0,
            TrainLoss::Volume => set.volume(0, 0)?,
        };
        Ok(first + penalty)
    }

    /// Run the iteration budget and return the learned parameters with the
    /// trace. Deterministic given the seed.
    pub fn train(&self, k: usize) -> Result<TrainOutput, PinballError> {
        let n = self.residuals.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut state = self.initial_state(k)?;
        let mut trace = TrainTrace::default();

        for l in 0..self.cfg.iters {
            trace.surrogate.push(self.surrogate_value(&state)?);
            trace.radius.push(state.radius);
            let scores = state.params.scores(self.residuals)?;
            trace
                .pinball
                .push(pinball_loss(&scores, state.radius, self.cfg.tau));

            let batch_idx: Vec<usize> =
                rand::seq::index::sample(&mut rng, n, self.cfg.batch).into_vec();
            let step = self.cfg.step0 / ((l + 1) as f64).sqrt();
            let (next, stats) = self.subgradient_step(&state, &batch_idx, step)?;
            trace.step_norm.push(step * stats.grad.norm());
            state = next;
        }

        Ok(TrainOutput {
            params: state.params,
            trace,
        })
    }
}

/// Convenience entry point used by the pipeline.
pub fn train_pinball(
    residuals: &[Vec<f64>],
    center: Vec<f64>,
    obj: &Objective,
    cfg: PinballConfig,
    k: usize,
) -> Result<TrainOutput, PinballError> {
    Trainer::new(residuals, center, obj, cfg)?.train(k)
}
