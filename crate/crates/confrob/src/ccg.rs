//! Exact decision-aware set learning at small scale by column-and-constraint
//! generation.
//!
//! The restricted master problem jointly picks the hyperplane family, the
//! decision, the radius, and the big-M score selection, subject to every
//! accumulated adversarial scenario lying inside the candidate set and
//! costing at most eta. The separation problem then finds the worst outcome
//! in the candidate set; the loop stops once `zeta - eta <= epsilon`, which
//! certifies epsilon-optimality over the linearized family.
//!
//! The master linearizes the parameter family: each row is confined to the
//! sign-pattern box of its template row (`||w_k||_inf <= 1`, zero components
//! pinned) with `w_k . template_k >= 0.5`, which keeps every candidate set
//! bounded and the program a true MILP. Because only the scenario constraints
//! touch eta, the master is degenerate in the radius; a tiny `+ mu r` term
//! breaks the tie downward, matching the radius-minimality that the inner
//! maximization enforces in the unrestricted problem.

use thiserror::Error;

use crate::conformal::{self, ConformalError, SetParams};
use crate::geometry::{positively_spans, GeometryError, Halfspaces};
use crate::robust::{self, Objective, RobustError};
use crate::solver::{
    self, Direction, LinearProgram, MixedIntegerProgram, Relation, SolveError,
};
use crate::vecops;

/// Minimum alignment of each row with its template direction.
const ROW_DOT_MIN: f64 = 0.5;
/// Radius tie-break weight in the master objective.
const RADIUS_TIEBREAK: f64 = 1e-6;
/// Scenarios closer than this are duplicates.
const DUP_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CcgError {
    #[error("CCG requires a linear objective")]
    RequiresLinear,
    #[error("master supports at most {max} binaries, got {n}")]
    TooManyBinaries { n: usize, max: usize },
    #[error("master problem unexpectedly {0}")]
    MasterFailed(String),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    Solver(#[from] SolveError),
}

#[derive(Debug, Clone)]
pub struct CcgConfig {
    /// Certificate tolerance epsilon.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Offset bound of the linearized family.
    pub b_max: f64,
    /// Number of halfspaces K.
    pub k: usize,
    /// Hard cap on master binaries (the learn-split size).
    pub max_binaries: usize,
}

impl Default for CcgConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iters: 50,
            b_max: 1.0,
            k: 4,
            max_binaries: 25,
        }
    }
}

/// One optimal master solution.
#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub params: SetParams,
    pub z: Vec<f64>,
    pub radius: f64,
    pub t: Vec<f64>,
    pub eta: f64,
}

/// Loop state: the scenario set only ever grows.
#[derive(Debug, Clone, Default)]
pub struct CcgState {
    pub scenarios: Vec<Vec<f64>>,
    pub iteration: usize,
    pub eta_history: Vec<f64>,
    pub zeta_history: Vec<f64>,
}

/// Learner output with the optimality certificate.
#[derive(Debug, Clone)]
pub struct CcgResult {
    pub params: SetParams,
    pub decision: Vec<f64>,
    pub radius: f64,
    pub eta: f64,
    pub zeta: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub state: CcgState,
}

/// Solve the restricted master problem for the accumulated scenarios.
///
/// With an empty scenario set eta is unconstrained below; the sentinel
/// solution (template geometry, uniform decision, conformal radius,
/// eta = -inf) forces at least one separation round.
pub fn master_solve(
    scenarios: &[Vec<f64>],
    residuals: &[Vec<f64>],
    center: &[f64],
    obj: &Objective,
    alpha: f64,
    cfg: &CcgConfig,
) -> Result<MasterSolution, CcgError> {
    let (c, q) = match obj {
        Objective::Linear { c, q } => (c, q),
        _ => return Err(CcgError::RequiresLinear),
    };
    let n = residuals.len();
    if n > cfg.max_binaries {
        return Err(CcgError::TooManyBinaries {
            n,
            max: cfg.max_binaries,
        });
    }
    let d = center.len();
    let k = cfg.k;
    let p = c.len();
    let template = Halfspaces::uniform_template(k, d)?;

    if scenarios.is_empty() {
        // Sentinel: the nominal singleton (template at radius 0). Its sole
        // "worst case" is the predicted center, so the first real master
        // starts from the cheapest scenario rather than locking in a corner
        // of an uncalibrated fat set.
        let params = SetParams::new(template)?;
        return Ok(MasterSolution {
            params,
            z: vec![1.0 / p as f64; p],
            radius: 0.0,
            t: vec![1.0; n],
            eta: f64::NEG_INFINITY,
        });
    }

    let m_big = conformal::big_m(residuals, cfg.b_max);
    let c_n = conformal::quantile_index(n, alpha);

    // Variable layout: w (K*d) | b (K) | z (p) | r | eta | t (n).
    let wcol = |kk: usize, j: usize| kk * d + j;
    let bcol = |kk: usize| k * d + kk;
    let zcol = |i: usize| k * d + k + i;
    let rcol = k * d + k + p;
    let etacol = rcol + 1;
    let tcol = |i: usize| etacol + 1 + i;
    let nvars = etacol + 1 + n;

    let mut objective = vec![0.0; nvars];
    objective[etacol] = 1.0;
    objective[rcol] = RADIUS_TIEBREAK;
    let mut lp = LinearProgram::new(Direction::Minimize, objective);

    // Sign-pattern boxes per row, zero template components pinned.
    for (kk, trow) in template.normals().iter().enumerate() {
        for (j, &tv) in trow.iter().enumerate() {
            if tv > 1e-9 {
                lp.set_bounds(wcol(kk, j), 0.0, 1.0);
            } else if tv < -1e-9 {
                lp.set_bounds(wcol(kk, j), -1.0, 0.0);
            } else {
                lp.set_bounds(wcol(kk, j), 0.0, 0.0);
            }
        }
        // Alignment floor keeps the row scale bounded away from zero.
        let mut row = vec![0.0; nvars];
        for (j, &tv) in trow.iter().enumerate() {
            row[wcol(kk, j)] = tv;
        }
        lp.add_constraint(row, Relation::Ge, ROW_DOT_MIN);
        lp.set_bounds(bcol(kk), -cfg.b_max, cfg.b_max);
    }
    for i in 0..p {
        lp.set_bounds(zcol(i), 0.0, f64::INFINITY);
    }
    lp.set_bounds(rcol, -cfg.b_max, m_big);
    for i in 0..n {
        lp.set_bounds(tcol(i), 0.0, 1.0);
    }

    // Scenario cost rows: (c + Q y).z <= eta.
    for y in scenarios {
        let mut row = vec![0.0; nvars];
        for i in 0..p {
            row[zcol(i)] = c[i] + vecops::dot(&q[i], y);
        }
        row[etacol] = -1.0;
        lp.add_constraint(row, Relation::Le, -vecops::dot(c, &vec![0.0; p]));
    }
    // Scenario containment rows: w_k.(y - center) + b_k - r <= 0.
    for y in scenarios {
        let eps = vecops::sub(y, center);
        for kk in 0..k {
            let mut row = vec![0.0; nvars];
            for j in 0..d {
                row[wcol(kk, j)] = eps[j];
            }
            row[bcol(kk)] = 1.0;
            row[rcol] = -1.0;
            lp.add_constraint(row, Relation::Le, 0.0);
        }
    }
    // Calibration rows: w_k.e_i + b_k - r + M t_i <= M.
    for (i, e) in residuals.iter().enumerate() {
        for kk in 0..k {
            let mut row = vec![0.0; nvars];
            for j in 0..d {
                row[wcol(kk, j)] = e[j];
            }
            row[bcol(kk)] = 1.0;
            row[rcol] = -1.0;
            row[tcol(i)] = m_big;
            lp.add_constraint(row, Relation::Le, m_big);
        }
    }
    // Cardinality and simplex rows.
    let mut card = vec![0.0; nvars];
    for i in 0..n {
        card[tcol(i)] = 1.0;
    }
    lp.add_constraint(card, Relation::Ge, c_n as f64);
    let mut simplex_row = vec![0.0; nvars];
    for i in 0..p {
        simplex_row[zcol(i)] = 1.0;
    }
    lp.add_constraint(simplex_row, Relation::Eq, 1.0);

    let milp = MixedIntegerProgram::new(lp, (0..n).map(tcol).collect());
    let res = solver::solve_milp(&milp)?;
    if !res.is_optimal() {
        // The template with a large radius is always feasible.
        return Err(CcgError::MasterFailed(format!("{:?}", res.status)));
    }

    let w: Vec<Vec<f64>> = (0..k)
        .map(|kk| (0..d).map(|j| res.primal[wcol(kk, j)]).collect())
        .collect();
    let b: Vec<f64> = (0..k).map(|kk| res.primal[bcol(kk)]).collect();
    let z: Vec<f64> = (0..p).map(|i| res.primal[zcol(i)]).collect();
    let radius = res.primal[rcol];
    let t: Vec<f64> = (0..n).map(|i| res.primal[tcol(i)].round()).collect();
    let eta = res.objective_value - RADIUS_TIEBREAK * radius;
    Ok(MasterSolution {
        params: SetParams::new(Halfspaces::new(w, b)?)?,
        z,
        radius,
        t,
        eta,
    })
}

/// Worst-case outcome in the candidate set; delegates to the robust module.
pub fn separation(
    params: &SetParams,
    z: &[f64],
    radius: f64,
    center: &[f64],
    obj: &Objective,
) -> Result<(f64, Vec<f64>), CcgError> {
    let set = conformal::build_set(params, radius, center.to_vec())?;
    Ok(robust::worst_case(z, &set, obj)?)
}

/// Run the master/separation loop until the certificate gap closes.
pub fn train_ccg(
    residuals: &[Vec<f64>],
    center: &[f64],
    obj: &Objective,
    alpha: f64,
    cfg: &CcgConfig,
) -> Result<CcgResult, CcgError> {
    if !obj.is_linear() {
        return Err(CcgError::RequiresLinear);
    }
    let mut state = CcgState::default();
    let mut last: Option<(MasterSolution, f64, Vec<f64>)> = None;

    while state.iteration < cfg.max_iters {
        let mut master = master_solve(&state.scenarios, residuals, center, obj, alpha, cfg)?;
        // A master geometry that lost spanning cannot be separated; repair it
        // minimally (rare outside degenerate templates).
        if !positively_spans(master.params.halfspaces().normals())? {
            master.params = crate::pinball::project_theta(&master.params, cfg.b_max)
                .map_err(|e| CcgError::MasterFailed(e.to_string()))?;
        }
        let (zeta, y_star) = separation(&master.params, &master.z, master.radius, center, obj)?;
        state.eta_history.push(master.eta);
        state.zeta_history.push(zeta);
        state.iteration += 1;

        let gap = zeta - master.eta;
        let converged = gap <= cfg.epsilon;
        let duplicate = state
            .scenarios
            .iter()
            .any(|s| vecops::dist2(s, &y_star) <= DUP_TOL);
        last = Some((master, zeta, y_star.clone()));
        if converged || duplicate {
            let (m, zeta, _) = last.unwrap();
            return Ok(CcgResult {
                gap: zeta - m.eta,
                converged,
                iterations: state.iteration,
                eta: m.eta,
                zeta,
                decision: m.z.clone(),
                radius: m.radius,
                params: m.params,
                state,
            });
        }
        state.scenarios.push(y_star);
    }

    let (m, zeta, _) = last.expect("max_iters >= 1");
    Ok(CcgResult {
        gap: zeta - m.eta,
        converged: zeta - m.eta <= cfg.epsilon,
        iterations: state.iteration,
        eta: m.eta,
        zeta,
        decision: m.z.clone(),
        radius: m.radius,
        params: m.params,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn residuals(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let g0: f64 = rng.sample(StandardNormal);
                let g1: f64 = rng.sample(StandardNormal);
                vec![g0, 0.6 * g0 + 0.8 * g1]
            })
            .collect()
    }

    fn paper_obj() -> Objective {
        Objective::linear(vec![-0.08, 0.0], None)
    }

    #[test]
    fn empty_scenarios_give_sentinel_master() {
        let res = residuals(10, 1);
        let m = master_solve(&[], &res, &[0.0, 0.0], &paper_obj(), 0.1, &CcgConfig::default())
            .unwrap();
        assert!(m.eta == f64::NEG_INFINITY);
        assert!((m.z[0] - 0.5).abs() < 1e-12);
        // The sentinel set is the nominal singleton.
        assert_eq!(m.radius, 0.0);
    }

    #[test]
    fn single_center_scenario_minimizes_over_simplex() {
        // With the sole scenario at the center, eta is the smallest
        // coordinate of c + Q center.
        let res = residuals(10, 2);
        let center = vec![0.4, -0.9];
        let obj = paper_obj();
        let scenario = center.clone();
        let m = master_solve(
            std::slice::from_ref(&scenario),
            &res,
            &center,
            &obj,
            0.1,
            &CcgConfig::default(),
        )
        .unwrap();
        let expect = (-0.08f64 + 0.4).min(0.0 + -0.9);
        assert!(
            (m.eta - expect).abs() < 1e-5,
            "eta {} vs min coordinate {expect}",
            m.eta
        );
    }

    #[test]
    fn master_radius_selects_quantile_count() {
        let res = residuals(10, 3);
        let alpha = 0.1;
        let c_n = conformal::quantile_index(res.len(), alpha); // 10
        let center = vec![0.0, 0.0];
        let m = master_solve(
            &[vec![0.1, 0.1]],
            &res,
            &center,
            &paper_obj(),
            alpha,
            &CcgConfig::default(),
        )
        .unwrap();
        let selected: usize = m.t.iter().filter(|&&t| t > 0.5).count();
        assert!(selected >= c_n);
        let scores = m.params.scores(&res).unwrap();
        let covered = scores.iter().filter(|&&s| s <= m.radius + 1e-7).count();
        assert!(covered >= c_n, "only {covered} scores below the radius");
    }

    #[test]
    fn infinite_epsilon_stops_after_one_iteration() {
        let res = residuals(10, 4);
        let cfg = CcgConfig {
            epsilon: f64::INFINITY,
            ..CcgConfig::default()
        };
        let out = train_ccg(&res, &[0.0, 0.0], &paper_obj(), 0.1, &cfg).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
    }

    #[test]
    fn tiny_instance_certificate_and_template_dominance() {
        let res = residuals(10, 5);
        let center = vec![0.3, 0.2];
        let obj = paper_obj();
        let cfg = CcgConfig::default();
        let out = train_ccg(&res, &center, &obj, 0.1, &cfg).unwrap();
        assert!(out.converged, "gap {} after {} iters", out.gap, out.iterations);
        assert!(out.gap <= cfg.epsilon + 1e-12);
        assert!(out.iterations <= cfg.max_iters);

        // The certified value cannot exceed the fixed template's robust value
        // (the template is master-feasible).
        let tmpl = SetParams::uniform_template(4, 2).unwrap();
        let r_tmpl =
            conformal::conformal_radius(&tmpl.scores(&res).unwrap(), 0.1).unwrap();
        let set = conformal::build_set(&tmpl, r_tmpl, center.clone()).unwrap();
        let (_, tmpl_value) = robust::robust_decision(
            &set,
            &obj,
            &crate::robust::FeasibleRegion::simplex(2),
        )
        .unwrap();
        assert!(
            out.zeta <= tmpl_value + cfg.epsilon + 1e-9,
            "ccg {} vs template {tmpl_value}",
            out.zeta
        );
    }

    #[test]
    fn certified_value_beats_random_search_over_family() {
        let res = residuals(10, 6);
        let center = vec![0.1, -0.2];
        let obj = paper_obj();
        let cfg = CcgConfig::default();
        let out = train_ccg(&res, &center, &obj, 0.1, &cfg).unwrap();
        assert!(out.converged);

        // Weak oracle: random members of the same linearized family.
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut best = f64::INFINITY;
        let region = crate::robust::FeasibleRegion::simplex(2);
        for _ in 0..10_000 {
            let scales: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..=1.0)).collect();
            let offs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let tmpl = Halfspaces::uniform_template(4, 2).unwrap();
            let w: Vec<Vec<f64>> = tmpl
                .normals()
                .iter()
                .zip(&scales)
                .map(|(row, &s)| row.iter().map(|v| v * s).collect())
                .collect();
            let params = SetParams::new(Halfspaces::new(w, offs).unwrap()).unwrap();
            let scores = params.scores(&res).unwrap();
            let r = conformal::conformal_radius(&scores, 0.1).unwrap();
            let set = conformal::build_set(&params, r, center.clone()).unwrap();
            if let Ok((_, v)) = robust::robust_decision(&set, &obj, &region) {
                best = best.min(v);
            }
        }
        assert!(
            out.zeta <= best + cfg.epsilon + 1e-6,
            "ccg {} vs random search {best}",
            out.zeta
        );
    }

    #[test]
    fn eta_monotone_and_scenarios_contained() {
        let res = residuals(12, 7);
        let center = vec![0.0, 0.5];
        let obj = paper_obj();
        let cfg = CcgConfig::default();
        let out = train_ccg(&res, &center, &obj, 0.1, &cfg).unwrap();
        for w in out.state.eta_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-7, "eta history {:?}", out.state.eta_history);
        }
        for s in &out.state.scenarios {
            let eps = vecops::sub(s, &center);
            let score = out.params.score(&eps).unwrap();
            assert!(score <= out.radius + 1e-7, "scenario escaped the final set");
        }
    }

    #[test]
    fn too_many_binaries_rejected() {
        let res = residuals(30, 8);
        let err = master_solve(
            &[vec![0.0, 0.0]],
            &res,
            &[0.0, 0.0],
            &paper_obj(),
            0.1,
            &CcgConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CcgError::TooManyBinaries { n: 30, max: 25 }));
    }

    #[test]
    fn nonlinear_objective_rejected() {
        let res = residuals(8, 9);
        let err = train_ccg(
            &res,
            &[0.0, 0.0],
            &Objective::newsvendor(0.3, 0.7, 2),
            0.1,
            &CcgConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CcgError::RequiresLinear));
    }
}
