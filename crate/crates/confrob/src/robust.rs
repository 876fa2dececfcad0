//! Inner adversarial maximization over a calibrated polytope and the outer
//! robust decision on the probability simplex.
//!
//! The inner maximum of a convex loss over a polytope is attained at a
//! vertex, so the primary path enumerates vertices. For linear losses an
//! LP-dual path solves `min_{lambda >= 0} (r 1 - b + W center)^T lambda`
//! subject to `W^T lambda = Q^T z`; the two routes double as each other's
//! test oracle.

use thiserror::Error;

use crate::geometry::{GeometryError, Polytope};
use crate::solver::{self, Direction, LinearProgram, Relation, SolveError, Status};
use crate::vecops;

/// Convergence tolerance of the one-dimensional outer search.
const TERNARY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RobustError {
    #[error("the uncertainty set is empty")]
    EmptySet,
    #[error("decision dimension {0} unsupported for this objective (need p = 2)")]
    UnsupportedDecisionDim(usize),
    #[error("operation requires a linear objective")]
    RequiresLinear,
    #[error("dual LP inconsistent with a bounded set (status {0:?})")]
    DualInconsistency(Status),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolveError),
}

/// Decision loss g(z, u).
#[derive(Debug, Clone)]
pub enum Objective {
    /// g(z, u) = (c + Q u) . z
    Linear { c: Vec<f64>, q: Vec<Vec<f64>> },
    /// g(z, u) = (c + Q u) . z + beta (z_1 - z_2)^2, decisions on the 2-simplex
    Quadratic {
        c: Vec<f64>,
        q: Vec<Vec<f64>>,
        beta: f64,
    },
    /// g(z, u) = sum_j [c_o max(z_j - u_j, 0) + c_u max(u_j - z_j, 0)]
    Newsvendor { c_o: f64, c_u: f64, dim: usize },
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect()
}

impl Objective {
    pub fn linear(c: Vec<f64>, q: Option<Vec<Vec<f64>>>) -> Self {
        let q = q.unwrap_or_else(|| identity(c.len()));
        Objective::Linear { c, q }
    }

    pub fn quadratic(c: Vec<f64>, q: Option<Vec<Vec<f64>>>, beta: f64) -> Self {
        let q = q.unwrap_or_else(|| identity(c.len()));
        Objective::Quadratic { c, q, beta }
    }

    pub fn newsvendor(c_o: f64, c_u: f64, dim: usize) -> Self {
        Objective::Newsvendor { c_o, c_u, dim }
    }

    pub fn decision_dim(&self) -> usize {
        match self {
            Objective::Linear { c, .. } | Objective::Quadratic { c, .. } => c.len(),
            Objective::Newsvendor { dim, .. } => *dim,
        }
    }

    pub fn outcome_dim(&self) -> usize {
        match self {
            Objective::Linear { q, .. } | Objective::Quadratic { q, .. } => {
                q.first().map_or(0, |row| row.len())
            }
            Objective::Newsvendor { dim, .. } => *dim,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Objective::Linear { .. })
    }

    /// Loss value at decision z and outcome u.
    pub fn value(&self, z: &[f64], u: &[f64]) -> f64 {
        match self {
            Objective::Linear { c, q } => {
                let qu: Vec<f64> = q.iter().map(|row| vecops::dot(row, u)).collect();
                vecops::dot(c, z) + vecops::dot(&qu, z)
            }
            Objective::Quadratic { c, q, beta } => {
                let qu: Vec<f64> = q.iter().map(|row| vecops::dot(row, u)).collect();
                let gap = z[0] - z[1];
                vecops::dot(c, z) + vecops::dot(&qu, z) + beta * gap * gap
            }
            Objective::Newsvendor { c_o, c_u, .. } => z
                .iter()
                .zip(u)
                .map(|(&zj, &uj)| c_o * (zj - uj).max(0.0) + c_u * (uj - zj).max(0.0))
                .sum(),
        }
    }

    /// A subgradient in z at (z, u).
    pub fn grad_z(&self, z: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Objective::Linear { c, q } => {
                let qu: Vec<f64> = q.iter().map(|row| vecops::dot(row, u)).collect();
                vecops::add(c, &qu)
            }
            Objective::Quadratic { c, q, beta } => {
                let qu: Vec<f64> = q.iter().map(|row| vecops::dot(row, u)).collect();
                let mut g = vecops::add(c, &qu);
                let gap = 2.0 * beta * (z[0] - z[1]);
                g[0] += gap;
                g[1] -= gap;
                g
            }
            Objective::Newsvendor { c_o, c_u, .. } => z
                .iter()
                .zip(u)
                .map(|(&zj, &uj)| if zj >= uj { *c_o } else { -*c_u })
                .collect(),
        }
    }

    /// The linear-in-u coefficient vector Q^T z (linear/quadratic only).
    fn u_coefficients(&self, z: &[f64]) -> Option<Vec<f64>> {
        match self {
            Objective::Linear { q, .. } | Objective::Quadratic { q, .. } => {
                let d = self.outcome_dim();
                let mut qt_z = vec![0.0; d];
                for (i, row) in q.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        qt_z[j] += v * z[i];
                    }
                }
                Some(qt_z)
            }
            Objective::Newsvendor { .. } => None,
        }
    }
}

/// The decision feasible region: the probability simplex in dimension p.
#[derive(Debug, Clone, Copy)]
pub struct FeasibleRegion {
    pub dim: usize,
}

impl FeasibleRegion {
    pub fn simplex(dim: usize) -> Self {
        Self { dim }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.len() == self.dim
            && z.iter().all(|&v| v >= -tol)
            && (z.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// Maximum of g(z, .) over the polytope. Returns the value and a maximizing
/// vertex. The loss is convex in u, so a vertex attains the maximum.
pub fn worst_case(
    z: &[f64],
    set: &Polytope,
    obj: &Objective,
) -> Result<(f64, Vec<f64>), RobustError> {
    let verts = set.enumerate_vertices()?;
    worst_over_vertices(z, &verts, obj)
}

/// Vertex-list form of [`worst_case`], for callers that reuse an enumeration.
pub fn worst_over_vertices(
    z: &[f64],
    verts: &[Vec<f64>],
    obj: &Objective,
) -> Result<(f64, Vec<f64>), RobustError> {
    if verts.is_empty() {
        return Err(RobustError::EmptySet);
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0usize;
    for (i, v) in verts.iter().enumerate() {
        let val = obj.value(z, v);
        if val > best {
            best = val;
            arg = i;
        }
    }
    Ok((best, verts[arg].clone()))
}

/// Solve the facet-multiplier LP of the inner maximization of `direction . u`
/// over the polytope: `min (r 1 - b + W center)^T lambda` subject to
/// `W^T lambda = direction`, `lambda >= 0`. Returns the multipliers and the
/// optimal value.
pub fn facet_multipliers(
    set: &Polytope,
    direction: &[f64],
) -> Result<(Vec<f64>, f64), RobustError> {
    if !set.radius.is_finite() {
        return Err(RobustError::Geometry(GeometryError::Unbounded));
    }
    let w = set.halfspaces.normals();
    let b = set.halfspaces.offsets();
    let k = w.len();
    let d = set.dim();

    // Objective coefficients: r 1 - b + W center.
    let coeffs: Vec<f64> = (0..k)
        .map(|kk| set.radius - b[kk] + vecops::dot(&w[kk], &set.center))
        .collect();
    let mut lp = LinearProgram::new(Direction::Minimize, coeffs);
    for kk in 0..k {
        lp.set_bounds(kk, 0.0, f64::INFINITY);
    }
    for j in 0..d {
        let row: Vec<f64> = (0..k).map(|kk| w[kk][j]).collect();
        lp.add_constraint(row, Relation::Eq, direction[j]);
    }
    let res = solver::solve_lp(&lp)?;
    match res.status {
        Status::Optimal => Ok((res.primal, res.objective_value)),
        // An unbounded dual means the primal inner max is infeasible: the set
        // is empty.
        Status::Unbounded => Err(RobustError::EmptySet),
        // An infeasible dual would mean an unbounded inner maximum, which a
        // bounded set cannot produce.
        s => Err(RobustError::DualInconsistency(s)),
    }
}

/// LP-dual value of the inner maximization for a linear objective:
/// `c . z + min_{lambda >= 0} (r 1 - b + W center)^T lambda` subject to
/// `W^T lambda = Q^T z`. Equals the vertex-enumeration maximum.
pub fn worst_case_dual_linear(
    z: &[f64],
    set: &Polytope,
    obj: &Objective,
) -> Result<f64, RobustError> {
    let c = match obj {
        Objective::Linear { c, .. } => c,
        _ => return Err(RobustError::RequiresLinear),
    };
    let qt_z = obj.u_coefficients(z).expect("linear objective");
    let (_, value) = facet_multipliers(set, &qt_z)?;
    Ok(vecops::dot(c, z) + value)
}

/// A subgradient in u of the loss at (z, u); for the piecewise-linear
/// newsvendor loss the underage side is taken at ties.
pub fn grad_u(obj: &Objective, z: &[f64], u: &[f64]) -> Vec<f64> {
    match obj {
        Objective::Linear { .. } | Objective::Quadratic { .. } => {
            obj.u_coefficients(z).expect("linear-in-u objective")
        }
        Objective::Newsvendor { c_o, c_u, .. } => z
            .iter()
            .zip(u)
            .map(|(&zj, &uj)| if uj >= zj { *c_u } else { -*c_o })
            .collect(),
    }
}

/// Minimize the worst-case loss over the probability simplex.
///
/// Linear objectives go through an epigraph LP over the vertex list (with a
/// midpoint tie-break when p = 2); quadratic and newsvendor objectives with
/// p = 2 go through ternary search on z = (t, 1 - t).
pub fn robust_decision(
    set: &Polytope,
    obj: &Objective,
    region: &FeasibleRegion,
) -> Result<(Vec<f64>, f64), RobustError> {
    let verts = set.enumerate_vertices()?;
    robust_decision_over_vertices(&verts, obj, region)
}

/// Vertex-list form of [`robust_decision`].
pub fn robust_decision_over_vertices(
    verts: &[Vec<f64>],
    obj: &Objective,
    region: &FeasibleRegion,
) -> Result<(Vec<f64>, f64), RobustError> {
    if verts.is_empty() {
        return Err(RobustError::EmptySet);
    }
    let p = region.dim;
    if obj.decision_dim() != p {
        return Err(RobustError::Dimension(format!(
            "objective decision dimension {} != region dimension {p}",
            obj.decision_dim()
        )));
    }
    match obj {
        Objective::Linear { .. } => {
            // Epigraph LP: min eta s.t. (c + Q v) . z <= eta for each vertex,
            // z on the simplex.
            let mut objective = vec![0.0; p + 1];
            objective[p] = 1.0;
            let mut lp = LinearProgram::new(Direction::Minimize, objective);
            for j in 0..p {
                lp.set_bounds(j, 0.0, f64::INFINITY);
            }
            let zero = vec![0.0; p];
            let mut grads = Vec::with_capacity(verts.len());
            for v in verts {
                let g = obj.grad_z(&zero, v); // c + Q v, z-independent
                let mut row = g.clone();
                row.push(-1.0);
                lp.add_constraint(row, Relation::Le, 0.0);
                grads.push(g);
            }
            let mut simplex_row = vec![1.0; p + 1];
            simplex_row[p] = 0.0;
            lp.add_constraint(simplex_row, Relation::Eq, 1.0);
            let res = solver::solve_lp(&lp)?;
            if !res.is_optimal() {
                return Err(RobustError::DualInconsistency(res.status));
            }
            let eta = res.objective_value;
            let mut z: Vec<f64> = res.primal[..p].to_vec();
            if p == 2 {
                // Tie-break: midpoint of the optimal segment in t = z_1.
                let t_lo = extreme_t(&grads, eta, true)?;
                let t_hi = extreme_t(&grads, eta, false)?;
                let t = 0.5 * (t_lo + t_hi);
                z = vec![t, 1.0 - t];
            }
            let (value, _) = worst_over_vertices(&z, verts, obj)?;
            Ok((z, value))
        }
        _ => {
            if p != 2 {
                return Err(RobustError::UnsupportedDecisionDim(p));
            }
            let phi = |t: f64| -> Result<f64, RobustError> {
                let z = vec![t, 1.0 - t];
                Ok(worst_over_vertices(&z, verts, obj)?.0)
            };
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while hi - lo > TERNARY_TOL {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                let f1 = phi(m1)?;
                let f2 = phi(m2)?;
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
            let z = vec![t, 1.0 - t];
            let (value, _) = worst_over_vertices(&z, verts, obj)?;
            Ok((z, value))
        }
    }
}

/// Smallest (or largest) t with max_i grads[i] . (t, 1-t) <= eta on [0, 1].
fn extreme_t(grads: &[Vec<f64>], eta: f64, smallest: bool) -> Result<f64, RobustError> {
    let mut lp = LinearProgram::new(
        if smallest {
            Direction::Minimize
        } else {
            Direction::Maximize
        },
        vec![1.0],
    );
    lp.set_bounds(0, 0.0, 1.0);
    for g in grads {
        // g0 t + g1 (1 - t) <= eta  =>  (g0 - g1) t <= eta - g1
        lp.add_constraint(vec![g[0] - g[1]], Relation::Le, eta - g[1] + 1e-9);
    }
    let res = solver::solve_lp(&lp)?;
    if !res.is_optimal() {
        return Err(RobustError::DualInconsistency(res.status));
    }
    Ok(res.primal[0].clamp(0.0, 1.0))
}

/// Worst case of g(z, .) over a Euclidean ball around `center`, exact through
/// the support function of each linear piece of the loss.
pub fn worst_case_ball(
    z: &[f64],
    center: &[f64],
    radius: f64,
    obj: &Objective,
) -> Result<(f64, Vec<f64>), RobustError> {
    if radius < 0.0 {
        return Err(RobustError::EmptySet);
    }
    match obj {
        Objective::Linear { .. } | Objective::Quadratic { .. } => {
            let coef = obj.u_coefficients(z).expect("linear-in-u objective");
            let norm = vecops::norm2(&coef);
            let arg = if norm > 0.0 {
                let mut a = center.to_vec();
                vecops::axpy(&mut a, radius / norm, &coef);
                a
            } else {
                center.to_vec()
            };
            Ok((obj.value(z, &arg), arg))
        }
        Objective::Newsvendor { c_o, c_u, dim } => {
            // One linear piece per overage/underage sign pattern.
            let d = *dim;
            let mut best = f64::NEG_INFINITY;
            let mut best_arg = center.to_vec();
            for pattern in 0..(1usize << d) {
                let mut coef = vec![0.0; d];
                let mut constant = 0.0;
                for j in 0..d {
                    if (pattern >> j) & 1 == 1 {
                        coef[j] = *c_u;
                        constant -= c_u * z[j];
                    } else {
                        coef[j] = -*c_o;
                        constant += c_o * z[j];
                    }
                }
                let norm = vecops::norm2(&coef);
                let mut arg = center.to_vec();
                if norm > 0.0 {
                    vecops::axpy(&mut arg, radius / norm, &coef);
                }
                let val = constant + vecops::dot(&coef, &arg);
                if val > best {
                    best = val;
                    best_arg = arg;
                }
            }
            // The piecewise bound touches g at the maximizing point.
            Ok((obj.value(z, &best_arg).max(best), best_arg))
        }
    }
}

/// Robust decision over a ball via ternary search (p = 2 only).
pub fn robust_decision_ball(
    center: &[f64],
    radius: f64,
    obj: &Objective,
    region: &FeasibleRegion,
) -> Result<(Vec<f64>, f64), RobustError> {
    if region.dim != 2 {
        return Err(RobustError::UnsupportedDecisionDim(region.dim));
    }
    let phi = |t: f64| -> Result<f64, RobustError> {
        Ok(worst_case_ball(&[t, 1.0 - t], center, radius, obj)?.0)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > TERNARY_TOL {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let f1 = phi(m1)?;
        let f2 = phi(m2)?;
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
    let z = vec![t, 1.0 - t];
    let (value, _) = worst_case_ball(&z, center, radius, obj)?;
    Ok((z, value))
}
