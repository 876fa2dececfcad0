//! Polytope primitives for sets of the form `{u : W(u - center) + b <= r 1}`.
//!
//! Geometry stays low-dimensional here (outcome dimensions 1 through 4):
//! vertices come from exact intersection of facet subsets, area from the
//! shoelace formula in 2-d, and higher-dimensional volume from seeded Monte
//! Carlo over the vertex bounding box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::solver::{self, Direction, LinearProgram, Relation, Status};
use crate::vecops;

/// Tolerance for accepting a candidate vertex against all facets.
pub const FEAS_TOL: f64 = 1e-7;
/// Two vertices closer than this are the same vertex.
pub const DEDUP_TOL: f64 = 1e-8;
/// Facet pairs with intersection determinant below this are skipped.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("halfspace normals do not positively span; the set is unbounded")]
    Unbounded,
    #[error("vertex enumeration supports outcome dimension 1..=4, got {0}")]
    UnsupportedDimension(usize),
    #[error("operation requires a nonempty polytope")]
    Empty,
    #[error("solver failure inside a geometry test: {0}")]
    Solver(#[from] solver::SolveError),
}

/// A family of K halfspace normals and offsets in outcome dimension d.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspaces {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Halfspaces {
    /// Build from rows `w_k` and offsets `b_k`. Validates shape and
    /// finiteness; row normalization and spanning are the caller's contract
    /// (learned families maintain them through projection).
    pub fn new(w: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self, GeometryError> {
        if w.is_empty() {
            return Err(GeometryError::Dimension("no halfspaces".into()));
        }
        let d = w[0].len();
        if d == 0 {
            return Err(GeometryError::Dimension("zero-dimensional rows".into()));
        }
        if w.len() != b.len() {
            return Err(GeometryError::Dimension(format!(
                "{} rows but {} offsets",
                w.len(),
                b.len()
            )));
        }
        for (k, row) in w.iter().enumerate() {
            if row.len() != d {
                return Err(GeometryError::Dimension(format!(
                    "row {k} has length {}, expected {d}",
                    row.len()
                )));
            }
            if !vecops::all_finite(row) {
                return Err(GeometryError::Dimension(format!("row {k} is not finite")));
            }
        }
        if !vecops::all_finite(&b) {
            return Err(GeometryError::Dimension("offsets are not finite".into()));
        }
        Ok(Self { w, b })
    }

    /// The K-directional template: uniformly spaced unit normals for d = 2,
    /// signed axes (plus diagonal fill-ins) for other dimensions, with zero
    /// offsets.
    pub fn uniform_template(k: usize, d: usize) -> Result<Self, GeometryError> {
        if k < d + 1 {
            return Err(GeometryError::Dimension(format!(
                "need at least d+1 = {} halfspaces, got {k}",
                d + 1
            )));
        }
        let mut w = Vec::with_capacity(k);
        match d {
            1 => {
                for i in 0..k {
                    w.push(vec![if i % 2 == 0 { 1.0 } else { -1.0 }]);
                }
            }
            2 => {
                for i in 0..k {
                    let ang = 2.0 * std::f64::consts::PI * (i as f64) / (k as f64);
                    w.push(vec![ang.cos(), ang.sin()]);
                }
            }
            _ => {
                if k < 2 * d {
                    return Err(GeometryError::Dimension(format!(
                        "templates in dimension {d} need at least 2d = {} rows, got {k}",
                        2 * d
                    )));
                }
                for j in 0..d {
                    let mut plus = vec![0.0; d];
                    plus[j] = 1.0;
                    let mut minus = vec![0.0; d];
                    minus[j] = -1.0;
                    w.push(plus);
                    w.push(minus);
                }
                // Fill remaining rows with normalized sign diagonals.
                let mut pattern = 0usize;
                while w.len() < k {
                    let mut row: Vec<f64> = (0..d)
                        .map(|j| {
                            if (pattern >> j) & 1 == 1 {
                                -1.0
                            } else {
                                1.0
                            }
                        })
                        .collect();
                    let norm = vecops::norm2(&row);
                    for v in row.iter_mut() {
                        *v /= norm;
                    }
                    w.push(row);
                    pattern += 1;
                    if pattern >= (1 << d) {
                        return Err(GeometryError::Dimension(format!(
                            "template exhausted at K = {} for dimension {d}",
                            w.len()
                        )));
                    }
                }
            }
        }
        let b = vec![0.0; k];
        Self::new(w, b)
    }

    pub fn num_halfspaces(&self) -> usize {
        self.w.len()
    }

    pub fn dim(&self) -> usize {
        self.w[0].len()
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn offsets(&self) -> &[f64] {
        &self.b
    }

    pub fn rows_unit_norm(&self, tol: f64) -> bool {
        self.w
            .iter()
            .all(|row| (vecops::norm2(row) - 1.0).abs() <= tol)
    }
}

/// True iff the rows of `w` positively span R^d, i.e. the recession cone
/// `{v : Wv <= 0}` is `{0}`. Tested by 2d linear programs maximizing each
/// signed coordinate over the cone; every optimum must be zero.
pub fn positively_spans(w: &[Vec<f64>]) -> Result<bool, GeometryError> {
    if w.is_empty() {
        return Err(GeometryError::Dimension("no rows".into()));
    }
    let d = w[0].len();
    for (k, row) in w.iter().enumerate() {
        if row.len() != d {
            return Err(GeometryError::Dimension(format!(
                "row {k} has length {}, expected {d}",
                row.len()
            )));
        }
        if !vecops::all_finite(row) {
            return Err(GeometryError::Dimension(format!("row {k} is not finite")));
        }
    }
    for j in 0..d {
        for sign in [1.0, -1.0] {
            let mut obj = vec![0.0; d];
            obj[j] = sign;
            let mut lp = LinearProgram::new(Direction::Maximize, obj);
            for row in w {
                lp.add_constraint(row.clone(), Relation::Le, 0.0);
            }
            let r = solver::solve_lp(&lp)?;
            match r.status {
                Status::Unbounded => return Ok(false),
                Status::Optimal => {
                    if r.objective_value > FEAS_TOL {
                        return Ok(false);
                    }
                }
                Status::Infeasible => {
                    // v = 0 is always feasible; treat as a solver artifact.
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// A concrete polytope `{u : W(u - center) + b <= radius 1}`.
///
/// An infinite radius encodes the degenerate whole-space set: `contains`
/// is always true and vertex enumeration reports unboundedness.
#[derive(Debug, Clone)]
pub struct Polytope {
    pub halfspaces: Halfspaces,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Polytope {
    pub fn new(
        halfspaces: Halfspaces,
        center: Vec<f64>,
        radius: f64,
    ) -> Result<Self, GeometryError> {
        if center.len() != halfspaces.dim() {
            return Err(GeometryError::Dimension(format!(
                "center has dimension {}, halfspaces have {}",
                center.len(),
                halfspaces.dim()
            )));
        }
        if !vecops::all_finite(&center) || radius.is_nan() {
            return Err(GeometryError::Dimension("non-finite center or radius".into()));
        }
        Ok(Self {
            halfspaces,
            center,
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.halfspaces.dim()
    }

    pub fn is_whole_space(&self) -> bool {
        self.radius.is_infinite() && self.radius > 0.0
    }

    /// Componentwise membership test `W(u - center) + b <= r 1` within 1e-9.
    pub fn contains(&self, u: &[f64]) -> Result<bool, GeometryError> {
        if u.len() != self.dim() {
            return Err(GeometryError::Dimension(format!(
                "point has dimension {}, polytope has {}",
                u.len(),
                self.dim()
            )));
        }
        if self.is_whole_space() {
            return Ok(true);
        }
        let eps = vecops::sub(u, &self.center);
        Ok(self
            .halfspaces
            .w
            .iter()
            .zip(&self.halfspaces.b)
            .all(|(row, &bk)| vecops::dot(row, &eps) + bk <= self.radius + 1e-9))
    }

    /// All vertices, in absolute coordinates. For d = 2 the result is sorted
    /// counter-clockwise around the centroid. An empty list signals an empty
    /// polytope.
    pub fn enumerate_vertices(&self) -> Result<Vec<Vec<f64>>, GeometryError> {
        let d = self.dim();
        if d > 4 {
            return Err(GeometryError::UnsupportedDimension(d));
        }
        if !self.radius.is_finite() {
            return Err(GeometryError::Unbounded);
        }
        if !positively_spans(&self.halfspaces.w)? {
            return Err(GeometryError::Unbounded);
        }

        let w = &self.halfspaces.w;
        let b = &self.halfspaces.b;
        let k = w.len();
        // Facet k boundary in residual coordinates: w_k . eps = radius - b_k.
        let rhs: Vec<f64> = b.iter().map(|bk| self.radius - bk).collect();

        let mut verts: Vec<Vec<f64>> = Vec::new();
        let mut subset = vec![0usize; d];
        enumerate_subsets(k, d, &mut subset, 0, 0, &mut |idx: &[usize]| {
            let mut a = vec![0.0; d * d];
            let mut rv = vec![0.0; d];
            for (row_i, &fi) in idx.iter().enumerate() {
                a[row_i * d..(row_i + 1) * d].copy_from_slice(&w[fi]);
                rv[row_i] = rhs[fi];
            }
            if d == 2 {
                let det = a[0] * a[3] - a[1] * a[2];
                if det.abs() < SINGULAR_TOL {
                    return;
                }
            }
            let eps = match vecops::solve_dense(&a, &rv, d) {
                Some(x) => x,
                None => return, // near-singular facet combination
            };
            // Feasible against every facet?
            let feasible = w
                .iter()
                .zip(rhs.iter())
                .all(|(row, &r)| vecops::dot(row, &eps) <= r + FEAS_TOL);
            if !feasible {
                return;
            }
            if verts.iter().any(|v| vecops::dist2(v, &eps) <= DEDUP_TOL) {
                return;
            }
            verts.push(eps);
        });

        // Shift to absolute coordinates.
        let mut out: Vec<Vec<f64>> = verts
            .into_iter()
            .map(|v| vecops::add(&v, &self.center))
            .collect();

        if d == 2 && out.len() > 2 {
            let cx = out.iter().map(|v| v[0]).sum::<f64>() / out.len() as f64;
            let cy = out.iter().map(|v| v[1]).sum::<f64>() / out.len() as f64;
            out.sort_by(|p, q| {
                let ap = (p[1] - cy).atan2(p[0] - cx);
                let aq = (q[1] - cy).atan2(q[0] - cx);
                ap.total_cmp(&aq)
            });
        }
        Ok(out)
    }

    /// Volume: exact shoelace area for d = 2 (d = 1 interval length), seeded
    /// Monte Carlo over the vertex bounding box for d in {3, 4}. Empty and
    /// degenerate (lower-dimensional) polytopes report 0.
    pub fn volume(&self, mc_samples: usize, seed: u64) -> Result<f64, GeometryError> {
        let d = self.dim();
        let verts = self.enumerate_vertices()?;
        if verts.is_empty() {
            return Ok(0.0);
        }
        if verts.len() <= d {
            return Ok(0.0); // degenerate: flagged by is_degenerate()
        }
        match d {
            1 => {
                let lo = verts.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                let hi = verts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                Ok(hi - lo)
            }
            2 => Ok(shoelace(&verts)),
            _ => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for v in &verts {
                    for j in 0..d {
                        lo[j] = lo[j].min(v[j]);
                        hi[j] = hi[j].max(v[j]);
                    }
                }
                let box_vol: f64 = (0..d).map(|j| hi[j] - lo[j]).product();
                if box_vol <= 0.0 {
                    return Ok(0.0);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut hits = 0usize;
                let mut point = vec![0.0; d];
                for _ in 0..mc_samples {
                    for j in 0..d {
                        point[j] = rng.random_range(lo[j]..=hi[j]);
                    }
                    if self.contains(&point)? {
                        hits += 1;
                    }
                }
                Ok(box_vol * hits as f64 / mc_samples as f64)
            }
        }
    }

    /// A polytope whose vertex set spans fewer than d+1 points is
    /// lower-dimensional.
    pub fn is_degenerate(&self) -> Result<bool, GeometryError> {
        Ok(self.enumerate_vertices()?.len() <= self.dim())
    }
}

/// Visit all size-`d` subsets of `0..k` in lexicographic order.
fn enumerate_subsets(
    k: usize,
    d: usize,
    subset: &mut Vec<usize>,
    pos: usize,
    start: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if pos == d {
        visit(subset);
        return;
    }
    for i in start..k {
        subset[pos] = i;
        enumerate_subsets(k, d, subset, pos + 1, i + 1, visit);
    }
}

/// Signed-area shoelace on a CCW-sorted vertex cycle.
fn shoelace(verts: &[Vec<f64>]) -> f64 {
    let n = verts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += verts[i][0] * verts[j][1] - verts[j][0] * verts[i][1];
    }
    acc.abs() / 2.0
}
