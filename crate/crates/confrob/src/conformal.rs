//! Max-affine nonconformity scoring and split-conformal calibration.
//!
//! The score of a residual `e` under parameters `theta = {(w_k, b_k)}` is
//! `max_k (w_k . e + b_k)`, a piecewise-linear convex gauge whose sublevel
//! sets are the polytopes of [`crate::geometry`]. Calibration picks the
//! c_n-th smallest calibration score with `c_n = ceil((n+1)(1-alpha))`, the
//! split-conformal quantile; `c_n > n` yields an infinite radius (the
//! whole-space set, trivially valid).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Halfspaces, Polytope};
use crate::solver::{Direction, LinearProgram, MixedIntegerProgram, Relation};
use crate::vecops;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("empty score list")]
    EmptyScores,
    #[error("residual has dimension {got}, parameters expect {expected}")]
    Dimension { got: usize, expected: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The learnable hyperplane family defining the nonconformity score.
#[derive(Debug, Clone, PartialEq)]
pub struct SetParams {
    halfspaces: Halfspaces,
}

impl SetParams {
    /// Requires `K >= d + 1`, the minimum for a bounded sublevel set.
    pub fn new(halfspaces: Halfspaces) -> Result<Self, ConformalError> {
        if halfspaces.num_halfspaces() < halfspaces.dim() + 1 {
            return Err(ConformalError::Dimension {
                got: halfspaces.num_halfspaces(),
                expected: halfspaces.dim() + 1,
            });
        }
        Ok(Self { halfspaces })
    }

    pub fn uniform_template(k: usize, d: usize) -> Result<Self, ConformalError> {
        Ok(Self {
            halfspaces: Halfspaces::uniform_template(k, d)?,
        })
    }

    pub fn halfspaces(&self) -> &Halfspaces {
        &self.halfspaces
    }

    pub fn dim(&self) -> usize {
        self.halfspaces.dim()
    }

    pub fn num_halfspaces(&self) -> usize {
        self.halfspaces.num_halfspaces()
    }

    /// Max-affine score of a residual: `max_k (w_k . e + b_k)`.
    pub fn score(&self, residual: &[f64]) -> Result<f64, ConformalError> {
        if residual.len() != self.dim() {
            return Err(ConformalError::Dimension {
                got: residual.len(),
                expected: self.dim(),
            });
        }
        Ok(self
            .halfspaces
            .normals()
            .iter()
            .zip(self.halfspaces.offsets())
            .map(|(w, &b)| vecops::dot(w, residual) + b)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn scores(&self, residuals: &[Vec<f64>]) -> Result<Vec<f64>, ConformalError> {
        residuals.iter().map(|e| self.score(e)).collect()
    }
}

/// The split-conformal order-statistic index `c_n = ceil((n+1)(1-alpha))`.
///
/// The product is computed with a small relative guard so that values that
/// are mathematically integral do not get bumped up by floating-point noise.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    let t = (n as f64 + 1.0) * (1.0 - alpha);
    let c = (t - 1e-9 * t.abs().max(1.0)).ceil() as usize;
    c.max(1)
}

/// The c_n-th smallest score; `+inf` when `c_n > n`. Ties count individually
/// through the stable sorted order.
pub fn conformal_radius(scores: &[f64], alpha: f64) -> Result<f64, ConformalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConformalError::InvalidAlpha(alpha));
    }
    let n = scores.len();
    if n == 0 {
        return Err(ConformalError::EmptyScores);
    }
    let c = quantile_index(n, alpha);
    if c > n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted[c - 1])
}

/// Parameters plus a calibrated radius at a given miscoverage level.
#[derive(Debug, Clone)]
pub struct CalibratedSet {
    pub params: SetParams,
    pub radius: f64,
    pub alpha: f64,
}

impl CalibratedSet {
    /// Calibrate on residuals: score them and take the conformal quantile.
    pub fn calibrate(
        params: SetParams,
        residuals: &[Vec<f64>],
        alpha: f64,
    ) -> Result<Self, ConformalError> {
        let scores = params.scores(residuals)?;
        let radius = conformal_radius(&scores, alpha)?;
        Ok(Self {
            params,
            radius,
            alpha,
        })
    }

    /// The prediction set at a given center (the point prediction for x).
    pub fn build_set(&self, center: Vec<f64>) -> Result<Polytope, ConformalError> {
        build_set(&self.params, self.radius, center)
    }
}

/// Polytope with the given halfspaces around a center at a given radius.
/// An infinite radius produces the whole-space sentinel set.
pub fn build_set(
    params: &SetParams,
    radius: f64,
    center: Vec<f64>,
) -> Result<Polytope, ConformalError> {
    Ok(Polytope::new(params.halfspaces().clone(), center, radius)?)
}

/// Fraction of test pairs whose outcome lands inside the built set.
pub fn empirical_coverage<F>(
    mut set_builder: F,
    test: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64, ConformalError>
where
    F: FnMut(&[f64]) -> Result<Polytope, ConformalError>,
{
    if test.is_empty() {
        return Err(ConformalError::EmptyScores);
    }
    let mut covered = 0usize;
    for (x, y) in test {
        let set = set_builder(x)?;
        if set.contains(y)? {
            covered += 1;
        }
    }
    Ok(covered as f64 / test.len() as f64)
}

/// Big-M constant large enough for the radius selection program: with unit
/// norm rows and offsets bounded by `b_bound`, `M = 2 (max ||e_i|| + B) + 1`
/// keeps every score representable above the radius lower bound `-B`.
pub fn big_m(residuals: &[Vec<f64>], b_bound: f64) -> f64 {
    let max_norm = residuals
        .iter()
        .map(|e| vecops::norm2(e))
        .fold(0.0, f64::max);
    2.0 * (max_norm + b_bound) + 1.0
}

/// The big-M mixed-integer representation of the conformal radius for fixed
/// parameters: minimize r subject to `W e_i + b <= (r + M(1 - t_i)) 1_K`,
/// `1^T t >= c_n`, `t` binary. Its optimum equals [`conformal_radius`] of the
/// same scores; infeasibility corresponds to the `c_n > n` infinite radius.
pub fn radius_selection_milp(
    params: &SetParams,
    residuals: &[Vec<f64>],
    alpha: f64,
    b_bound: f64,
) -> Result<MixedIntegerProgram, ConformalError> {
    if residuals.is_empty() {
        return Err(ConformalError::EmptyScores);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConformalError::InvalidAlpha(alpha));
    }
    let n = residuals.len();
    let k = params.num_halfspaces();
    let m_big = big_m(residuals, b_bound);
    let c_n = quantile_index(n, alpha);

    // Variables: [r, t_1 .. t_n].
    let mut objective = vec![0.0; n + 1];
    objective[0] = 1.0;
    let mut lp = LinearProgram::new(Direction::Minimize, objective);
    lp.set_bounds(0, -b_bound, m_big);
    for i in 0..n {
        lp.set_bounds(1 + i, 0.0, 1.0);
    }
    let w = params.halfspaces().normals();
    let b = params.halfspaces().offsets();
    for (i, e) in residuals.iter().enumerate() {
        if e.len() != params.dim() {
            return Err(ConformalError::Dimension {
                got: e.len(),
                expected: params.dim(),
            });
        }
        for kk in 0..k {
            // w_k . e_i + b_k - r - M + M t_i <= 0
            let lhs = vecops::dot(&w[kk], e) + b[kk];
            let mut row = vec![0.0; n + 1];
            row[0] = -1.0;
            row[1 + i] = m_big;
            lp.add_constraint(row, Relation::Le, m_big - lhs);
        }
    }
    let mut card = vec![1.0; n + 1];
    card[0] = 0.0;
    lp.add_constraint(card, Relation::Ge, c_n as f64);
    Ok(MixedIntegerProgram::new(lp, (1..=n).collect()))
}

/// Serializable snapshot of learned parameters, for run artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsSnapshot {
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl From<&SetParams> for ParamsSnapshot {
    fn from(p: &SetParams) -> Self {
        Self {
            normals: p.halfspaces().normals().to_vec(),
            offsets: p.halfspaces().offsets().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver;

    fn linf_params() -> SetParams {
        SetParams::uniform_template(4, 2).unwrap()
    }

    #[test]
    fn score_recovers_linf_norm() {
        let p = linf_params();
        let s = p.score(&[0.3, -0.7]).unwrap();
        assert!((s - 0.7).abs() < 1e-12);
        assert_eq!(p.score(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn score_with_offsets() {
        let hs = Halfspaces::new(
            vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
            ],
            vec![0.1, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let p = SetParams::new(hs).unwrap();
        // Brute evaluation of all four affine pieces: max{0.4, -0.2, -0.3, 0.2}.
        let s = p.score(&[0.3, -0.2]).unwrap();
        assert!((s - 0.4).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let scores: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        // c_n = ceil(11 * 0.9) = 10 -> the largest score.
        assert_eq!(conformal_radius(&scores, 0.1).unwrap(), 1.0);
        // n = 1, alpha = 0.5 -> c_n = 1 -> that score.
        assert_eq!(conformal_radius(&[0.42], 0.5).unwrap(), 0.42);
        // n = 5, alpha = 0.05 -> c_n = 6 > 5 -> infinite radius.
        assert!(conformal_radius(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.05)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn quantile_index_is_fp_safe() {
        // (29+1) * (1 - 0.1) = 27 exactly in the reals; floating noise must
        // not bump ceil(27.0000000000000004) to 28.
        assert_eq!(quantile_index(29, 0.1), 27);
        assert_eq!(quantile_index(10, 0.1), 10); // ceil(9.9)
        assert_eq!(quantile_index(9, 0.5), 5); // ceil(5.0)
        assert_eq!(quantile_index(50, 0.1), 46); // ceil(45.9)
    }

    #[test]
    fn quantile_errors() {
        assert!(matches!(
            conformal_radius(&[], 0.1),
            Err(ConformalError::EmptyScores)
        ));
        assert!(matches!(
            conformal_radius(&[1.0], 0.0),
            Err(ConformalError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn radius_monotone_in_alpha_and_scale_coherent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.random_range(1..40usize);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..5.0)).collect();
            let mut prev = f64::NEG_INFINITY;
            for alpha in [0.5, 0.3, 0.2, 0.1, 0.05] {
                let r = conformal_radius(&scores, alpha).unwrap();
                assert!(r >= prev, "radius must be nondecreasing as alpha falls");
                prev = r;
            }
            let lambda = rng.random_range(0.1..4.0);
            let scaled: Vec<f64> = scores.iter().map(|s| s * lambda).collect();
            let r1 = conformal_radius(&scores, 0.2).unwrap();
            let r2 = conformal_radius(&scaled, 0.2).unwrap();
            if r1.is_infinite() {
                assert!(r2.is_infinite());
            } else {
                assert!((r2 - lambda * r1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn build_set_membership_matches_score() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let p = linf_params();
        let center = vec![0.7, -0.4];
        let radius = 1.3;
        let set = build_set(&p, radius, center.clone()).unwrap();
        for _ in 0..100 {
            let u = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let eps = vecops::sub(&u, &center);
            let inside = p.score(&eps).unwrap() <= radius;
            assert_eq!(set.contains(&u).unwrap(), inside, "set/score duality at {u:?}");
        }
    }

    #[test]
    fn infinite_radius_is_whole_space() {
        let set = build_set(&linf_params(), f64::INFINITY, vec![0.0, 0.0]).unwrap();
        assert!(set.is_whole_space());
        assert!(set.contains(&[1e9, 1e9]).unwrap());
    }

    #[test]
    fn coverage_degenerate_sets() {
        let test: Vec<(Vec<f64>, Vec<f64>)> = (0..10)
            .map(|i| (vec![i as f64], vec![i as f64, -(i as f64)]))
            .collect();
        let whole = empirical_coverage(
            |_| build_set(&linf_params(), f64::INFINITY, vec![0.0, 0.0]),
            &test,
        )
        .unwrap();
        assert_eq!(whole, 1.0);

        // Empty polytope: positive offsets with radius 0 exclude everything.
        let hs = Halfspaces::new(
            linf_params().halfspaces().normals().to_vec(),
            vec![0.5; 4],
        )
        .unwrap();
        let empty_params = SetParams::new(hs).unwrap();
        let none = empirical_coverage(
            |_| build_set(&empty_params, 0.0, vec![0.0, 0.0]),
            &test,
        )
        .unwrap();
        assert_eq!(none, 0.0);
    }

    #[test]
    fn radius_milp_matches_sort_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.random_range(1..=12usize);
            let residuals: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                .collect();
            let alpha = [0.1, 0.2, 0.3][rng.random_range(0..3)];
            let params = linf_params();
            let sorted = conformal_radius(&params.scores(&residuals).unwrap(), alpha).unwrap();
            let milp = radius_selection_milp(&params, &residuals, alpha, 1.0).unwrap();
            let res = solver::solve_milp(&milp).unwrap();
            if sorted.is_infinite() {
                assert!(!res.is_optimal());
            } else {
                assert!(res.is_optimal());
                assert!(
                    (res.objective_value - sorted).abs() <= 1e-9,
                    "milp {} vs sorted {sorted}",
                    res.objective_value
                );
            }
        }
    }
}
