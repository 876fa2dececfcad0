//! Self-contained dense linear programming and small-scale mixed-integer
//! programming.
//!
//! The LP path is a two-phase primal simplex on a dense tableau with Bland's
//! rule, so degenerate instances cannot cycle. The MILP path is best-first
//! branch-and-bound over binary variables on top of the LP relaxation. Both
//! are deterministic given their input and sized for the small reformulations
//! used elsewhere in this crate (duality cross-checks, big-M radius selection,
//! restricted master problems).

mod lp;
mod milp;

use thiserror::Error;

pub use milp::MilpOptions;

/// Optimization sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

/// Constraint relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// A single dense linear constraint `coeffs . x (rel) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A dense linear program with per-variable bounds (possibly infinite).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub direction: Direction,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Per-variable `(lower, upper)`; use `f64::NEG_INFINITY`/`f64::INFINITY`
    /// for free sides.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// New LP with all variables free.
    pub fn new(direction: Direction, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            direction,
            objective,
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    pub(crate) fn validate(&self) -> Result<(), SolveError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(SolveError::Dimension(format!(
                "bounds length {} != {} variables",
                self.bounds.len(),
                n
            )));
        }
        if !self.objective.iter().all(|c| c.is_finite()) {
            return Err(SolveError::Dimension("non-finite objective coefficient".into()));
        }
        for (i, con) in self.constraints.iter().enumerate() {
            if con.coeffs.len() != n {
                return Err(SolveError::Dimension(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    con.coeffs.len()
                )));
            }
            if !con.coeffs.iter().all(|c| c.is_finite()) || !con.rhs.is_finite() {
                return Err(SolveError::Dimension(format!(
                    "constraint {i} has a non-finite entry"
                )));
            }
        }
        for (j, &(l, u)) in self.bounds.iter().enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(SolveError::Dimension(format!("bound {j} is NaN")));
            }
        }
        Ok(())
    }
}

/// A linear program plus a set of variables restricted to {0, 1}.
#[derive(Debug, Clone)]
pub struct MixedIntegerProgram {
    pub base: LinearProgram,
    pub binary_indices: Vec<usize>,
}

impl MixedIntegerProgram {
    pub fn new(base: LinearProgram, binary_indices: Vec<usize>) -> Self {
        Self {
            base,
            binary_indices,
        }
    }
}

/// Solve outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of an LP or MILP solve.
///
/// `dual` holds one shadow price per original constraint (LP only; the sign
/// convention is d(optimal objective)/d(rhs)). `duality_gap` is the relative
/// primal/dual objective mismatch of the internal standard form and is 0.0
/// for non-optimal results and MILPs.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: Status,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective_value: f64,
    pub node_count: u64,
    pub duality_gap: f64,
}

impl SolveResult {
    pub(crate) fn non_optimal(status: Status) -> Self {
        Self {
            status,
            primal: Vec::new(),
            dual: Vec::new(),
            objective_value: f64::NAN,
            node_count: 0,
            duality_gap: 0.0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("simplex exceeded the pivot budget ({pivots} pivots); instance is numerically unstable")]
    NumericalInstability { pivots: usize },
    #[error("branch-and-bound node limit {limit} exceeded")]
    NodeLimit { limit: u64 },
    #[error("malformed program: {0}")]
    Dimension(String),
}

/// Solve a linear program to a basic optimal solution with duals.
pub fn solve_lp(lp: &LinearProgram) -> Result<SolveResult, SolveError> {
    lp.validate()?;
    lp::simplex(lp)
}

/// Solve a mixed-integer program with default options.
pub fn solve_milp(mip: &MixedIntegerProgram) -> Result<SolveResult, SolveError> {
    milp::branch_and_bound(mip, &MilpOptions::default())
}

/// Solve a mixed-integer program with explicit options.
pub fn solve_milp_with(
    mip: &MixedIntegerProgram,
    opts: &MilpOptions,
) -> Result<SolveResult, SolveError> {
    milp::branch_and_bound(mip, opts)
}
