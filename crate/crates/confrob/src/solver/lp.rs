//! Two-phase dense primal simplex with Bland's rule.
#![allow(clippy::needless_range_loop)] // index loops mirror the tableau algebra

use super::{Direction, LinearProgram, Relation, SolveError, SolveResult, Status};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

/// How an original variable maps into the nonnegative standard form.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = x'[col] + shift
    Shifted { col: usize, shift: f64 },
    /// x = shift - x'[col]
    Negated { col: usize, shift: f64 },
    /// x = x'[pos] - x'[neg]
    Free { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    /// Original constraint index; `flipped` when the row was negated to make
    /// the rhs nonnegative.
    Constraint { index: usize, flipped: bool },
    /// Synthetic row encoding a finite upper bound on a shifted variable.
    Bound,
}

struct StandardForm {
    ncols: usize,
    cost: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rels: Vec<Relation>,
    rhs: Vec<f64>,
    origins: Vec<RowOrigin>,
    var_map: Vec<VarMap>,
    obj_shift: f64,
    /// -1.0 when the original problem maximizes, else 1.0.
    dir_sign: f64,
}

fn standardize(lp: &LinearProgram) -> Result<StandardForm, Status> {
    let n = lp.num_vars();
    let dir_sign = match lp.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };

    let mut var_map = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut cost: Vec<f64> = Vec::new();
    let mut obj_shift = 0.0;
    // rows for finite upper bounds of shifted variables: (col, width)
    let mut ub_rows: Vec<(usize, f64)> = Vec::new();

    for (j, &(l, u)) in lp.bounds.iter().enumerate() {
        if l > u {
            return Err(Status::Infeasible);
        }
        let cj = dir_sign * lp.objective[j];
        if l.is_finite() {
            var_map.push(VarMap::Shifted { col: ncols, shift: l });
            cost.push(cj);
            obj_shift += cj * l;
            if u.is_finite() {
                ub_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            var_map.push(VarMap::Negated { col: ncols, shift: u });
            cost.push(-cj);
            obj_shift += cj * u;
            ncols += 1;
        } else {
            var_map.push(VarMap::Free {
                pos: ncols,
                neg: ncols + 1,
            });
            cost.push(cj);
            cost.push(-cj);
            ncols += 2;
        }
    }

    let mut rows = Vec::new();
    let mut rels = Vec::new();
    let mut rhs = Vec::new();
    let mut origins = Vec::new();

    for (i, con) in lp.constraints.iter().enumerate() {
        let mut row = vec![0.0; ncols];
        let mut b = con.rhs;
        for (j, &a) in con.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match var_map[j] {
                VarMap::Shifted { col, shift } => {
                    row[col] += a;
                    b -= a * shift;
                }
                VarMap::Negated { col, shift } => {
                    row[col] -= a;
                    b -= a * shift;
                }
                VarMap::Free { pos, neg } => {
                    row[pos] += a;
                    row[neg] -= a;
                }
            }
        }
        let mut rel = con.relation;
        let mut flipped = false;
        if b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            b = -b;
            flipped = true;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rows.push(row);
        rels.push(rel);
        rhs.push(b);
        origins.push(RowOrigin::Constraint { index: i, flipped });
    }

    for (col, width) in ub_rows {
        let mut row = vec![0.0; ncols];
        row[col] = 1.0;
        rows.push(row);
        rels.push(Relation::Le);
        rhs.push(width);
        origins.push(RowOrigin::Bound);
    }

    Ok(StandardForm {
        ncols,
        cost,
        rows,
        rels,
        rhs,
        origins,
        var_map,
        obj_shift,
        dir_sign,
    })
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

/// One simplex phase with Bland's rule on a dense tableau.
///
/// `tableau` is m rows by `width` columns, `rhs` the m right-hand sides,
/// `obj` the reduced-cost row (objective written for minimization), and
/// `obj_val` the negated current objective value. `allow` filters columns
/// eligible to enter the basis.
#[allow(clippy::too_many_arguments)]
fn run_phase(
    tableau: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    obj: &mut [f64],
    obj_val: &mut f64,
    width: usize,
    allow: &dyn Fn(usize) -> bool,
    pivots_left: &mut usize,
) -> Result<PhaseOutcome, SolveError> {
    let m = tableau.len();
    loop {
        // Bland: entering column is the smallest index with negative reduced cost.
        let mut entering = None;
        for (col, &c) in obj.iter().enumerate().take(width) {
            if allow(col) && c < -PIVOT_TOL {
                entering = Some(col);
                break;
            }
        }
        let entering = match entering {
            Some(c) => c,
            None => return Ok(PhaseOutcome::Optimal),
        };

        // Ratio test; ties broken by the smallest basic variable index (Bland).
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = tableau[r][entering];
            if a > PIVOT_TOL {
                let ratio = rhs[r] / a;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - PIVOT_TOL
                            || ((ratio - lratio).abs() <= PIVOT_TOL && basis[r] < basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let (leave_row, _) = match leave {
            Some(l) => l,
            None => return Ok(PhaseOutcome::Unbounded),
        };

        if *pivots_left == 0 {
            return Err(SolveError::NumericalInstability { pivots: 0 });
        }
        *pivots_left -= 1;

        pivot(tableau, rhs, obj, obj_val, leave_row, entering, width);
        basis[leave_row] = entering;
    }
}

fn pivot(
    tableau: &mut [Vec<f64>],
    rhs: &mut [f64],
    obj: &mut [f64],
    obj_val: &mut f64,
    prow: usize,
    pcol: usize,
    width: usize,
) {
    let pval = tableau[prow][pcol];
    for c in 0..width {
        tableau[prow][c] /= pval;
    }
    rhs[prow] /= pval;
    tableau[prow][pcol] = 1.0;

    let m = tableau.len();
    for r in 0..m {
        if r == prow {
            continue;
        }
        let f = tableau[r][pcol];
        if f == 0.0 {
            continue;
        }
        for c in 0..width {
            tableau[r][c] -= f * tableau[prow][c];
        }
        tableau[r][pcol] = 0.0;
        rhs[r] -= f * rhs[prow];
        if rhs[r].abs() < 1e-13 {
            rhs[r] = 0.0;
        }
    }
    let f = obj[pcol];
    if f != 0.0 {
        for c in 0..width {
            obj[c] -= f * tableau[prow][c];
        }
        obj[pcol] = 0.0;
        *obj_val -= f * rhs[prow];
    }
}

pub(super) fn simplex(lp: &LinearProgram) -> Result<SolveResult, SolveError> {
    let sf = match standardize(lp) {
        Ok(sf) => sf,
        Err(status) => return Ok(SolveResult::non_optimal(status)),
    };
    let m = sf.rows.len();
    let n = sf.ncols;

    // Column layout: structural | slack/surplus | artificial.
    let mut n_logical = 0usize;
    for rel in &sf.rels {
        if matches!(rel, Relation::Le | Relation::Ge) {
            n_logical += 1;
        }
    }
    let mut n_artificial = 0usize;
    for rel in &sf.rels {
        if matches!(rel, Relation::Ge | Relation::Eq) {
            n_artificial += 1;
        }
    }
    let width = n + n_logical + n_artificial;
    let art_start = n + n_logical;

    let mut tableau: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs = sf.rhs.clone();
    let mut basis = vec![0usize; m];
    // Trace each row's slack/surplus column so duals can be reconstructed.
    let mut logical_col_of_row = vec![usize::MAX; m];

    let mut next_logical = n;
    let mut next_art = art_start;
    for (r, row) in sf.rows.iter().enumerate() {
        let mut t = vec![0.0; width];
        t[..n].copy_from_slice(row);
        match sf.rels[r] {
            Relation::Le => {
                t[next_logical] = 1.0;
                basis[r] = next_logical;
                logical_col_of_row[r] = next_logical;
                next_logical += 1;
            }
            Relation::Ge => {
                t[next_logical] = -1.0;
                logical_col_of_row[r] = next_logical;
                next_logical += 1;
                t[next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                t[next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }
        tableau.push(t);
    }

    let budget = 50 * (m + width).max(20);
    let mut pivots_left = budget;

    // Phase 1: minimize the sum of artificials.
    if n_artificial > 0 {
        let mut obj = vec![0.0; width];
        let mut obj_val = 0.0;
        for c in art_start..width {
            obj[c] = 1.0;
        }
        // Price out the artificial basis.
        for r in 0..m {
            if basis[r] >= art_start {
                for c in 0..width {
                    obj[c] -= tableau[r][c];
                }
                obj_val -= rhs[r];
            }
        }
        let outcome = run_phase(
            &mut tableau,
            &mut rhs,
            &mut basis,
            &mut obj,
            &mut obj_val,
            width,
            &|_| true,
            &mut pivots_left,
        )
        .map_err(|_| SolveError::NumericalInstability {
            pivots: budget,
        })?;
        debug_assert!(matches!(outcome, PhaseOutcome::Optimal));
        let phase1_value = -obj_val;
        if phase1_value > FEAS_TOL {
            return Ok(SolveResult::non_optimal(Status::Infeasible));
        }
        // Drive any artificial still in the basis out, or drop its row as
        // redundant.
        let mut redundant = Vec::new();
        for r in 0..m {
            if basis[r] < art_start {
                continue;
            }
            let mut pivot_col = None;
            for c in 0..art_start {
                if tableau[r][c].abs() > PIVOT_TOL {
                    pivot_col = Some(c);
                    break;
                }
            }
            match pivot_col {
                Some(c) => {
                    let mut dummy_obj = vec![0.0; width];
                    let mut dummy_val = 0.0;
                    pivot(
                        &mut tableau,
                        &mut rhs,
                        &mut dummy_obj,
                        &mut dummy_val,
                        r,
                        c,
                        width,
                    );
                    basis[r] = c;
                }
                None => redundant.push(r),
            }
        }
        if !redundant.is_empty() {
            for &r in redundant.iter().rev() {
                tableau.remove(r);
                rhs.remove(r);
                basis.remove(r);
            }
        }
        // Record which standard-form rows survive.
        let kept: Vec<usize> = {
            // Rows were removed by position; rebuild the index map.
            let mut kept = Vec::with_capacity(m - redundant.len());
            let mut skip = redundant.iter().copied().collect::<std::collections::BTreeSet<_>>();
            for r in 0..m {
                if !skip.remove(&r) {
                    kept.push(r);
                }
            }
            kept
        };
        return phase2(lp, sf, tableau, rhs, basis, kept, logical_col_of_row, art_start, &mut pivots_left, budget);
    }

    let kept: Vec<usize> = (0..m).collect();
    phase2(lp, sf, tableau, rhs, basis, kept, logical_col_of_row, art_start, &mut pivots_left, budget)
}

#[allow(clippy::too_many_arguments)]
fn phase2(
    lp: &LinearProgram,
    sf: StandardForm,
    mut tableau: Vec<Vec<f64>>,
    mut rhs: Vec<f64>,
    mut basis: Vec<usize>,
    kept_rows: Vec<usize>,
    logical_col_of_row: Vec<usize>,
    art_start: usize,
    pivots_left: &mut usize,
    budget: usize,
) -> Result<SolveResult, SolveError> {
    let n = sf.ncols;
    let width = art_start; // drop artificial columns
    for row in tableau.iter_mut() {
        row.truncate(width);
    }

    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(&sf.cost);
    let mut obj_val = 0.0;
    // Price out the current basis.
    let m = tableau.len();
    for r in 0..m {
        let cb = if basis[r] < n { sf.cost[basis[r]] } else { 0.0 };
        if cb != 0.0 {
            for c in 0..width {
                obj[c] -= cb * tableau[r][c];
            }
            obj_val -= cb * rhs[r];
        }
    }

    let outcome = run_phase(
        &mut tableau,
        &mut rhs,
        &mut basis,
        &mut obj,
        &mut obj_val,
        width,
        &|_| true,
        pivots_left,
    )
    .map_err(|_| SolveError::NumericalInstability { pivots: budget })?;

    if let PhaseOutcome::Unbounded = outcome {
        return Ok(SolveResult::non_optimal(Status::Unbounded));
    }

    // Primal values in standard-form coordinates.
    let mut x_sf = vec![0.0; width];
    for r in 0..m {
        x_sf[basis[r]] = rhs[r];
    }
    let mut primal = vec![0.0; lp.num_vars()];
    for (j, vm) in sf.var_map.iter().enumerate() {
        primal[j] = match *vm {
            VarMap::Shifted { col, shift } => x_sf[col] + shift,
            VarMap::Negated { col, shift } => shift - x_sf[col],
            VarMap::Free { pos, neg } => x_sf[pos] - x_sf[neg],
        };
    }

    let internal_obj = {
        let mut v = sf.obj_shift;
        for c in 0..n {
            v += sf.cost[c] * x_sf[c];
        }
        v
    };
    let objective_value = sf.dir_sign * internal_obj;

    // Duals: solve B^T y = c_B over the surviving rows, where B stacks the
    // original standard-form columns of the final basic variables.
    let k = m;
    let mut dual = vec![0.0; lp.constraints.len()];
    let mut duality_gap = 0.0;
    if k > 0 {
        let col_of = |col: usize, kept_row: usize| -> f64 {
            let global_row = kept_rows[kept_row];
            if col < n {
                sf.rows[global_row][col]
            } else {
                // logical column: +1 slack for Le, -1 surplus for Ge, on its row
                let owner = logical_col_of_row
                    .iter()
                    .position(|&c| c == col)
                    .expect("logical column owner");
                if owner == global_row {
                    match sf.rels[owner] {
                        Relation::Le => 1.0,
                        Relation::Ge => -1.0,
                        Relation::Eq => 0.0,
                    }
                } else {
                    0.0
                }
            }
        };
        let mut bt = vec![0.0; k * k];
        let mut cb = vec![0.0; k];
        for (r, &bcol) in basis.iter().enumerate() {
            for rr in 0..k {
                // B[rr][r] = column of basis[r] at kept row rr; transpose it.
                bt[r * k + rr] = col_of(bcol, rr);
            }
            cb[r] = if bcol < n { sf.cost[bcol] } else { 0.0 };
        }
        if let Some(y) = crate::vecops::solve_dense(&bt, &cb, k) {
            let mut dual_obj = sf.obj_shift;
            for (kr, &global_row) in kept_rows.iter().enumerate() {
                dual_obj += y[kr] * sf.rhs[global_row];
                if let RowOrigin::Constraint { index, flipped } = sf.origins[global_row] {
                    let sign = if flipped { -1.0 } else { 1.0 };
                    dual[index] = sf.dir_sign * sign * y[kr];
                }
            }
            duality_gap =
                (internal_obj - dual_obj).abs() / internal_obj.abs().max(1.0);
        }
    }

    Ok(SolveResult {
        status: Status::Optimal,
        primal,
        dual,
        objective_value,
        node_count: 0,
        duality_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn check_feasible(lp: &LinearProgram, x: &[f64], tol: f64) {
        for (i, con) in lp.constraints.iter().enumerate() {
            let lhs: f64 = con.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let ok = match con.relation {
                Relation::Le => lhs <= con.rhs + tol,
                Relation::Ge => lhs >= con.rhs - tol,
                Relation::Eq => (lhs - con.rhs).abs() <= tol,
            };
            assert!(ok, "constraint {i} violated: lhs={lhs}, rhs={}", con.rhs);
        }
        for (j, &(l, u)) in lp.bounds.iter().enumerate() {
            assert!(x[j] >= l - tol && x[j] <= u + tol, "bound {j} violated");
        }
    }

    #[test]
    fn min_x_with_lower_bound() {
        // min x s.t. x >= 1
        let mut lp = LinearProgram::new(Direction::Minimize, vec![1.0]);
        lp.set_bounds(0, 1.0, f64::INFINITY);
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert!((r.objective_value - 1.0).abs() < 1e-9);
        assert!((r.primal[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn box_support_function_with_duals() {
        // max u1 over [-1,1]^2, box written as constraint rows so the
        // active-face dual is observable.
        let mut lp = LinearProgram::new(Direction::Maximize, vec![1.0, 0.0]);
        for j in 0..2 {
            let mut up = vec![0.0, 0.0];
            up[j] = 1.0;
            lp.add_constraint(up.clone(), Relation::Le, 1.0);
            lp.add_constraint(up.iter().map(|v| -v).collect(), Relation::Le, 1.0);
        }
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert!((r.objective_value - 1.0).abs() < 1e-9);
        // Shadow price of the active constraint u1 <= 1 is 1.
        assert!((r.dual[0] - 1.0).abs() < 1e-6, "dual = {:?}", r.dual);
        assert!(r.duality_gap < 1e-6);
    }

    #[test]
    fn degenerate_optimum_no_cycling() {
        // max u1 + u2 s.t. u1 + u2 <= 1, u >= 0; the optimal face is an edge.
        let mut lp = LinearProgram::new(Direction::Maximize, vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Le, 1.0);
        lp.set_bounds(0, 0.0, f64::INFINITY);
        lp.set_bounds(1, 0.0, f64::INFINITY);
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert!((r.objective_value - 1.0).abs() < 1e-9);
        check_feasible(&lp, &r.primal, 1e-7);
        // Enumerating basic feasible solutions of this system gives the same
        // optimum: vertices (0,0), (1,0), (0,1) with best value 1.
        assert!((r.objective_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = LinearProgram::new(Direction::Minimize, vec![1.0]);
        lp.add_constraint(vec![1.0], Relation::Ge, 2.0);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        let r = solve_lp(&lp).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(Direction::Minimize, vec![-1.0]);
        lp.set_bounds(0, 0.0, f64::INFINITY);
        let r = solve_lp(&lp).unwrap();
        assert_eq!(r.status, Status::Unbounded);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x + y s.t. x + 2y = 4, x - y >= -5 with x, y free.
        let mut lp = LinearProgram::new(Direction::Minimize, vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 2.0], Relation::Eq, 4.0);
        lp.add_constraint(vec![1.0, -1.0], Relation::Ge, -5.0);
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        // On x + 2y = 4, x + y = 4 - y decreases as y grows; x - y >= -5
        // caps y at y = 3, x = -2.
        assert!((r.objective_value - 1.0).abs() < 1e-7);
        check_feasible(&lp, &r.primal, 1e-7);
        assert!(r.duality_gap < 1e-6);
    }

    #[test]
    fn fixed_variable_via_equal_bounds() {
        let mut lp = LinearProgram::new(Direction::Maximize, vec![1.0, 1.0]);
        lp.set_bounds(0, 2.0, 2.0);
        lp.set_bounds(1, 0.0, 3.0);
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert!((r.primal[0] - 2.0).abs() < 1e-9);
        assert!((r.objective_value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn random_lps_satisfy_strong_duality_and_feasibility() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut optimal_seen = 0;
        for _ in 0..200 {
            let n = rng.random_range(1..5usize);
            let m = rng.random_range(1..6usize);
            let mut lp = LinearProgram::new(
                if rng.random_bool(0.5) {
                    Direction::Minimize
                } else {
                    Direction::Maximize
                },
                (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
            );
            for j in 0..n {
                // Mix of bound shapes, always bounded below or above.
                match rng.random_range(0..3) {
                    0 => lp.set_bounds(j, 0.0, f64::INFINITY),
                    1 => lp.set_bounds(j, -rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)),
                    _ => lp.set_bounds(j, 0.0, rng.random_range(0.5..3.0)),
                }
            }
            for _ in 0..m {
                let coeffs: Vec<f64> =
                    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let rel = match rng.random_range(0..3) {
                    0 => Relation::Le,
                    1 => Relation::Ge,
                    _ => Relation::Eq,
                };
                lp.add_constraint(coeffs, rel, rng.random_range(-2.0..2.0));
            }
            let r = match solve_lp(&lp) {
                Ok(r) => r,
                Err(e) => panic!("solver error on random LP: {e}"),
            };
            if r.is_optimal() {
                optimal_seen += 1;
                check_feasible(&lp, &r.primal, 1e-7);
                assert!(
                    r.duality_gap < 1e-6,
                    "duality gap {} too large",
                    r.duality_gap
                );
                // Complementary slackness on original rows.
                for (i, con) in lp.constraints.iter().enumerate() {
                    let lhs: f64 =
                        con.coeffs.iter().zip(&r.primal).map(|(a, v)| a * v).sum();
                    let slack = (con.rhs - lhs).abs();
                    if !matches!(con.relation, Relation::Eq) {
                        assert!(
                            slack * r.dual[i].abs() < 1e-6,
                            "complementary slackness violated: slack={slack}, dual={}",
                            r.dual[i]
                        );
                    }
                }
            }
        }
        assert!(optimal_seen > 50, "too few optimal instances: {optimal_seen}");
    }
}
