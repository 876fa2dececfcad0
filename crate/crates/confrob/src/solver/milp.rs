//! Best-first branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{solve_lp, Direction, MixedIntegerProgram, SolveError, SolveResult, Status};

/// Branch-and-bound options.
#[derive(Debug, Clone)]
pub struct MilpOptions {
    /// Maximum number of nodes (LP relaxations) to explore.
    pub node_limit: u64,
    /// A binary is considered integral within this tolerance.
    pub int_tol: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_limit: 1_000_000,
            int_tol: 1e-6,
        }
    }
}

struct Node {
    /// Optimistic bound inherited from the parent relaxation (minimization).
    bound: f64,
    depth: usize,
    seq: u64,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; order so the smallest bound pops first,
    // ties by larger depth, then by insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| self.depth.cmp(&other.depth))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub(super) fn branch_and_bound(
    mip: &MixedIntegerProgram,
    opts: &MilpOptions,
) -> Result<SolveResult, SolveError> {
    mip.base.validate()?;
    let n = mip.base.num_vars();
    for &j in &mip.binary_indices {
        if j >= n {
            return Err(SolveError::Dimension(format!(
                "binary index {j} out of range for {n} variables"
            )));
        }
    }

    // Work on a minimization copy; restore the sign at the end.
    let maximize = mip.base.direction == Direction::Maximize;
    let mut base = mip.base.clone();
    if maximize {
        base.direction = Direction::Minimize;
        for c in base.objective.iter_mut() {
            *c = -*c;
        }
    }
    // Intersect binary bounds with [0, 1].
    for &j in &mip.binary_indices {
        let (l, u) = base.bounds[j];
        base.bounds[j] = (l.max(0.0), u.min(1.0));
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq: 0,
        fixes: Vec::new(),
    });
    let mut seq = 1u64;
    let mut nodes = 0u64;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut any_unbounded = false;

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= best - 1e-9 {
                continue; // pruned by bound
            }
        }
        if nodes >= opts.node_limit {
            return Err(SolveError::NodeLimit {
                limit: opts.node_limit,
            });
        }
        nodes += 1;

        let mut lp = base.clone();
        for &(j, v) in &node.fixes {
            lp.bounds[j] = (v, v);
        }
        let relax = solve_lp(&lp)?;
        match relax.status {
            Status::Infeasible => continue,
            Status::Unbounded => {
                any_unbounded = true;
                continue;
            }
            Status::Optimal => {}
        }
        let value = relax.objective_value;
        if let Some((best, _)) = &incumbent {
            if value >= best - 1e-9 {
                continue;
            }
        }

        // Most fractional binary; ties by smallest index.
        let mut branch: Option<(usize, f64)> = None;
        for &j in &mip.binary_indices {
            let x = relax.primal[j];
            let frac = (x - x.round()).abs();
            if frac > opts.int_tol {
                let better = match branch {
                    None => true,
                    Some((_, bf)) => frac > bf + 1e-12,
                };
                if better {
                    branch = Some((j, frac));
                }
            }
        }

        match branch {
            None => {
                // Integral: new incumbent.
                let mut primal = relax.primal.clone();
                for &j in &mip.binary_indices {
                    primal[j] = primal[j].round();
                }
                incumbent = Some((value, primal));
            }
            Some((j, _)) => {
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node {
                        bound: value,
                        depth: node.depth + 1,
                        seq,
                        fixes,
                    });
                    seq += 1;
                }
            }
        }
    }

    match incumbent {
        Some((value, primal)) => Ok(SolveResult {
            status: Status::Optimal,
            primal,
            dual: Vec::new(),
            objective_value: if maximize { -value } else { value },
            node_count: nodes,
            duality_gap: 0.0,
        }),
        None => {
            let status = if any_unbounded {
                Status::Unbounded
            } else {
                Status::Infeasible
            };
            let mut r = SolveResult::non_optimal(status);
            r.node_count = nodes;
            Ok(r)
        }
    }
}
