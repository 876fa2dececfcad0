//! Cross-cutting oracle checks wired into one runnable target.
//!
//! Every check pits an implementation path against an independent oracle:
//! the sorted order statistic against the big-M selection program, vertex
//! enumeration against LP duality, and Monte Carlo resampling against the
//! marginal coverage guarantee. The `validate` CLI subcommand serializes the
//! resulting report as JSON.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conformal::{self, SetParams};
use crate::data;
use crate::geometry::Halfspaces;
use crate::pinball::{self, PinballConfig};
use crate::robust::{self, Objective};
use crate::solver;

/// One oracle/implementation comparison that failed.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCase {
    pub seed: u64,
    pub description: String,
    pub oracle: f64,
    pub implementation: f64,
    pub tolerance: f64,
}

/// Outcome of one named check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    /// The first failing case, dumped with its full instance.
    pub failures: Vec<OracleCase>,
    pub details: Vec<String>,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
}

/// A random unit-norm spanning family around the uniform template.
fn random_params(rng: &mut ChaCha8Rng, k: usize, d: usize) -> SetParams {
    loop {
        let template = Halfspaces::uniform_template(k, d).unwrap();
        let w: Vec<Vec<f64>> = template
            .normals()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| v + rng.random_range(-0.35..0.35))
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let raw = match Halfspaces::new(w, b) {
            Ok(h) => h,
            Err(_) => continue,
        };
        let params = SetParams::new(raw).unwrap();
        if let Ok(p) = pinball::project_theta(&params, 1.0) {
            return p;
        }
    }
}

/// Conformal radius by sort against the big-M selection MILP, exact to 1e-9.
pub fn check_quantile_milp(trials: usize, n_max: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-9;
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for trial in 0..trials {
        let n = rng.random_range(1..=n_max);
        let d = 2;
        let params = random_params(&mut rng, 4, d);
        let residuals: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let alpha = [0.05, 0.1, 0.2, 0.3][rng.random_range(0..4)];

        let sorted = conformal::conformal_radius(
            &params.scores(&residuals).expect("dims"),
            alpha,
        )
        .expect("radius");
        let milp = conformal::radius_selection_milp(&params, &residuals, alpha, 1.0)
            .expect("milp build");
        let res = solver::solve_milp(&milp).expect("milp solve");

        let consistent = if sorted.is_infinite() {
            // Quantile beyond the sample: the selection program must be
            // infeasible.
            !res.is_optimal()
        } else {
            res.is_optimal() && (res.objective_value - sorted).abs() <= tol
        };
        if !consistent && failures.is_empty() {
            failures.push(OracleCase {
                seed: trial as u64,
                description: format!(
                    "n={n}, alpha={alpha}, residuals={residuals:?}, theta={:?}",
                    conformal::ParamsSnapshot::from(&params)
                ),
                oracle: sorted,
                implementation: if res.is_optimal() {
                    res.objective_value
                } else {
                    f64::NAN
                },
                tolerance: tol,
            });
        }
    }
    details.push(format!("{trials} random instances with n <= {n_max}"));
    CheckReport {
        name: "quantile-vs-milp".into(),
        passed: failures.is_empty(),
        trials,
        failures,
        details,
        inconclusive: false,
    }
}

/// Vertex-enumeration maximum against the dual LP value, within 1e-6.
pub fn check_duality(trials: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-6;
    let mut failures = Vec::new();
    let mut done = 0usize;
    while done < trials {
        let k = rng.random_range(4..9usize);
        let params = random_params(&mut rng, k, 2);
        let center = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let radius = rng.random_range(0.7..2.5);
        let set = conformal::build_set(&params, radius, center).expect("set");
        if set.enumerate_vertices().map(|v| v.is_empty()).unwrap_or(true) {
            continue;
        }
        let t: f64 = rng.random_range(0.0..1.0);
        let z = [t, 1.0 - t];
        let obj = Objective::linear(
            vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            None,
        );
        let (vertex_val, _) = robust::worst_case(&z, &set, &obj).expect("vertex max");
        let dual_val = robust::worst_case_dual_linear(&z, &set, &obj).expect("dual");
        if (vertex_val - dual_val).abs() > tol && failures.is_empty() {
            failures.push(OracleCase {
                seed: done as u64,
                description: format!(
                    "k={k}, radius={radius}, z={z:?}, theta={:?}",
                    conformal::ParamsSnapshot::from(&params)
                ),
                oracle: vertex_val,
                implementation: dual_val,
                tolerance: tol,
            });
        }
        done += 1;
    }
    CheckReport {
        name: "duality-vs-vertices".into(),
        passed: failures.is_empty(),
        trials,
        failures,
        details: vec![format!("{trials} random bounded polytopes and decisions")],
        inconclusive: false,
    }
}

/// Marginal coverage over resampled splits, for a fixed parameter family and
/// for the re-calibrated learned family. The mean over replications must sit
/// within three standard errors below the nominal level.
pub fn check_coverage_band(n: usize, alpha: f64, reps: usize, seed: u64) -> CheckReport {
    let mut details = Vec::new();
    if reps < 2 {
        return CheckReport {
            name: "coverage-band".into(),
            passed: true,
            trials: reps,
            failures: Vec::new(),
            details: vec!["fewer than 2 replications: band degenerate".into()],
            inconclusive: true,
        };
    }
    let test_n = 200usize;
    let template = SetParams::uniform_template(4, 2).expect("template");
    let obj = Objective::linear(vec![-0.08, 0.0], None);

    let mut fixed_cov = Vec::with_capacity(reps);
    let mut learned_cov = Vec::with_capacity(reps);
    for rep in 0..reps {
        let rep_seed = seed
            .wrapping_mul(1_000_003)
            .wrapping_add(rep as u64);
        // Fresh draws: calibration residuals and test outcomes around a
        // zero-centered predictor (residuals are what coverage sees).
        let ds = data::gen_synthetic(2 * n + test_n, 2, rep_seed).expect("data");
        let mu_res: Vec<Vec<f64>> = ds
            .x
            .iter()
            .zip(&ds.y)
            .map(|(x, y)| {
                let mu = data::synthetic_mean(x, 2);
                crate::vecops::sub(y, &mu)
            })
            .collect();
        let learn = &mu_res[..n];
        let cal = &mu_res[n..2 * n];
        let test = &mu_res[2 * n..];

        // Fixed family calibrated on the calibration half.
        let r_fixed =
            conformal::conformal_radius(&template.scores(cal).expect("scores"), alpha)
                .expect("radius");
        let covered = test
            .iter()
            .filter(|e| template.score(e).expect("score") <= r_fixed)
            .count();
        fixed_cov.push(covered as f64 / test.len() as f64);

        // Learned family: geometry from the learn half, radius re-calibrated
        // on the independent half (validity holds for any learned geometry).
        let mut cfg = PinballConfig::for_alpha(n, alpha);
        cfg.iters = 300;
        cfg.seed = rep_seed;
        let learned = pinball::train_pinball(learn, vec![0.0, 0.0], &obj, cfg, 4)
            .expect("train")
            .params;
        let r_learned =
            conformal::conformal_radius(&learned.scores(cal).expect("scores"), alpha)
                .expect("radius");
        let covered = test
            .iter()
            .filter(|e| learned.score(e).expect("score") <= r_learned)
            .count();
        learned_cov.push(covered as f64 / test.len() as f64);
    }

    let mut failures = Vec::new();
    for (label, cov) in [("fixed", &fixed_cov), ("re-calibrated", &learned_cov)] {
        let mean: f64 = cov.iter().sum::<f64>() / cov.len() as f64;
        let var: f64 =
            cov.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / cov.len() as f64;
        let se = (var / cov.len() as f64).sqrt();
        let lower = 1.0 - alpha - 3.0 * se.max(1e-6);
        details.push(format!(
            "{label}: mean coverage {mean:.4} over {reps} splits (band lower {lower:.4})"
        ));
        if mean < lower || mean > 1.0 {
            failures.push(OracleCase {
                seed,
                description: format!("{label} coverage outside the band"),
                oracle: 1.0 - alpha,
                implementation: mean,
                tolerance: 3.0 * se,
            });
        }
    }
    CheckReport {
        name: "coverage-band".into(),
        passed: failures.is_empty(),
        trials: reps,
        failures,
        details,
        inconclusive: false,
    }
}

/// Run the full oracle suite with its standard parameters.
pub fn run_all(seed: u64) -> ValidationReport {
    run_all_with(seed, 50, 100, 200)
}

/// Oracle suite with explicit trial counts (smaller budgets for smoke runs).
pub fn run_all_with(
    seed: u64,
    milp_trials: usize,
    duality_trials: usize,
    coverage_reps: usize,
) -> ValidationReport {
    let checks = vec![
        check_quantile_milp(milp_trials, 15, seed),
        check_duality(duality_trials, seed.wrapping_add(1)),
        check_coverage_band(50, 0.1, coverage_reps, seed.wrapping_add(2)),
    ];
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport {
        schema_version: 1,
        checks,
        passed,
    }
}
