//! Property tests for the core invariants.

use confrob::conformal::{self, SetParams};
use confrob::geometry::Halfspaces;
use confrob::pinball;
use proptest::prelude::*;

fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..40)
}

proptest! {
    // The conformal radius is nondecreasing as the miscoverage level falls.
    #[test]
    fn radius_monotone_in_alpha(scores in scores_strategy(),
                                a in 0.02f64..0.5, b in 0.02f64..0.5) {
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        let r_loose = conformal::conformal_radius(&scores, hi).unwrap();
        let r_tight = conformal::conformal_radius(&scores, lo).unwrap();
        prop_assert!(r_tight >= r_loose || (r_tight.is_infinite() && r_loose.is_infinite()));
    }

    // Positive scaling of the scores scales the radius.
    #[test]
    fn radius_scale_coherent(scores in scores_strategy(),
                             lambda in 0.01f64..20.0, alpha in 0.05f64..0.5) {
        let r = conformal::conformal_radius(&scores, alpha).unwrap();
        let scaled: Vec<f64> = scores.iter().map(|s| s * lambda).collect();
        let rs = conformal::conformal_radius(&scaled, alpha).unwrap();
        if r.is_finite() {
            prop_assert!((rs - lambda * r).abs() <= 1e-9 * (1.0 + r.abs() * lambda));
        } else {
            prop_assert!(rs.is_infinite());
        }
    }

    // Membership in the built set coincides with the score sublevel test.
    #[test]
    fn set_score_duality(ex in -3.0f64..3.0, ey in -3.0f64..3.0,
                         cx in -2.0f64..2.0, cy in -2.0f64..2.0,
                         radius in 0.0f64..3.0, k in 4usize..9) {
        let params = SetParams::uniform_template(k, 2).unwrap();
        let set = conformal::build_set(&params, radius, vec![cx, cy]).unwrap();
        let u = [ex + cx, ey + cy];
        let inside = set.contains(&u).unwrap();
        let score = params.score(&[ex, ey]).unwrap();
        // The membership test carries a 1e-9 slack; stay off the knife edge.
        if (score - radius).abs() > 1e-8 {
            prop_assert_eq!(inside, score <= radius);
        }
    }

    // The simplex projection lands on the simplex and is idempotent.
    #[test]
    fn simplex_projection_feasible_idempotent(z in prop::collection::vec(-4.0f64..4.0, 2..6)) {
        let p = pinball::project_simplex(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| v >= -1e-12));
        let pp = pinball::project_simplex(&p);
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    // The smallest pinball minimizer satisfies the quantile sandwich.
    #[test]
    fn pinball_radius_sandwich(scores in scores_strategy(), tau in 0.05f64..0.95) {
        let r = pinball::pinball_radius_scores(&scores, tau);
        let n = scores.len() as f64;
        let below = scores.iter().filter(|&&s| s < r).count() as f64;
        let at_or_below = scores.iter().filter(|&&s| s <= r).count() as f64;
        prop_assert!(below <= tau * n + 1e-9);
        prop_assert!(tau * n <= at_or_below + 1e-9);
    }

    // Vertex sets are stable under halfspace row permutation.
    #[test]
    fn vertices_permutation_invariant(seedling in 0u64..500, radius in 0.5f64..2.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seedling);
        let k = rng.random_range(4..8usize);
        let mut w = Vec::new();
        for i in 0..k {
            let ang = 2.0 * std::f64::consts::PI * (i as f64) / (k as f64)
                + rng.random_range(-0.2..0.2);
            w.push(vec![ang.cos(), ang.sin()]);
        }
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-0.2..0.2)).collect();
        let hs = Halfspaces::new(w.clone(), b.clone()).unwrap();
        prop_assume!(confrob::geometry::positively_spans(hs.normals()).unwrap());
        let p1 = confrob::geometry::Polytope::new(hs, vec![0.0, 0.0], radius).unwrap();
        let v1 = p1.enumerate_vertices().unwrap();

        let wr: Vec<Vec<f64>> = w.into_iter().rev().collect();
        let br: Vec<f64> = b.into_iter().rev().collect();
        let p2 = confrob::geometry::Polytope::new(
            Halfspaces::new(wr, br).unwrap(),
            vec![0.0, 0.0],
            radius,
        )
        .unwrap();
        let v2 = p2.enumerate_vertices().unwrap();
        prop_assert_eq!(v1.len(), v2.len());
        for v in &v1 {
            prop_assert!(v2
                .iter()
                .any(|u| ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt() < 1e-7));
        }
    }
}
