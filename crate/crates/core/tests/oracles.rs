//! Estimators checked against direct computations on the raw lineage data.

mod common;

use bargw_core::{estimate_gw, estimate_theta};
use common::{coordinate_descent, loss, pattern_counts, random_forest, regression_pairs};

#[test]
fn least_squares_matches_direct_minimiser() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let forest = random_forest(seed, 4);
        let n = forest.depth();
        let Ok(est) = estimate_theta(&forest, n) else { continue };
        let pairs = regression_pairs(&forest, n);
        for i in 0..2 {
            let (a, b) = coordinate_descent(&pairs[i]);
            let (ea, eb) = (est.theta[2 * i], est.theta[2 * i + 1]);
            assert!((a - ea).abs() < 1e-8 && (b - eb).abs() < 1e-8, "seed {seed} type {i}: {a} {b} vs {ea} {eb}");
            // no small step from the estimate lowers the loss
            let base = loss(&pairs[i], ea, eb);
            for (da, db) in [(1e-6, 0.0), (-1e-6, 0.0), (0.0, 1e-6), (0.0, -1e-6)] {
                assert!(loss(&pairs[i], ea + da, eb + db) >= base);
            }
        }
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} forests had a defined estimate");
}

#[test]
fn pattern_frequencies_match_counting() {
    for seed in 100..130u64 {
        let forest = random_forest(seed, 4);
        for n in 2..=forest.depth() {
            let Ok(est) = estimate_gw(&forest, n) else { continue };
            let counts = pattern_counts(&forest, n);
            for i in 0..2 {
                let total: u64 = counts[i].iter().sum();
                assert_eq!(est.denom[i], total);
                for l in 0..4 {
                    let want = if total == 0 { 0.0 } else { counts[i][l] as f64 / total as f64 };
                    assert_eq!(est.p_hat[4 * i + l], want, "seed {seed} n {n} type {i} pattern {l}");
                }
            }
        }
    }
}
