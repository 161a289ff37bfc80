//! Shared helpers for the integration tests: random forests and direct
//! computations on raw lineage data.
#![allow(dead_code)]

use bargw_core::process::simulate_forest;
use bargw_core::stats::RngStream;
use bargw_core::tree::generation;
use bargw_core::{gaussian_moments, BarCoeffs, GwLaw, ObservedForest, RootLaw};

pub fn random_law(s: &mut RngStream) -> GwLaw {
    let mut draw = || {
        let w: Vec<f64> = (0..4).map(|k| if k == 0 { 1.5 + s.uniform() } else { 0.05 + s.uniform() }).collect();
        let t: f64 = w.iter().sum();
        [w[0] / t, w[1] / t, w[2] / t, 1.0 - (w[0] + w[1] + w[2]) / t]
    };
    let p0 = draw();
    let p1 = draw();
    GwLaw::new(p0, p1).unwrap()
}

pub fn random_forest(seed: u64, depth: u32) -> ObservedForest {
    let mut s = RngStream::from_seed(seed);
    let law = random_law(&mut s);
    let bar = BarCoeffs {
        a0: s.uniform() - 0.5,
        b0: 1.6 * s.uniform() - 0.8,
        a1: s.uniform() - 0.5,
        b1: 1.6 * s.uniform() - 0.8,
    };
    let noise = gaussian_moments(0.5 + s.uniform(), 0.5 + s.uniform(), 0.2 * (s.uniform() - 0.5)).unwrap();
    let root = RootLaw::Gaussian { mean: 0.0, sd: 1.0 };
    let m = 3 + (s.next_u64() % 6) as usize;
    simulate_forest(&law, &bar, &noise, &root, m, depth, seed ^ 0x5eed).unwrap()
}

/// `(mother value, daughter value)` pairs for each daughter type, mothers
/// in generations `0..n`.
pub fn regression_pairs(forest: &ObservedForest, n: u32) -> [Vec<(f64, f64)>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for tree in forest.trees() {
        for &k in tree.ids() {
            if generation(k) >= n {
                continue;
            }
            let x = tree.value(k).unwrap();
            for (i, d) in [2 * k, 2 * k + 1].into_iter().enumerate() {
                if let Some(y) = tree.value(d) {
                    out[i].push((x, y));
                }
            }
        }
    }
    out
}

pub fn loss(pairs: &[(f64, f64)], a: f64, b: f64) -> f64 {
    pairs.iter().map(|(x, y)| (y - a - b * x).powi(2)).sum()
}

/// Minimises the squared loss one coordinate at a time, each step exact
/// along its coordinate, until the iterates stop moving.
pub fn coordinate_descent(pairs: &[(f64, f64)]) -> (f64, f64) {
    let (mut a, mut b) = (0.0, 0.0);
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let n = pairs.len() as f64;
    for _ in 0..1_000_000 {
        let a_new = pairs.iter().map(|(x, y)| y - b * x).sum::<f64>() / n;
        let b_new = pairs.iter().map(|(x, y)| x * (y - a_new)).sum::<f64>() / sxx;
        let moved = (a_new - a).abs().max((b_new - b).abs());
        a = a_new;
        b = b_new;
        if moved < 1e-15 {
            break;
        }
    }
    (a, b)
}

/// Pattern counts of observed mothers in generations `1..n`, by mother
/// type, in the order `(1,1), (1,0), (0,1), (0,0)`.
pub fn pattern_counts(forest: &ObservedForest, n: u32) -> [[u64; 4]; 2] {
    let mut counts = [[0u64; 4]; 2];
    for tree in forest.trees() {
        for &k in tree.ids() {
            let g = generation(k);
            if g == 0 || g >= n {
                continue;
            }
            let pattern = match (tree.contains(2 * k), tree.contains(2 * k + 1)) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            counts[(k % 2) as usize][pattern] += 1;
        }
    }
    counts
}
