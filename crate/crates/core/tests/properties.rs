use bargw_core::io::{read_lineage_from, write_lineage_to};
use bargw_core::process::simulate_forest;
use bargw_core::tree::{generation, node_relations};
use bargw_core::{
    estimate_gw, gaussian_moments, BarCoeffs, CellType, ForestSummary, GwLaw, ObservedForest, ObservedTree, RootLaw,
};
use proptest::prelude::*;

fn forest(seed: u64, m: usize, depth: u32, p11: f64) -> ObservedForest {
    let q = (1.0 - p11) / 3.0;
    let law = GwLaw::symmetric([p11, q, q, q]).unwrap();
    let bar = BarCoeffs {
        a0: 0.3,
        b0: 0.4,
        a1: -0.2,
        b1: 0.6,
    };
    let noise = gaussian_moments(1.0, 0.7, 0.3).unwrap();
    let root = RootLaw::Gaussian { mean: 0.0, sd: 1.0 };
    simulate_forest(&law, &bar, &noise, &root, m, depth, seed).unwrap()
}

fn map_values(f: &ObservedForest, g: impl Fn(f64) -> f64) -> ObservedForest {
    let trees = f
        .trees()
        .iter()
        .map(|t| {
            let v = t.values().unwrap();
            ObservedTree::with_values(t.ids().iter().zip(v).map(|(&k, &x)| (k, g(x)))).unwrap()
        })
        .collect();
    ObservedForest::new(trees, f.depth()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn node_arithmetic(k in 1u64..(1u64 << 62)) {
        let r = node_relations(k).unwrap();
        prop_assert_eq!(r.children, (2 * k, 2 * k + 1));
        prop_assert_eq!(r.generation, generation(k));
        prop_assert!(1u64 << r.generation <= k && k < 1u64 << (r.generation + 1));
        prop_assert_eq!(r.cell_type, if k % 2 == 0 { CellType::Even } else { CellType::Odd });
        if k > 1 {
            prop_assert_eq!(r.parent, Some(k / 2));
        } else {
            prop_assert_eq!(r.parent, None);
        }
    }

    #[test]
    fn tree_order_does_not_matter(seed in any::<u64>(), shift in 1usize..6) {
        let f = forest(seed, 6, 5, 0.8);
        let mut trees = f.trees().to_vec();
        trees.rotate_left(shift);
        trees.swap(0, 1);
        let g = ObservedForest::new(trees, f.depth()).unwrap();
        let (a, b) = (ForestSummary::new(&f), ForestSummary::new(&g));
        for n in 2..=5 {
            prop_assert_eq!(a.counts(n).ok(), b.counts(n).ok());
            prop_assert_eq!(a.gw(n).ok(), b.gw(n).ok());
            prop_assert_eq!(a.theta(n).ok(), b.theta(n).ok());
            prop_assert_eq!(a.noise(n).ok(), b.noise(n).ok());
        }
    }

    #[test]
    fn pattern_estimates_ignore_values(seed in any::<u64>(), c in -5.0f64..5.0) {
        let f = forest(seed, 4, 5, 0.7);
        let shifted = map_values(&f, |x| c * x * x + 1.0);
        for n in 2..=5 {
            let a = estimate_gw(&f, n).ok();
            prop_assert_eq!(&a, &estimate_gw(&f.without_values(), n).ok());
            prop_assert_eq!(&a, &estimate_gw(&shifted, n).ok());
        }
    }

    #[test]
    fn scaling_values(seed in any::<u64>(), c in prop_oneof![-4.0f64..-0.25, 0.25f64..4.0]) {
        let f = forest(seed, 5, 5, 0.85);
        let scaled = map_values(&f, |x| c * x);
        let (a, b) = (ForestSummary::new(&f), ForestSummary::new(&scaled));
        let (Ok(ta), Ok(tb)) = (a.theta(5), b.theta(5)) else { return Ok(()) };
        for i in 0..2 {
            prop_assert!(close(tb.theta[2 * i], c * ta.theta[2 * i], 1e-9));
            prop_assert!(close(tb.theta[2 * i + 1], ta.theta[2 * i + 1], 1e-9));
        }
        let (Ok(na), Ok(nb)) = (a.noise(5), b.noise(5)) else { return Ok(()) };
        let c2 = c * c;
        prop_assert!(close(nb.sigma2[0], c2 * na.sigma2[0], 1e-8));
        prop_assert!(close(nb.sigma2[1], c2 * na.sigma2[1], 1e-8));
        prop_assert!(close(nb.rho, c2 * na.rho, 1e-8) || (nb.rho - c2 * na.rho).abs() < 1e-12 * c2);
        prop_assert!(close(nb.tau4[0], c2 * c2 * na.tau4[0], 1e-8));
    }

    #[test]
    fn counts_are_consistent(seed in any::<u64>(), p11 in 0.3f64..1.0) {
        let f = forest(seed, 3, 6, p11);
        let s = ForestSummary::new(&f);
        let mut total = 0;
        for n in 0..=6 {
            let c = s.counts(n).unwrap();
            total += c.g_star;
            prop_assert_eq!(c.t_star, total);
            prop_assert!(c.t_star_01 <= c.t_star_0.min(c.t_star_1));
            prop_assert_eq!(c.t_star_0 + c.t_star_1, c.t_star - f.m() as u64);
        }
    }

    #[test]
    fn lineage_round_trip(seed in any::<u64>(), skeleton in any::<bool>()) {
        let mut f = forest(seed, 4, 5, 0.75);
        if skeleton {
            f = f.without_values();
        }
        let mut buf = Vec::new();
        write_lineage_to(&f, &mut buf).unwrap();
        let back = read_lineage_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.trees(), f.trees());
        let mut again = Vec::new();
        write_lineage_to(&back, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }
}
