use bargw_core::montecarlo::StudyConfig;
use bargw_core::{
    analyze, descendants_matrix, dominant_eigen, param_set, registry, run_power_study, simulate_forest, ForestSummary,
    StdErrorRule,
};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn eigen(c: &mut Criterion) {
    let sets = registry();
    c.bench_function("eigen/19 sets", |b| {
        b.iter(|| {
            for s in &sets {
                black_box(dominant_eigen(&descendants_matrix(black_box(&s.law))).unwrap());
            }
        })
    });
}

fn simulate(c: &mut Criterion) {
    let set = param_set(11).unwrap();
    let root = set.root_law().unwrap();
    let mut g = c.benchmark_group("simulate");
    for depth in [8u32, 11] {
        g.bench_with_input(BenchmarkId::new("set 11, m=20", depth), &depth, |b, &d| {
            b.iter(|| simulate_forest(&set.law, &set.bar, &set.noise, &root, 20, d, 7).unwrap())
        });
    }
    g.finish();
}

fn estimate(c: &mut Criterion) {
    let set = param_set(11).unwrap();
    let root = set.root_law().unwrap();
    let forest = simulate_forest(&set.law, &set.bar, &set.noise, &root, 20, 11, 7).unwrap();
    c.bench_function("summary/set 11, m=20, depth 11", |b| b.iter(|| ForestSummary::new(black_box(&forest))));
    c.bench_function("analyze/set 11, m=20, n=11", |b| {
        b.iter(|| analyze(black_box(&forest), 11, 0.05, StdErrorRule::Marginal).unwrap())
    });
}

fn study(c: &mut Criterion) {
    let mut cfg = StudyConfig::new(vec![14], 20, 8, 50, 3);
    cfg.generations = Some([5, 8]);
    let mut g = c.benchmark_group("study");
    g.sample_size(10);
    g.bench_function("set 14, 50 reps, n=5..8", |b| b.iter(|| run_power_study(&cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, eigen, simulate, estimate, study);
criterion_main!(benches);
