//! Replicated simulation studies: rejection rates, interval coverage and
//! error-decay slopes over the registry parameter sets.
//!
//! Every replication draws from a stream derived from the master seed, the
//! set id, the replication index and the attempt number, and outcomes are
//! reduced in replication order, so results do not depend on the number of
//! worker threads.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{bar_covariance, gw_covariance, gw_variance};
use crate::error::{Error, Result};
use crate::estimate::ForestSummary;
use crate::hypothesis::{
    ci_bar, ci_gw, test_bar_coeffs, test_fixed_point, test_gw_mean, test_gw_vector, test_variance, StdErrorRule,
    TestKind,
};
use crate::process::{descendants_matrix, dominant_eigen, simulate_forest_with_stream};
use crate::registry::{param_set, ParamSet};
use crate::stats::{ols_slope, RngStream};
use crate::tree::MAX_DEPTH;

pub const SCHEMA_VERSION: u32 = 1;

/// Mean errors at or below this multiple of `max(|theta|, 1)` make the slope
/// fit meaningless.
pub const DEGENERATE_ERROR: f64 = 1e-13;

/// Parameters that are checked for interval coverage.
pub const COVERAGE_PARAMS: [&str; 5] = ["a0", "b0", "a1", "b1", "pi"];

fn default_level() -> f64 {
    0.05
}

fn default_tests() -> Vec<TestKind> {
    TestKind::ALL.to_vec()
}

fn default_max_resamples() -> u32 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema_version: u32,
    pub set_ids: Vec<u32>,
    /// Trees per replication.
    pub m: usize,
    pub depth: u32,
    pub replications: usize,
    /// Test level, and one minus the interval level.
    #[serde(default = "default_level")]
    pub level: f64,
    pub seed: u64,
    #[serde(default = "default_tests")]
    pub tests: Vec<TestKind>,
    /// Inclusive range of generations evaluated; defaults to `[2, depth]`.
    #[serde(default)]
    pub generations: Option<[u32; 2]>,
    /// Inclusive window of the slope fit; defaults to `[8, depth]`.
    #[serde(default)]
    pub rate_window: Option<[u32; 2]>,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_max_resamples")]
    pub max_resamples: u32,
    #[serde(default)]
    pub ci_rule: StdErrorRule,
}

impl StudyConfig {
    pub fn new(set_ids: Vec<u32>, m: usize, depth: u32, replications: usize, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            set_ids,
            m,
            depth,
            replications,
            level: default_level(),
            seed,
            tests: default_tests(),
            generations: None,
            rate_window: None,
            workers: None,
            max_resamples: default_max_resamples(),
            ci_rule: StdErrorRule::default(),
        }
    }

    pub fn generation_range(&self) -> [u32; 2] {
        self.generations.unwrap_or([2, self.depth])
    }

    /// Slope window clipped to the evaluated generations.
    pub fn window(&self) -> [u32; 2] {
        let [g0, g1] = self.generation_range();
        let [w0, w1] = self.rate_window.unwrap_or([8, self.depth]);
        [w0.max(g0), w1.min(g1)]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.set_ids.is_empty() {
            return bad("set_ids is empty".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level {} is not in (0, 1)", self.level));
        }
        if self.depth < 2 || self.depth > MAX_DEPTH {
            return bad(format!("depth {} is not in 2..={MAX_DEPTH}", self.depth));
        }
        let [g0, g1] = self.generation_range();
        if g0 < 2 || g1 > self.depth || g0 > g1 {
            return bad(format!("generations [{g0}, {g1}] must lie within [2, {}]", self.depth));
        }
        if let Some([w0, w1]) = self.rate_window {
            if w0 < 2 || w1 > self.depth || w0 > w1 {
                return bad(format!("rate_window [{w0}, {w1}] must lie within [2, {}]", self.depth));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if self.tests.is_empty() {
            return bad("tests is empty".into());
        }
        Ok(())
    }
}

/// Tallies for one test at one generation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestTally {
    pub rejections: usize,
    pub evaluated: usize,
    /// Replications where the statistic could not be computed.
    pub failures: usize,
}

impl TestTally {
    pub fn rate(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| self.rejections as f64 / self.evaluated as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageTally {
    pub covered: usize,
    pub evaluated: usize,
}

impl CoverageTally {
    pub fn rate(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| self.covered as f64 / self.evaluated as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub set: u32,
    pub n: u32,
    pub pi: f64,
    pub tests: BTreeMap<TestKind, TestTally>,
    /// Mean of `|theta_hat - theta|` over replications where it exists.
    pub mean_error: Option<f64>,
    pub mean_relative_error: Option<f64>,
    pub error_count: usize,
    pub coverage: BTreeMap<String, CoverageTally>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set: u32,
    pub pi: f64,
    pub resamples: u64,
    pub window: [u32; 2],
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// `-ln(pi) / 2`
    pub reference_slope: f64,
    /// Why the slope is missing, when it is.
    pub slope_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
    pub sets: Vec<SetSummary>,
}

impl StudyResult {
    pub fn row(&self, set: u32, n: u32) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.set == set && r.n == n)
    }

    pub fn set_summary(&self, set: u32) -> Option<&SetSummary> {
        self.sets.iter().find(|s| s.set == set)
    }

    pub fn rate(&self, set: u32, n: u32, test: TestKind) -> Option<f64> {
        self.row(set, n)?.tests.get(&test)?.rate()
    }
}

#[derive(Clone, Debug, Default)]
struct GenerationOutcome {
    /// `Some(rejected)` or `None` when the test failed.
    tests: Vec<Option<bool>>,
    error: Option<f64>,
    covered: [Option<bool>; 5],
}

struct Replication {
    attempts: u32,
    per_n: Vec<GenerationOutcome>,
}

fn evaluate(
    set: &ParamSet,
    true_pi: f64,
    cfg: &ParamsView<'_>,
    summary: &ForestSummary,
    n: u32,
) -> GenerationOutcome {
    let eps = cfg.level;
    let truth = set.bar.as_array();
    let mut out = GenerationOutcome {
        tests: Vec::with_capacity(cfg.tests.len()),
        ..Default::default()
    };
    let gw = summary.gw(n);
    let theta = summary.theta(n);
    let noise = summary.noise(n);
    let counts = summary.counts(n);
    if let Ok(t) = &theta {
        let e = t.theta.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        out.error = Some(e);
    }
    let gw_var = gw.as_ref().ok().map(gw_variance);
    let bar_cov = match (&theta, &noise, &gw, &counts) {
        (Ok(t), Ok(z), Ok(g), Ok(c)) => Some(bar_covariance(t, z, g, c)),
        _ => None,
    };
    for &kind in cfg.tests {
        let res = match kind {
            TestKind::GwMean | TestKind::GwVector => match (&gw, &gw_var) {
                (Ok(g), Some(Ok(v))) => {
                    if kind == TestKind::GwMean {
                        test_gw_mean(g, v)
                    } else {
                        test_gw_vector(g, v)
                    }
                }
                _ => Err(Error::ForestExtinct),
            },
            TestKind::BarCoeffs | TestKind::FixedPoint => match (&theta, &bar_cov) {
                (Ok(t), Some(Ok(c))) => {
                    if kind == TestKind::BarCoeffs {
                        test_bar_coeffs(t, c)
                    } else {
                        test_fixed_point(t, c)
                    }
                }
                _ => Err(Error::ForestExtinct),
            },
            TestKind::Variance => match (&noise, &bar_cov, &counts) {
                (Ok(z), Some(Ok(c)), Ok(k)) => test_variance(z, c, k),
                _ => Err(Error::ForestExtinct),
            },
        };
        out.tests.push(res.ok().map(|r| r.rejects(cfg.level)));
    }
    if let (Ok(t), Ok(z), Some(Ok(c)), Ok(k)) = (&theta, &noise, &bar_cov, &counts) {
        if let Ok(cis) = ci_bar(t, z, c, k, eps, cfg.rule) {
            for (k, ci) in cis[..4].iter().enumerate() {
                out.covered[k] = Some(ci.contains(truth[k]));
            }
        }
    }
    if let Ok(g) = &gw {
        if let Ok(cov) = gw_covariance(g) {
            if let Ok(cis) = ci_gw(g, &cov, eps, cfg.rule) {
                out.covered[4] = Some(cis[8].contains(true_pi));
            }
        }
    }
    out
}

struct ParamsView<'a> {
    level: f64,
    tests: &'a [TestKind],
    rule: StdErrorRule,
}

fn run_replication(set: &ParamSet, true_pi: f64, cfg: &StudyConfig, rep: usize) -> Result<Replication> {
    let root = set.root_law()?;
    let base = RngStream::from_seed(cfg.seed).derive(u64::from(set.id)).derive(rep as u64);
    let [g0, g1] = cfg.generation_range();
    let view = ParamsView {
        level: cfg.level,
        tests: &cfg.tests,
        rule: cfg.ci_rule,
    };
    for attempt in 0..=cfg.max_resamples {
        let stream = base.derive(u64::from(attempt));
        let forest = simulate_forest_with_stream(&set.law, &set.bar, &set.noise, &root, cfg.m, cfg.depth, &stream)?;
        let summary = ForestSummary::new(&forest);
        if summary.counts(g0)?.g_star == 0 {
            continue;
        }
        let per_n = (g0..=g1).map(|n| evaluate(set, true_pi, &view, &summary, n)).collect();
        return Ok(Replication { attempts: attempt, per_n });
    }
    Err(Error::Config(format!(
        "set {}: replication {rep} went extinct before generation {g0} in {} attempts",
        set.id,
        cfg.max_resamples + 1
    )))
}

/// Runs a study over registry sets.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let sets = cfg.set_ids.iter().map(|&id| param_set(id)).collect::<Result<Vec<_>>>()?;
    run_study_with_sets(cfg, &sets)
}

/// Runs a study over caller-supplied parameter sets; `cfg.set_ids` is
/// ignored.
pub fn run_study_with_sets(cfg: &StudyConfig, sets: &[ParamSet]) -> Result<StudyResult> {
    let mut checked = cfg.clone();
    checked.set_ids = sets.iter().map(|s| s.id).collect();
    checked.validate()?;
    let cfg = checked;
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let [g0, g1] = cfg.generation_range();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for set in sets {
        let true_pi = dominant_eigen(&descendants_matrix(&set.law))?.pi;
        let reps: Vec<Replication> = pool.install(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| run_replication(set, true_pi, &cfg, r))
                .collect::<Result<Vec<_>>>()
        })?;
        let resamples: u64 = reps.iter().map(|r| u64::from(r.attempts)).sum();
        let theta_norm = set.bar.as_array().iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut set_rows = Vec::new();
        for (k, n) in (g0..=g1).enumerate() {
            let mut tests: BTreeMap<TestKind, TestTally> = BTreeMap::new();
            let mut coverage: BTreeMap<String, CoverageTally> =
                COVERAGE_PARAMS.iter().map(|p| (p.to_string(), CoverageTally::default())).collect();
            let mut err_sum = 0.0;
            let mut err_count = 0usize;
            for rep in &reps {
                let o = &rep.per_n[k];
                for (kind, res) in cfg.tests.iter().zip(&o.tests) {
                    let t = tests.entry(*kind).or_default();
                    match res {
                        Some(rej) => {
                            t.evaluated += 1;
                            t.rejections += usize::from(*rej);
                        }
                        None => t.failures += 1,
                    }
                }
                for (name, c) in COVERAGE_PARAMS.iter().zip(o.covered) {
                    if let Some(c) = c {
                        let slot = coverage.get_mut(*name).expect("coverage key");
                        slot.evaluated += 1;
                        slot.covered += usize::from(c);
                    }
                }
                if let Some(e) = o.error {
                    err_sum += e;
                    err_count += 1;
                }
            }
            let mean_error = (err_count > 0).then(|| err_sum / err_count as f64);
            set_rows.push(StudyRow {
                set: set.id,
                n,
                pi: set.pi,
                tests,
                mean_error,
                mean_relative_error: mean_error.map(|e| e / theta_norm),
                error_count: err_count,
                coverage,
            });
        }
        summaries.push(fit_slope(set, &cfg, &set_rows, resamples, theta_norm));
        rows.extend(set_rows);
    }
    Ok(StudyResult {
        config: cfg,
        rows,
        sets: summaries,
    })
}

fn fit_slope(set: &ParamSet, cfg: &StudyConfig, rows: &[StudyRow], resamples: u64, theta_norm: f64) -> SetSummary {
    let window = cfg.window();
    let mut summary = SetSummary {
        set: set.id,
        pi: set.pi,
        resamples,
        window,
        slope: None,
        intercept: None,
        reference_slope: -0.5 * set.pi.ln(),
        slope_note: None,
    };
    if window[0] >= window[1] {
        summary.slope_note = Some("window has fewer than two generations".into());
        return summary;
    }
    let floor = DEGENERATE_ERROR * theta_norm.max(1.0);
    let mut points = Vec::new();
    for r in rows.iter().filter(|r| (window[0]..=window[1]).contains(&r.n)) {
        match r.mean_error {
            Some(e) if e.is_finite() && e > floor => points.push((f64::from(r.n), e.ln())),
            _ => {
                summary.slope_note = Some(format!("degenerate mean error at generation {}", r.n));
                return summary;
            }
        }
    }
    match ols_slope(&points) {
        Ok((s, i)) => {
            summary.slope = Some(s);
            summary.intercept = Some(i);
        }
        Err(e) => summary.slope_note = Some(e.to_string()),
    }
    summary
}

/// Rejection-rate study.
pub fn run_power_study(cfg: &StudyConfig) -> Result<StudyResult> {
    run_study(cfg)
}

/// Error-decay study; the slope window must hold at least two generations.
pub fn run_rate_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let [w0, w1] = cfg.window();
    if w0 >= w1 {
        return Err(Error::Config(format!("slope window [{w0}, {w1}] has fewer than two generations")));
    }
    run_study(cfg)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One CSV row per set and generation.
pub fn write_study_csv<W: Write>(result: &StudyResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["set".to_string(), "n".into(), "pi".into()];
    for t in &result.config.tests {
        for suffix in ["rate", "rejections", "evaluated", "failures"] {
            header.push(format!("{}_{suffix}", t.name()));
        }
    }
    header.extend(["mean_error".into(), "mean_relative_error".into(), "error_count".into()]);
    for p in COVERAGE_PARAMS {
        header.push(format!("coverage_{p}"));
        header.push(format!("coverage_{p}_evaluated"));
    }
    w.write_record(&header)?;
    for r in &result.rows {
        let mut rec = vec![r.set.to_string(), r.n.to_string(), r.pi.to_string()];
        for t in &result.config.tests {
            let tally = r.tests.get(t).cloned().unwrap_or_default();
            rec.push(opt(tally.rate()));
            rec.push(tally.rejections.to_string());
            rec.push(tally.evaluated.to_string());
            rec.push(tally.failures.to_string());
        }
        rec.push(opt(r.mean_error));
        rec.push(opt(r.mean_relative_error));
        rec.push(r.error_count.to_string());
        for p in COVERAGE_PARAMS {
            let c = r.coverage.get(p).cloned().unwrap_or_default();
            rec.push(opt(c.rate()));
            rec.push(c.evaluated.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
