//! Lineage CSV files, parameter and study configuration files, and the
//! estimation report.
//!
//! A lineage file has the header `tree,node,value` and one row per observed
//! cell. Tree ids run from 1 to m, node is the heap index, and value is
//! either present on every row or empty on every row (an observation
//! skeleton).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{bar_covariance, gw_covariance, BarCovariance, GwCovariance};
use crate::error::{Error, Result};
use crate::estimate::{ForestSummary, GwEstimate, NoiseEstimate, ThetaEstimate};
use crate::hypothesis::{
    ci_bar, ci_gw, test_bar_coeffs, test_fixed_point, test_gw_mean, test_gw_vector, test_variance,
    ConfidenceInterval, StdErrorRule, TestKind, WaldTestResult,
};
use crate::asymptotics::gw_variance;
use crate::montecarlo::{write_study_csv, StudyConfig, StudyResult, SetSummary};
use crate::process::{gaussian_moments, BarCoeffs, GwLaw, NoiseMoments, RootLaw};
use crate::registry::param_set;
use crate::tree::{generation, ForestCounts, NodeId, ObservedForest, ObservedTree};

pub const LINEAGE_HEADER: [&str; 3] = ["tree", "node", "value"];
pub const PARAMS_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn format_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Format { line, msg: msg.into() }
}

pub fn read_lineage(path: impl AsRef<Path>) -> Result<ObservedForest> {
    read_lineage_from(BufReader::new(File::open(path)?))
}

/// Parses a lineage file. Errors name the 1-based line of the offending
/// row.
pub fn read_lineage_from<R: Read>(reader: R) -> Result<ObservedForest> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| format_err(1, e.to_string()))?,
        None => return Err(format_err(1, "empty file")),
    };
    if header.iter().collect::<Vec<_>>() != LINEAGE_HEADER {
        return Err(format_err(1, format!("header must be `{}`", LINEAGE_HEADER.join(","))));
    }

    // tree id -> node -> (value, line)
    let mut trees: BTreeMap<u64, BTreeMap<NodeId, (Option<f64>, u64)>> = BTreeMap::new();
    let mut with_values: Option<bool> = None;
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            format_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(format_err(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let tree: u64 = rec[0]
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| format_err(line, format!("tree id `{}` is not a positive integer", &rec[0])))?;
        let node: NodeId = rec[1]
            .parse()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| format_err(line, format!("node `{}` is not a positive integer", &rec[1])))?;
        if generation(node) > crate::tree::MAX_DEPTH {
            return Err(format_err(line, format!("node {node} is deeper than the supported maximum")));
        }
        let value = if rec[2].is_empty() {
            None
        } else {
            let v: f64 = rec[2]
                .parse()
                .map_err(|_| format_err(line, format!("value `{}` is not a number", &rec[2])))?;
            if !v.is_finite() {
                return Err(format_err(line, format!("value `{}` is not finite", &rec[2])));
            }
            Some(v)
        };
        match with_values {
            None => with_values = Some(value.is_some()),
            Some(w) if w != value.is_some() => {
                return Err(format_err(line, "values must be given on every row or on none"));
            }
            _ => {}
        }
        let cells = trees.entry(tree).or_default();
        if let Some(&(_, first)) = cells.get(&node) {
            return Err(format_err(
                line,
                format!("tree {tree}: node {node} already appears on line {first}"),
            ));
        }
        cells.insert(node, (value, line));
    }
    if trees.is_empty() {
        return Err(format_err(1, "no data rows"));
    }

    let mut out = Vec::with_capacity(trees.len());
    for (expected, (&tree, cells)) in (1u64..).zip(&trees) {
        if tree != expected {
            return Err(format_err(0, format!("tree ids must run from 1 without gaps; tree {expected} is missing")));
        }
        if !cells.contains_key(&1) {
            let line = cells.values().map(|c| c.1).min().unwrap_or(0);
            return Err(format_err(line, format!("tree {tree} has no root row (node 1)")));
        }
        for (&k, &(_, line)) in cells {
            if k > 1 && !cells.contains_key(&(k / 2)) {
                return Err(format_err(
                    line,
                    format!("tree {tree}: node {k} is observed but its parent {} is not", k / 2),
                ));
            }
        }
        let tree = if with_values == Some(true) {
            ObservedTree::with_values(cells.iter().map(|(&k, &(v, _))| (k, v.expect("checked"))))?
        } else {
            ObservedTree::skeleton(cells.keys().copied())?
        };
        out.push(tree);
    }
    ObservedForest::from_trees(out)
}

/// Writes one row per observed cell, trees in order and nodes in heap
/// order. Values use the shortest representation that reads back exactly.
pub fn write_lineage_to<W: Write>(forest: &ObservedForest, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(LINEAGE_HEADER)?;
    for (j, tree) in forest.trees().iter().enumerate() {
        let tree_id = (j + 1).to_string();
        for (idx, k) in tree.ids().iter().enumerate() {
            let value = tree.values().map(|v| v[idx].to_string()).unwrap_or_default();
            w.write_record([tree_id.as_str(), &k.to_string(), &value])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_lineage(forest: &ObservedForest, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, |w| write_lineage_to(forest, w))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed write never leaves a partial file.
pub fn write_atomic<F>(path: impl AsRef<Path>, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut buf)?;
        buf.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Noise given by its covariance; higher moments are Gaussian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianNoise {
    pub sigma2_0: f64,
    pub sigma2_1: f64,
    pub rho: f64,
}

/// Simulation parameters. `set` picks a registry set; any of `law`, `bar`,
/// `noise` and `root` given alongside it override that part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    pub schema_version: u32,
    #[serde(default)]
    pub set: Option<u32>,
    #[serde(default)]
    pub law: Option<GwLaw>,
    #[serde(default)]
    pub bar: Option<BarCoeffs>,
    #[serde(default)]
    pub noise: Option<GaussianNoise>,
    #[serde(default)]
    pub root: Option<RootLaw>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedParams {
    pub law: GwLaw,
    pub bar: BarCoeffs,
    pub noise: NoiseMoments,
    pub root: RootLaw,
}

impl SimulationParams {
    pub fn resolve(&self) -> Result<ResolvedParams> {
        if self.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", self.schema_version)));
        }
        let base = self.set.map(param_set).transpose()?;
        let missing = |what: &str| Error::Config(format!("`{what}` is required when no `set` is given"));
        let law = match (self.law, &base) {
            (Some(l), _) => l,
            (None, Some(b)) => b.law,
            (None, None) => return Err(missing("law")),
        };
        law.validate()?;
        let bar = match (self.bar, &base) {
            (Some(b), _) => b,
            (None, Some(b)) => b.bar,
            (None, None) => return Err(missing("bar")),
        };
        let noise = match (self.noise, &base) {
            (Some(n), _) => gaussian_moments(n.sigma2_0, n.sigma2_1, n.rho)?,
            (None, Some(b)) => b.noise,
            (None, None) => return Err(missing("noise")),
        };
        let root = match (self.root, &base) {
            (Some(r), _) => r,
            (None, Some(b)) if self.bar.is_none() && self.noise.is_none() => b.root_law()?,
            _ => RootLaw::stationary(&bar, &noise)?,
        };
        Ok(ResolvedParams { law, bar, noise, root })
    }
}

pub fn read_params(path: impl AsRef<Path>) -> Result<SimulationParams> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn read_study_config(path: impl AsRef<Path>) -> Result<StudyConfig> {
    let cfg: StudyConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Per-set part of a study result, for the summary file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub config: StudyConfig,
    pub sets: Vec<SetSummary>,
}

pub fn write_study(result: &StudyResult, csv_path: impl AsRef<Path>, summary_path: Option<&Path>) -> Result<()> {
    write_atomic(csv_path, |w| write_study_csv(result, w))?;
    if let Some(p) = summary_path {
        let summary = StudySummary {
            config: result.config.clone(),
            sets: result.sets.clone(),
        };
        write_json(&summary, p)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub schema_version: u32,
    pub tool_version: String,
    pub n: u32,
    pub m: usize,
    pub depth: u32,
    pub level: f64,
    pub ci_rule: StdErrorRule,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; left out of deterministic reports.
    #[serde(default)]
    pub generated_at: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarSection {
    pub theta: ThetaEstimate,
    pub noise: NoiseEstimate,
    pub fixed_points: [f64; 2],
    pub covariance: BarCovariance,
}

/// Outcome of one test: either a result or the reason it is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub which: TestKind,
    #[serde(default)]
    pub result: Option<WaldTestResult>,
    #[serde(default)]
    pub reject: Option<bool>,
    #[serde(default)]
    pub error: Option<String>,
    /// Whether `error` comes from statistics undefined on valid data.
    #[serde(default)]
    pub degenerate: bool,
}

/// Everything estimated from a forest at one generation index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub metadata: ReportMetadata,
    pub counts: ForestCounts,
    pub gw: GwEstimate,
    pub gw_covariance: GwCovariance,
    /// Absent for observation skeletons.
    pub bar: Option<BarSection>,
    pub intervals: Vec<ConfidenceInterval>,
    pub tests: Vec<TestOutcome>,
}

impl EstimationReport {
    pub fn test(&self, which: TestKind) -> Option<&TestOutcome> {
        self.tests.iter().find(|t| t.which == which)
    }
}

fn outcome(which: TestKind, level: f64, res: Result<WaldTestResult>) -> TestOutcome {
    match res {
        Ok(r) => TestOutcome {
            which,
            reject: Some(r.rejects(level)),
            result: Some(r),
            error: None,
            degenerate: false,
        },
        Err(e) => TestOutcome {
            which,
            result: None,
            reject: None,
            degenerate: e.is_degenerate(),
            error: Some(e.to_string()),
        },
    }
}

/// Runs the given tests at generation `n`.
pub fn run_tests(forest: &ObservedForest, n: u32, level: f64, which: &[TestKind]) -> Result<Vec<TestOutcome>> {
    forest.check_generation(n)?;
    let summary = ForestSummary::new(forest);
    Ok(tests_from_summary(&summary, n, level, which))
}

fn tests_from_summary(summary: &ForestSummary, n: u32, level: f64, which: &[TestKind]) -> Vec<TestOutcome> {
    let gw = summary.gw(n);
    let bar = || -> Result<(ThetaEstimate, NoiseEstimate, BarCovariance, ForestCounts)> {
        if !summary.has_values() {
            return Err(Error::NoValues);
        }
        let theta = summary.theta(n)?;
        let noise = summary.noise(n)?;
        let counts = summary.counts(n)?;
        let cov = bar_covariance(&theta, &noise, gw.as_ref().map_err(clone_err)?, &counts)?;
        Ok((theta, noise, cov, counts))
    };
    let bar = if which.iter().any(|w| w.needs_values()) { Some(bar()) } else { None };
    which
        .iter()
        .map(|&kind| {
            let res = match kind {
                TestKind::GwMean | TestKind::GwVector => gw.as_ref().map_err(clone_err).and_then(|g| {
                    let v = gw_variance(g)?;
                    if kind == TestKind::GwMean {
                        test_gw_mean(g, &v)
                    } else {
                        test_gw_vector(g, &v)
                    }
                }),
                _ => match bar.as_ref().expect("computed when needed") {
                    Err(e) => Err(clone_err(e)),
                    Ok((theta, noise, cov, counts)) => match kind {
                        TestKind::BarCoeffs => test_bar_coeffs(theta, cov),
                        TestKind::FixedPoint => test_fixed_point(theta, cov),
                        _ => test_variance(noise, cov, counts),
                    },
                },
            };
            outcome(kind, level, res)
        })
        .collect()
}

// Errors are not `Clone` because of the wrapped I/O errors; estimation
// never produces those, so the message is enough.
fn clone_err(e: &Error) -> Error {
    match e {
        Error::ForestExtinct => Error::ForestExtinct,
        Error::NoValues => Error::NoValues,
        Error::RankDeficient(t) => Error::RankDeficient(*t),
        Error::InsufficientType(t) => Error::InsufficientType(*t),
        Error::InsufficientPairs => Error::InsufficientPairs,
        Error::DegenerateDiscriminant => Error::DegenerateDiscriminant,
        Error::DegenerateVariance(s) => Error::DegenerateVariance(s),
        Error::DegenerateEigenvector => Error::DegenerateEigenvector,
        Error::NotPsd => Error::NotPsd,
        Error::Singular => Error::Singular,
        Error::OutOfRange { requested, depth } => Error::OutOfRange {
            requested: *requested,
            depth: *depth,
        },
        other => Error::InvalidArgument(other.to_string()),
    }
}

/// Full estimation at generation `n`: point estimates, covariances,
/// intervals at level `1 - level`, and all five tests at `level`.
///
/// Fails when the reproduction-law part is undefined, or when the forest
/// carries values and the autoregressive part is undefined.
pub fn analyze(forest: &ObservedForest, n: u32, level: f64, rule: StdErrorRule) -> Result<EstimationReport> {
    forest.check_generation(n)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} is not in (0, 1)")));
    }
    let summary = ForestSummary::new(forest);
    let counts = summary.counts(n)?;
    let gw = summary.gw(n)?;
    let gw_cov = gw_covariance(&gw)?;
    let mut intervals = ci_gw(&gw, &gw_cov, level, rule)?;
    let bar = if summary.has_values() {
        let theta = summary.theta(n)?;
        let noise = summary.noise(n)?;
        let covariance = bar_covariance(&theta, &noise, &gw, &counts)?;
        intervals.extend(ci_bar(&theta, &noise, &covariance, &counts, level, rule)?);
        let t = theta.theta;
        Some(BarSection {
            fixed_points: [t[0] / (1.0 - t[1]), t[2] / (1.0 - t[3])],
            theta,
            noise,
            covariance,
        })
    } else {
        None
    };
    let which: Vec<TestKind> = TestKind::ALL.iter().copied().filter(|k| bar.is_some() || !k.needs_values()).collect();
    let tests = tests_from_summary(&summary, n, level, &which);
    Ok(EstimationReport {
        metadata: ReportMetadata {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            n,
            m: forest.m(),
            depth: forest.depth(),
            level,
            ci_rule: rule,
            seed: None,
            generated_at: None,
        },
        counts,
        gw,
        gw_covariance: gw_cov,
        bar,
        intervals,
        tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<ObservedForest> {
        read_lineage_from(s.as_bytes())
    }

    #[test]
    fn three_rows() {
        let f = read("tree,node,value\n1,1,0.5\n1,2,0.25\n1,3,0.75\n").unwrap();
        assert_eq!(f.m(), 1);
        assert_eq!(f.depth(), 1);
        assert_eq!(f.total_cells(), 3);
        assert_eq!(f.trees()[0].value(3), Some(0.75));
    }

    #[test]
    fn orphan_names_its_line() {
        let err = read("tree,node,value\n1,1,0\n1,3,0\n1,5,0\n").unwrap_err();
        match err {
            Error::Format { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("node 5"), "{msg}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let cases = [
            ("tree,node\n1,1\n", 1),
            ("tree,node,value\n1,1,0\n1,1,0\n", 3),
            ("tree,node,value\n1,1,x\n", 2),
            ("tree,node,value\n1,1,0\n1,2,\n", 3),
            ("tree,node,value\n1,0,0\n", 2),
            ("tree,node,value\n0,1,0\n", 2),
            ("tree,node,value\n1,2,0\n", 2),
            ("tree,node,value\n1,1,inf\n", 2),
        ];
        for (text, want) in cases {
            match read(text) {
                Err(Error::Format { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(read("tree,node,value\n2,1,0\n"), Err(Error::Format { .. })));
    }

    #[test]
    fn skeleton_round_trip() {
        let text = "tree,node,value\n1,1,\n1,3,\n2,1,\n";
        let f = read(text).unwrap();
        assert!(!f.has_values());
        let mut buf = Vec::new();
        write_lineage_to(&f, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn params_resolution() {
        let p: SimulationParams = serde_json::from_str(r#"{"schema_version":1,"set":18}"#).unwrap();
        let r = p.resolve().unwrap();
        assert_eq!(r.law, param_set(18).unwrap().law);
        let p: SimulationParams = serde_json::from_str(r#"{"schema_version":1,"bar":{"a0":0,"b0":0.5,"a1":0,"b1":0.5}}"#).unwrap();
        assert!(matches!(p.resolve(), Err(Error::Config(_))));
        let p: SimulationParams = serde_json::from_str(r#"{"schema_version":2,"set":1}"#).unwrap();
        assert!(p.resolve().is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let set = param_set(16).unwrap();
        let root = set.root_law().unwrap();
        let forest = crate::process::simulate_forest(&set.law, &set.bar, &set.noise, &root, 30, 8, 2).unwrap();
        let report = analyze(&forest, 8, 0.05, StdErrorRule::Marginal).unwrap();
        assert_eq!(report.intervals.len(), 16);
        assert_eq!(report.tests.len(), 5);
        let text = serde_json::to_string(&report).unwrap();
        let back: EstimationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        let skeleton = analyze(&forest.without_values(), 8, 0.05, StdErrorRule::Marginal).unwrap();
        assert!(skeleton.bar.is_none());
        assert_eq!(skeleton.intervals.len(), 9);
        assert_eq!(skeleton.tests.len(), 2);
    }
}
