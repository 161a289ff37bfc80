//! Confidence intervals and Wald symmetry tests.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{BarCovariance, GwCovariance, GwVariance, Mat4};
use crate::error::{Error, Result};
use crate::estimate::{GwEstimate, NoiseEstimate, ThetaEstimate};
use crate::linalg::{null_space_norm, pinv_quad_form, quad_form, quad_form_inverse, symmetric_sqrt};
use crate::stats::{chi2_survival, normal_quantile};
use crate::tree::ForestCounts;

/// Relative eigenvalue cut-off for the reproduction-vector test.
pub const PINV_TOL: f64 = 1e-10;

/// Distance of a slope estimate from 1 below which fixed points are refused.
pub const FIXED_POINT_GUARD: f64 = 1e-9;

/// How a standard error is read from a covariance matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdErrorRule {
    /// `sqrt(M_ii)`, the marginal standard deviation.
    #[default]
    Marginal,
    /// `(M^{1/2})_ii`, the diagonal of the symmetric square root.
    MatrixSqrtDiagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub parameter: String,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    fn new(parameter: impl Into<String>, estimate: f64, half: f64, level: f64) -> Self {
        Self {
            parameter: parameter.into(),
            estimate,
            lo: estimate - half,
            hi: estimate + half,
            level,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

fn quantile_for(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    if eps == 1.0 {
        return Ok(0.0);
    }
    normal_quantile(1.0 - eps / 2.0)
}

fn std_errors<const N: usize>(m: &[[f64; N]; N], rule: StdErrorRule, what: &'static str) -> Result<[f64; N]> {
    match rule {
        StdErrorRule::Marginal => {
            let mut out = [0.0; N];
            for i in 0..N {
                if !(m[i][i] >= 0.0) {
                    return Err(Error::DegenerateVariance(what));
                }
                out[i] = m[i][i].sqrt();
            }
            Ok(out)
        }
        StdErrorRule::MatrixSqrtDiagonal => {
            let s = symmetric_sqrt(m).map_err(|_| Error::DegenerateVariance(what))?;
            Ok(std::array::from_fn(|i| s[i][i]))
        }
    }
}

/// Label of coordinate `l` of the stacked reproduction vector.
pub fn pattern_label(l: usize) -> String {
    const PATTERNS: [&str; 4] = ["(1,1)", "(1,0)", "(0,1)", "(0,0)"];
    format!("p{}{}", l / 4, PATTERNS[l % 4])
}

/// Intervals for the eight reproduction probabilities followed by the
/// dominant eigenvalue, at level `1 - eps`.
pub fn ci_gw(est: &GwEstimate, cov: &GwCovariance, eps: f64, rule: StdErrorRule) -> Result<Vec<ConfidenceInterval>> {
    let q = quantile_for(eps)?;
    let level = 1.0 - eps;
    let se = std_errors(&cov.v_hat, rule, "reproduction probabilities")?;
    let mut out: Vec<ConfidenceInterval> = (0..8)
        .map(|l| ConfidenceInterval::new(pattern_label(l), est.p_hat[l], q * se[l], level))
        .collect();
    out.push(ConfidenceInterval::new("pi", est.pi_hat, q * cov.g_hat.sqrt(), level));
    Ok(out)
}

/// Intervals for `a0, b0, a1, b1, sigma2_0, sigma2_1, rho` at level `1 - eps`.
pub fn ci_bar(
    theta: &ThetaEstimate,
    noise: &NoiseEstimate,
    cov: &BarCovariance,
    counts: &ForestCounts,
    eps: f64,
    rule: StdErrorRule,
) -> Result<Vec<ConfidenceInterval>> {
    let q = quantile_for(eps)?;
    let level = 1.0 - eps;
    let se = std_errors(&cov.omega_hat, rule, "autoregressive coefficients")?;
    let mut out: Vec<ConfidenceInterval> = ["a0", "b0", "a1", "b1"]
        .iter()
        .enumerate()
        .map(|(k, name)| ConfidenceInterval::new(*name, theta.theta[k], q * se[k], level))
        .collect();
    let t = counts.t_star as f64;
    let scaled = cov.gamma_sigma_hat.map(|row| row.map(|x| x / t));
    let se_s = std_errors(&scaled, rule, "noise variances")?;
    out.push(ConfidenceInterval::new("sigma2_0", noise.sigma2[0], q * se_s[0], level));
    out.push(ConfidenceInterval::new("sigma2_1", noise.sigma2[1], q * se_s[1], level));
    if !(cov.gamma_rho_hat >= 0.0) {
        return Err(Error::DegenerateVariance("rho"));
    }
    let half = q * (cov.gamma_rho_hat / noise.denom_01 as f64).sqrt();
    out.push(ConfidenceInterval::new("rho", noise.rho, half, level));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    GwMean,
    GwVector,
    BarCoeffs,
    FixedPoint,
    Variance,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [
        TestKind::GwMean,
        TestKind::GwVector,
        TestKind::BarCoeffs,
        TestKind::FixedPoint,
        TestKind::Variance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::GwMean => "gw-mean",
            TestKind::GwVector => "gw-vector",
            TestKind::BarCoeffs => "bar-coeffs",
            TestKind::FixedPoint => "fixed-point",
            TestKind::Variance => "variance",
        }
    }

    pub fn nominal_df(self) -> u32 {
        match self {
            TestKind::GwVector => 4,
            TestKind::BarCoeffs => 2,
            _ => 1,
        }
    }

    /// Whether the test needs measured values rather than just the tree shapes.
    pub fn needs_values(self) -> bool {
        !matches!(self, TestKind::GwMean | TestKind::GwVector)
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown test {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaldTestResult {
    pub which: TestKind,
    pub statistic: f64,
    /// Degrees of freedom used for the p-value.
    pub df: u32,
    pub nominal_df: u32,
    pub p_value: f64,
}

impl WaldTestResult {
    fn from_statistic(which: TestKind, statistic: f64, df: u32) -> Result<Self> {
        if !statistic.is_finite() || statistic < 0.0 {
            return Err(Error::DegenerateVariance(which.name()));
        }
        Ok(Self {
            which,
            statistic,
            df,
            nominal_df: which.nominal_df(),
            p_value: chi2_survival(statistic, df)?,
        })
    }

    fn null(which: TestKind) -> Self {
        Self {
            which,
            statistic: 0.0,
            df: which.nominal_df(),
            nominal_df: which.nominal_df(),
            p_value: 1.0,
        }
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value <= level
    }
}

/// Gradient of `m0 - m1` with respect to the stacked reproduction vector.
pub const DG_MEAN: [f64; 8] = [2.0, 1.0, 1.0, 0.0, -2.0, -1.0, -1.0, 0.0];

/// Equal mean offspring counts for the two types.
pub fn test_gw_mean(est: &GwEstimate, var: &GwVariance) -> Result<WaldTestResult> {
    let d = est.m_hat[0] - est.m_hat[1];
    if d == 0.0 {
        return Ok(WaldTestResult::null(TestKind::GwMean));
    }
    let v = quad_form(&var.v_hat(), &DG_MEAN);
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(TestKind::GwMean.name()));
    }
    WaldTestResult::from_statistic(TestKind::GwMean, d * d / v, 1)
}

/// Equal reproduction laws for the two types. The covariance of the
/// difference always has the all-ones vector in its kernel, so the
/// statistic uses a pseudo-inverse and the degrees of freedom equal its rank.
pub fn test_gw_vector(est: &GwEstimate, var: &GwVariance) -> Result<WaldTestResult> {
    let p0 = est.p_type(0);
    let p1 = est.p_type(1);
    let d: [f64; 4] = std::array::from_fn(|k| p0[k] - p1[k]);
    if d.iter().all(|x| *x == 0.0) {
        return Ok(WaldTestResult::null(TestKind::GwVector));
    }
    let b0 = var.scaled_block(0);
    let b1 = var.scaled_block(1);
    let delta: Mat4 = std::array::from_fn(|r| std::array::from_fn(|c| b0[r][c] + b1[r][c]));
    let (value, rank) = pinv_quad_form(&delta, &d, PINV_TOL)?;
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if rank == 0 || null_space_norm(&delta, &d, PINV_TOL)? > 1e-8 * norm {
        return Err(Error::DegenerateVariance(TestKind::GwVector.name()));
    }
    WaldTestResult::from_statistic(TestKind::GwVector, value, rank as u32)
}

/// Equal intercept and slope pairs for the two types.
pub fn test_bar_coeffs(theta: &ThetaEstimate, cov: &BarCovariance) -> Result<WaldTestResult> {
    let t = theta.theta;
    let d = [t[0] - t[2], t[1] - t[3]];
    if d == [0.0, 0.0] {
        return Ok(WaldTestResult::null(TestKind::BarCoeffs));
    }
    let o = &cov.omega_hat;
    let delta = [
        [o[0][0] + o[2][2] - 2.0 * o[0][2], o[0][1] + o[2][3] - o[0][3] - o[2][1]],
        [o[1][0] + o[3][2] - o[1][2] - o[3][0], o[1][1] + o[3][3] - 2.0 * o[1][3]],
    ];
    let stat = quad_form_inverse(&delta, &d).map_err(|_| Error::DegenerateVariance(TestKind::BarCoeffs.name()))?;
    WaldTestResult::from_statistic(TestKind::BarCoeffs, stat, 2)
}

/// Equal fixed points `a_i / (1 - b_i)`.
pub fn test_fixed_point(theta: &ThetaEstimate, cov: &BarCovariance) -> Result<WaldTestResult> {
    let [a0, b0, a1, b1] = theta.theta;
    let (u0, u1) = (1.0 - b0, 1.0 - b1);
    if u0.abs() < FIXED_POINT_GUARD || u1.abs() < FIXED_POINT_GUARD {
        return Err(Error::FixedPointUndefined);
    }
    let d = a0 / u0 - a1 / u1;
    if d == 0.0 {
        return Ok(WaldTestResult::null(TestKind::FixedPoint));
    }
    let g = [1.0 / u0, a0 / (u0 * u0), -1.0 / u1, -a1 / (u1 * u1)];
    let v = quad_form(&cov.omega_hat, &g);
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(TestKind::FixedPoint.name()));
    }
    WaldTestResult::from_statistic(TestKind::FixedPoint, d * d / v, 1)
}

/// Equal noise variances for the two types.
pub fn test_variance(noise: &NoiseEstimate, cov: &BarCovariance, counts: &ForestCounts) -> Result<WaldTestResult> {
    let d = noise.sigma2[0] - noise.sigma2[1];
    if d == 0.0 {
        return Ok(WaldTestResult::null(TestKind::Variance));
    }
    let g = &cov.gamma_sigma_hat;
    let v = g[0][0] + g[1][1] - 2.0 * g[0][1];
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(TestKind::Variance.name()));
    }
    WaldTestResult::from_statistic(TestKind::Variance, counts.t_star as f64 * d * d / v, 1)
}
