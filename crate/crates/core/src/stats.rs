//! Numeric kernel: normal and chi-square distribution functions, the
//! least-squares line fit used for convergence-rate slopes, and seeded
//! random streams.
//!
//! Random streams are ChaCha20 keystreams. A stream is a pure function of
//! its key, and child streams are keyed from `(parent key, id)`, so any
//! tree or replication can be regenerated without replaying its siblings.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Deterministic, splittable stream of random draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Child stream for `id`. Distinct ids give independent streams, and the
    /// result does not depend on how many draws were taken from `self`.
    pub fn derive(&self, id: u64) -> Self {
        let mut kdf = ChaCha20Rng::from_seed(self.rng.get_seed());
        // Stream 0 of every key is reserved for draws.
        kdf.set_stream(id.wrapping_add(1));
        let mut key = [0u8; 32];
        kdf.fill_bytes(&mut key);
        Self {
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inversion of a uniform draw.
    pub fn normal(&mut self) -> f64 {
        quantile_unchecked(self.uniform())
    }
}

fn quantile_unchecked(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Quantile of the standard normal law.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "normal quantile needs 0 < p < 1, got {p}"
        )));
    }
    Ok(quantile_unchecked(p))
}

/// Survival function `P(X > x)` of the chi-square law with `df` degrees of
/// freedom, i.e. the regularized upper incomplete gamma `Q(df/2, x/2)`.
pub fn chi2_survival(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidArgument("chi-square needs df >= 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "chi-square survival needs x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(f64::from(df) / 2.0, x / 2.0).clamp(0.0, 1.0))
}

/// Ordinary least-squares line through `points`, returned as
/// `(slope, intercept)`.
pub fn ols_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "line fit needs at least two points".into(),
        ));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument(
            "line fit needs at least two distinct abscissae".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((slope, mean_y - slope * mean_x))
}

/// Sampler for a centered bivariate Gaussian with covariance
/// `[[s0, rho], [rho, s1]]`, through its lower-triangular factor.
#[derive(Clone, Copy, Debug)]
pub struct PairSampler {
    l00: f64,
    l10: f64,
    l11: f64,
    sd1: f64,
}

impl PairSampler {
    pub fn new(sigma2_0: f64, sigma2_1: f64, rho: f64) -> Result<Self> {
        let finite = sigma2_0.is_finite() && sigma2_1.is_finite() && rho.is_finite();
        if !finite || sigma2_0 < 0.0 || sigma2_1 < 0.0 {
            return Err(Error::InvalidNoise(
                "variances must be finite and non-negative".into(),
            ));
        }
        if rho * rho > sigma2_0 * sigma2_1 {
            return Err(Error::InvalidNoise(format!(
                "covariance {rho} exceeds sqrt({sigma2_0} * {sigma2_1})"
            )));
        }
        let l00 = sigma2_0.sqrt();
        let l10 = if l00 > 0.0 { rho / l00 } else { 0.0 };
        let l11 = (sigma2_1 - l10 * l10).max(0.0).sqrt();
        Ok(Self {
            l00,
            l10,
            l11,
            sd1: sigma2_1.sqrt(),
        })
    }

    pub fn draw(&self, stream: &mut RngStream) -> (f64, f64) {
        let z0 = stream.normal();
        let z1 = stream.normal();
        (self.l00 * z0, self.l10 * z0 + self.l11 * z1)
    }

    /// Draw only the noise of daughter type `which` from its marginal law.
    pub fn draw_one(&self, which: usize, stream: &mut RngStream) -> f64 {
        let z = stream.normal();
        if which == 0 {
            self.l00 * z
        } else {
            self.sd1 * z
        }
    }
}

/// One draw of correlated sister noise.
pub fn gaussian_pair(
    stream: &mut RngStream,
    sigma2_0: f64,
    sigma2_1: f64,
    rho: f64,
) -> Result<(f64, f64)> {
    Ok(PairSampler::new(sigma2_0, sigma2_1, rho)?.draw(stream))
}
