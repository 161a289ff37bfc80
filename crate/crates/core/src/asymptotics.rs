//! Plug-in covariance estimators and their theoretical limits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{GwEstimate, NoiseEstimate, ThetaEstimate};
use crate::linalg::{invert_spd, matmul};
use crate::process::{descendants_matrix, dominant_eigen, BarCoeffs, GwLaw, NoiseMoments};
use crate::tree::{CellType, ForestCounts};

pub type Mat2 = [[f64; 2]; 2];
pub type Mat4 = [[f64; 4]; 4];
pub type Mat8 = [[f64; 8]; 8];

/// Multinomial covariance `diag(p) - p p'` of one pattern law.
pub fn multinomial_covariance(p: &[f64; 4]) -> Mat4 {
    let mut v = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            v[r][c] = if r == c { p[r] } else { 0.0 } - p[r] * p[c];
        }
    }
    v
}

fn block_diag4(a: &Mat4, b: &Mat4) -> Mat8 {
    let mut out = [[0.0; 8]; 8];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = a[r][c];
            out[r + 4][c + 4] = b[r][c];
        }
    }
    out
}

fn scale4(m: &Mat4, s: f64) -> Mat4 {
    m.map(|row| row.map(|x| x * s))
}

/// Covariance of the pattern-frequency estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwVariance {
    /// Multinomial covariance of each type's pattern law (not yet divided).
    pub v_blocks: [Mat4; 2],
    pub denom: [u64; 2],
}

impl GwVariance {
    /// Block `i` divided by its mother count.
    pub fn scaled_block(&self, i: usize) -> Mat4 {
        scale4(&self.v_blocks[i], 1.0 / self.denom[i] as f64)
    }

    /// The 8x8 block-diagonal covariance of the stacked estimate.
    pub fn v_hat(&self) -> Mat8 {
        block_diag4(&self.scaled_block(0), &self.scaled_block(1))
    }
}

pub fn gw_variance(est: &GwEstimate) -> Result<GwVariance> {
    for i in 0..2 {
        if est.denom[i] == 0 {
            return Err(Error::InsufficientType(CellType::from_index(i)));
        }
    }
    Ok(GwVariance {
        v_blocks: [
            multinomial_covariance(&est.p_type(0)),
            multinomial_covariance(&est.p_type(1)),
        ],
        denom: est.denom,
    })
}

/// Delta-method variance of the dominant-eigenvalue estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwCovariance {
    pub variance: GwVariance,
    pub v_hat: Mat8,
    pub h_vec: [f64; 8],
    pub f_hat: [f64; 8],
    pub g_hat: f64,
}

/// The 8-vector whose scaled version is the non-constant part of the
/// gradient of the dominant eigenvalue with respect to the pattern laws.
pub fn pi_gradient_h(p: &[f64; 8]) -> [f64; 8] {
    let (a11, a10, a01) = (p[0], p[1], p[2]);
    let (b11, b10, b01) = (p[4], p[5], p[6]);
    [
        a11 + a10 + b11 + 2.0 * b10 - b01,
        a11 + a10 - b11 - b01,
        2.0 * b11 + 2.0 * b10,
        0.0,
        a11 - a10 + 2.0 * a01 + b11 + b01,
        2.0 * a11 + 2.0 * a01,
        -a11 - a10 + b11 + b01,
        0.0,
    ]
}

pub fn gw_covariance(est: &GwEstimate) -> Result<GwCovariance> {
    let variance = gw_variance(est)?;
    let disc = est.t_hat * est.t_hat - 4.0 * est.d_hat;
    if !(disc > 0.0) {
        return Err(Error::DegenerateDiscriminant);
    }
    let h_vec = pi_gradient_h(&est.p_hat);
    let base = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let root = disc.sqrt();
    let f_hat: [f64; 8] = std::array::from_fn(|k| 0.5 * base[k] + 0.5 * h_vec[k] / root);
    let v_hat = variance.v_hat();
    let g_hat = crate::linalg::quad_form(&v_hat, &f_hat).max(0.0);
    Ok(GwCovariance {
        variance,
        v_hat,
        h_vec,
        f_hat,
        g_hat,
    })
}

/// Plug-in covariances for the autoregressive and noise parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarCovariance {
    /// Weighted moment matrix divided by the cell count of the mother range.
    pub gamma_hat: Mat4,
    /// Sandwich covariance of the coefficient estimate.
    pub omega_hat: Mat4,
    pub gamma_sigma_hat: Mat2,
    pub gamma_rho_hat: f64,
    pub h01_hat0: f64,
}

pub fn bar_covariance(
    theta: &ThetaEstimate,
    noise: &NoiseEstimate,
    gw: &GwEstimate,
    counts: &ForestCounts,
) -> Result<BarCovariance> {
    let s = [theta.block(0), theta.block(1)];
    let s01 = theta.s01;
    let mut m = [[0.0; 4]; 4];
    for r in 0..2 {
        for c in 0..2 {
            m[r][c] = noise.sigma2[0] * s[0][r][c];
            m[r + 2][c + 2] = noise.sigma2[1] * s[1][r][c];
            m[r][c + 2] = noise.rho * s01[r][c];
            m[r + 2][c] = noise.rho * s01[r][c];
        }
    }
    let mut sigma_inv = [[0.0; 4]; 4];
    for i in 0..2 {
        let inv = invert_spd(&s[i]).map_err(|_| Error::RankDeficient(CellType::from_index(i)))?;
        for r in 0..2 {
            for c in 0..2 {
                sigma_inv[2 * i + r][2 * i + c] = inv[r][c];
            }
        }
    }
    let mut omega_hat = matmul(&matmul(&sigma_inv, &m), &sigma_inv);
    for r in 0..4 {
        for c in 0..r {
            let avg = 0.5 * (omega_hat[r][c] + omega_hat[c][r]);
            omega_hat[r][c] = avg;
            omega_hat[c][r] = avg;
        }
    }
    let prev = counts.t_star_previous();
    if prev == 0 {
        return Err(Error::ForestExtinct);
    }
    let gamma_hat = scale4(&m, 1.0 / prev as f64);

    let t = counts.t_star as f64;
    let t0 = counts.t_star_0 as f64;
    let t1 = counts.t_star_1 as f64;
    if counts.t_star_0 == 0 {
        return Err(Error::InsufficientType(CellType::Even));
    }
    if counts.t_star_1 == 0 {
        return Err(Error::InsufficientType(CellType::Odd));
    }
    let h01_hat0 = (gw.p_hat[0] * t0 + gw.p_hat[4] * t1) / t;
    let s4 = [noise.sigma2[0].powi(2), noise.sigma2[1].powi(2)];
    let off = (noise.nu2 - noise.sigma2[0] * noise.sigma2[1]) * h01_hat0 / gw.pi_hat * t * t / (t0 * t1);
    let gamma_sigma_hat = [
        [(noise.tau4[0] - s4[0]) * t / t0, off],
        [off, (noise.tau4[1] - s4[1]) * t / t1],
    ];
    Ok(BarCovariance {
        gamma_hat,
        omega_hat,
        gamma_sigma_hat,
        gamma_rho_hat: noise.nu2 - noise.rho * noise.rho,
        h01_hat0,
    })
}

/// Almost-sure limits of the normalized moment sums on the non-extinction
/// set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentLimits {
    pub pi: f64,
    pub z: [f64; 2],
    /// `h[q][i]` for `q = 0..=4`, with `h[0][i] = z_i * pi`.
    pub h: [[f64; 2]; 5],
    /// `h_tilde[q][i]` for `q = 1..=4`; row 0 is unused.
    pub h_tilde: [[f64; 2]; 5],
    /// `h01[q]` for `q = 0..=4`.
    pub h01: [f64; 5],
    pub l0: Mat2,
    pub l1: Mat2,
    pub l01: Mat2,
    pub bar: BarCoeffs,
    pub noise: NoiseMoments,
}

/// Moment limits plus the asymptotic covariances built from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalLimits {
    pub moments: MomentLimits,
    pub sigma_mat: Mat4,
    pub gamma: Mat4,
    pub gamma_theta: Mat4,
    pub gamma_sigma: Mat2,
    pub gamma_rho: f64,
    pub v: Mat8,
}

pub fn moment_limits(law: &GwLaw, bar: &BarCoeffs, noise: &NoiseMoments) -> Result<MomentLimits> {
    law.validate()?;
    noise.validate()?;
    let p = descendants_matrix(law);
    let eig = dominant_eigen(&p)?;
    let (pi, z) = (eig.pi, eig.z);
    if !(pi > 1.0) {
        return Err(Error::Subcritical(pi));
    }
    if !bar.is_stable() {
        return Err(Error::Unstable);
    }
    let pr = p.as_rows();
    let pt = [[pr[0][0], pr[1][0]], [pr[0][1], pr[1][1]]];
    let a = [bar.a0, bar.a1];
    let b = [bar.b0, bar.b1];
    let s2 = [noise.sigma2(0), noise.sigma2(1)];
    let lam = [noise.lambda(0), noise.lambda(1)];
    let tau = [noise.tau4(0), noise.tau4(1)];

    let mut h = [[0.0; 2]; 5];
    let mut ht = [[0.0; 2]; 5];
    h[0] = [z[0] * pi, z[1] * pi];
    for q in 1..=4usize {
        for i in 0..2 {
            let (a, b, s2, lam, tau) = (a[i], b[i], s2[i], lam[i], tau[i]);
            let m2 = a * a + s2;
            let m3 = a.powi(3) + 3.0 * a * s2 + lam;
            let m4 = a.powi(4) + 6.0 * a * a * s2 + 4.0 * a * lam + tau;
            let hp = |k: usize| h[k][i] / pi;
            ht[q][i] = match q {
                1 => a * z[i],
                2 => m2 * z[i] + 2.0 * a * b * hp(1),
                3 => m3 * z[i] + 3.0 * b * m2 * hp(1) + 3.0 * a * b * b * hp(2),
                _ => m4 * z[i] + 4.0 * b * m3 * hp(1) + 6.0 * b * b * m2 * hp(2) + 4.0 * a * b.powi(3) * hp(3),
            };
        }
        // (I - P~_q) h = P' h~ with P~_q = P' diag(b^q) / pi
        let bq = [b[0].powi(q as i32), b[1].powi(q as i32)];
        let m = [
            [1.0 - pt[0][0] * bq[0] / pi, -pt[0][1] * bq[1] / pi],
            [-pt[1][0] * bq[0] / pi, 1.0 - pt[1][1] * bq[1] / pi],
        ];
        let rhs = [
            pt[0][0] * ht[q][0] + pt[0][1] * ht[q][1],
            pt[1][0] * ht[q][0] + pt[1][1] * ht[q][1],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::Singular);
        }
        h[q] = [
            (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
            (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
        ];
    }

    let p11 = [law.p0[0], law.p1[0]];
    let mut h01 = [0.0; 5];
    h01[0] = p11[0] * z[0] + p11[1] * z[1];
    for q in 1..=4 {
        h01[q] = (0..2)
            .map(|i| p11[i] * (ht[q][i] + b[i].powi(q as i32) * h[q][i] / pi))
            .sum();
    }
    let lmat = |x0: f64, x1: f64, x2: f64| [[x0, x1], [x1, x2]];
    Ok(MomentLimits {
        pi,
        z,
        h,
        h_tilde: ht,
        h01,
        l0: lmat(h[0][0], h[1][0], h[2][0]),
        l1: lmat(h[0][1], h[1][1], h[2][1]),
        l01: lmat(h01[0], h01[1], h01[2]),
        bar: *bar,
        noise: *noise,
    })
}

pub fn theoretical_limits(law: &GwLaw, bar: &BarCoeffs, noise: &NoiseMoments) -> Result<TheoreticalLimits> {
    let mo = moment_limits(law, bar, noise)?;
    let (pi, z) = (mo.pi, mo.z);
    let s2 = [noise.sigma2(0), noise.sigma2(1)];
    let tau = [noise.tau4(0), noise.tau4(1)];
    let mut sigma_mat = [[0.0; 4]; 4];
    let mut gamma = [[0.0; 4]; 4];
    for r in 0..2 {
        for c in 0..2 {
            sigma_mat[r][c] = mo.l0[r][c];
            sigma_mat[r + 2][c + 2] = mo.l1[r][c];
            gamma[r][c] = s2[0] * mo.l0[r][c];
            gamma[r + 2][c + 2] = s2[1] * mo.l1[r][c];
            gamma[r][c + 2] = noise.rho * mo.l01[r][c];
            gamma[r + 2][c] = noise.rho * mo.l01[r][c];
        }
    }
    let sigma_inv = invert_spd(&sigma_mat)?;
    let gamma_theta = matmul(&matmul(&sigma_inv, &gamma), &sigma_inv);
    let off = (noise.nu2 - s2[0] * s2[1]) * mo.h01[0] / (pi * z[0] * z[1]);
    let gamma_sigma = [
        [(tau[0] - s2[0] * s2[0]) / z[0], off],
        [off, (tau[1] - s2[1] * s2[1]) / z[1]],
    ];
    let v = block_diag4(
        &scale4(&multinomial_covariance(&law.p0), 1.0 / z[0]),
        &scale4(&multinomial_covariance(&law.p1), 1.0 / z[1]),
    );
    Ok(TheoreticalLimits {
        moments: mo,
        sigma_mat,
        gamma,
        gamma_theta,
        gamma_sigma,
        gamma_rho: noise.nu2 - noise.rho * noise.rho,
        v,
    })
}

impl MomentLimits {
    /// Limit of the normalized sum of `X_k^p X_{2k+i}^q` over type-`i`
    /// daughters, for `q` in `1..=3` and `p + q <= 4`.
    pub fn h_pq(&self, i: usize, p: usize, q: usize) -> Result<f64> {
        if !(1..=3).contains(&q) || p + q > 4 {
            return Err(Error::InvalidArgument(format!("h({p},{q}) is not tabulated")));
        }
        let a = self.bar.intercept(i);
        let b = self.bar.slope(i);
        let s2 = self.noise.sigma2(i);
        let lam = self.noise.lambda(i);
        let h = |k: usize| self.h[k][i];
        Ok(match q {
            1 => a * h(p) + b * h(p + 1),
            2 => (a * a + s2) * h(p) + 2.0 * a * b * h(p + 1) + b * b * h(p + 2),
            _ => {
                (a.powi(3) + 3.0 * a * s2 + lam) * h(p)
                    + 3.0 * b * (a * a + s2) * h(p + 1)
                    + 3.0 * a * b * b * h(p + 2)
                    + b.powi(3) * h(p + 3)
            }
        })
    }

    /// Limit of the normalized sum of `X_k^p X_{2k} X_{2k+1}` over mothers
    /// with both daughters observed, for `p <= 2`.
    pub fn h01_p11(&self, p: usize) -> Result<f64> {
        if p > 2 {
            return Err(Error::InvalidArgument(format!("h01({p},1,1) is not tabulated")));
        }
        let (a0, b0, a1, b1) = (self.bar.a0, self.bar.b0, self.bar.a1, self.bar.b1);
        let h = |k: usize| self.h01[k];
        Ok((a0 * a1 + self.noise.rho) * h(p) + (a0 * b1 + b0 * a1) * h(p + 1) + b0 * b1 * h(p + 2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::gaussian_moments;
    use approx::assert_abs_diff_eq;

    #[test]
    fn deterministic_law_has_zero_variance() {
        let est = GwEstimate::from_probabilities(5, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0], [10, 10]);
        let cov = gw_covariance(&est).unwrap();
        assert!(cov.v_hat.iter().flatten().all(|x| *x == 0.0));
        assert_eq!(cov.g_hat, 0.0);
    }

    #[test]
    fn uniform_law_block() {
        let v = multinomial_covariance(&[0.25; 4]);
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { 3.0 / 16.0 } else { -1.0 / 16.0 };
                assert_abs_diff_eq!(v[r][c], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn eigenvalue_gradient_matches_finite_differences() {
        let pi_of = |p: &[f64; 8]| GwEstimate::from_probabilities(2, *p, [1, 1]).pi_hat;
        let p = [0.56060, 0.03621, 0.04740, 0.35579, 0.55928, 0.04707, 0.03755, 0.35611];
        let est = GwEstimate::from_probabilities(2, p, [1000, 1000]);
        let cov = gw_covariance(&est).unwrap();
        for k in 0..8 {
            let step = 1e-6;
            let mut up = p;
            let mut dn = p;
            up[k] += step;
            dn[k] -= step;
            let fd = (pi_of(&up) - pi_of(&dn)) / (2.0 * step);
            assert_abs_diff_eq!(cov.f_hat[k], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn reference_pi_interval_width() {
        let p = [0.56060, 0.03621, 0.04740, 0.35579, 0.55928, 0.04707, 0.03755, 0.35611];
        // the reference per-type cell counts stand in for the mother counts
        let est = GwEstimate::from_probabilities(9, p, [11189, 11205]);
        let cov = gw_covariance(&est).unwrap();
        let half = 1.959963984540054 * cov.g_hat.sqrt();
        assert!(half > 0.0065 && half < 0.0195, "{half}");
    }

    #[test]
    fn full_tree_limits() {
        let law = GwLaw::symmetric([1.0, 0.0, 0.0, 0.0]).unwrap();
        let bar = BarCoeffs::symmetric(0.02, 0.47);
        let noise = gaussian_moments(1.8e-5, 1.8e-5, 0.5e-5).unwrap();
        let lim = theoretical_limits(&law, &bar, &noise).unwrap();
        let h = lim.moments.h;
        assert_abs_diff_eq!(h[1][0], 0.02 / 0.53, epsilon = 1e-12);
        assert_abs_diff_eq!(h[1][1], 0.02 / 0.53, epsilon = 1e-12);
        assert_abs_diff_eq!(h[1][0], 0.037736, epsilon = 1e-6);
        assert_abs_diff_eq!(lim.gamma_rho, 1.8e-5 * 1.8e-5 + 2.0 * 0.5e-5 * 0.5e-5 - 0.5e-5 * 0.5e-5, epsilon = 1e-20);
    }

    #[test]
    fn second_moment_without_noise() {
        // Without noise the full tree is deterministic along generations and
        // generation g holds 2^g cells.
        let law = GwLaw::symmetric([1.0, 0.0, 0.0, 0.0]).unwrap();
        let (a, b) = (0.5, 0.3);
        let bar = BarCoeffs::symmetric(a, b);
        let noise = NoiseMoments {
            sigma2_0: 0.0,
            sigma2_1: 0.0,
            rho: 0.0,
            lambda_0: 0.0,
            lambda_1: 0.0,
            alpha: 0.0,
            beta: 0.0,
            tau4_0: 0.0,
            tau4_1: 0.0,
            nu2: 0.0,
        };
        let lim = moment_limits(&law, &bar, &noise).unwrap();
        // Each cell has one daughter of each type, so h(q) is the limit of the
        // tree average of X^q, dominated by the last generations.
        let fp = a / (1.0 - b);
        for q in 1..=4 {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut x = 0.0f64;
            for g in 0..60 {
                let w = 2f64.powi(g);
                num += w * x.powi(q as i32);
                den += w;
                x = a + b * x;
            }
            assert_abs_diff_eq!(lim.h[q][0], num / den, epsilon = 1e-9);
            assert_abs_diff_eq!(lim.h[q][1], fp.powi(q as i32), epsilon = 1e-12);
        }
    }

    #[test]
    fn limit_errors() {
        let bar = BarCoeffs::symmetric(0.02, 0.47);
        let noise = gaussian_moments(1.8e-5, 1.8e-5, 0.0).unwrap();
        let sub = GwLaw::symmetric([0.0, 0.4, 0.4, 0.2]).unwrap();
        assert!(matches!(theoretical_limits(&sub, &bar, &noise), Err(Error::Subcritical(_))));
        let law = GwLaw::symmetric([0.9, 0.04, 0.04, 0.02]).unwrap();
        assert!(matches!(
            theoretical_limits(&law, &BarCoeffs::symmetric(0.02, 1.0), &noise),
            Err(Error::Unstable)
        ));
    }
}
