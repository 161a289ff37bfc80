//! Model parameters and seeded simulation of the coupled process.
//!
//! The observation skeleton is a two-type Galton-Watson tree: a type-`i`
//! observed cell has its daughter pair observed according to the pattern
//! law `p(i)`. The characteristic follows the bifurcating autoregression
//! `X(2k+i) = a_i + b_i X(k) + eps(2k+i)` with correlated sister noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{PairSampler, RngStream};
use crate::tree::{NodeId, ObservedForest, ObservedTree, MAX_DEPTH};

/// Index of the daughter pattern `(l0, l1)` inside a probability 4-vector
/// ordered `(1,1), (1,0), (0,1), (0,0)`.
#[inline]
pub fn pattern_index(l0: bool, l1: bool) -> usize {
    3 - (2 * usize::from(l0) + usize::from(l1))
}

/// Reproduction law of the observation process: for each mother type the
/// probabilities of the daughter patterns `(1,1), (1,0), (0,1), (0,0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwLaw {
    pub p0: [f64; 4],
    pub p1: [f64; 4],
}

impl GwLaw {
    pub fn new(p0: [f64; 4], p1: [f64; 4]) -> Result<Self> {
        let law = Self { p0, p1 };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in [self.p0, self.p1].iter().enumerate() {
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidLaw(format!(
                    "type {i} probabilities must be finite and non-negative"
                )));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidLaw(format!(
                    "type {i} probabilities sum to {total}, not 1"
                )));
            }
        }
        Ok(())
    }

    pub fn symmetric(p: [f64; 4]) -> Result<Self> {
        Self::new(p, p)
    }

    pub fn of_type(&self, i: usize) -> &[f64; 4] {
        if i == 0 {
            &self.p0
        } else {
            &self.p1
        }
    }

    pub fn as_vector(&self) -> [f64; 8] {
        let mut v = [0.0; 8];
        v[..4].copy_from_slice(&self.p0);
        v[4..].copy_from_slice(&self.p1);
        v
    }
}

/// Expected numbers of observed daughters: `p_il` is the mean number of
/// type-`l` daughters of a type-`i` mother.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescendantsMatrix {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl DescendantsMatrix {
    pub fn trace(&self) -> f64 {
        self.p00 + self.p11
    }

    pub fn det(&self) -> f64 {
        self.p00 * self.p11 - self.p01 * self.p10
    }

    /// `tr^2 - 4 det`, in a form that is non-negative for non-negative
    /// entries.
    pub fn discriminant(&self) -> f64 {
        let d = self.p00 - self.p11;
        d * d + 4.0 * self.p01 * self.p10
    }

    pub fn as_rows(&self) -> [[f64; 2]; 2] {
        [[self.p00, self.p01], [self.p10, self.p11]]
    }
}

pub fn descendants_matrix(law: &GwLaw) -> DescendantsMatrix {
    descendants_from_vector(&law.as_vector())
}

pub(crate) fn descendants_from_vector(p: &[f64; 8]) -> DescendantsMatrix {
    DescendantsMatrix {
        p00: p[1] + p[0],
        p01: p[2] + p[0],
        p10: p[5] + p[4],
        p11: p[6] + p[4],
    }
}

/// Dominant eigenvalue and the matching left eigenvector with `z0 + z1 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominantEigen {
    pub pi: f64,
    pub z: [f64; 2],
}

pub fn dominant_eigen(p: &DescendantsMatrix) -> Result<DominantEigen> {
    let pi = 0.5 * (p.trace() + p.discriminant().sqrt());
    // Both rows of (P^t - pi I) z = 0 give a candidate; keep the better
    // conditioned one.
    let u = [p.p10, pi - p.p00];
    let v = [pi - p.p11, p.p01];
    let norm = |w: [f64; 2]| w[0].hypot(w[1]);
    let w = if norm(u) >= norm(v) { u } else { v };
    let scale = p.p00.abs().max(p.p11.abs()).max(p.p01.abs()).max(p.p10.abs());
    if p.p01 == 0.0 && p.p10 == 0.0 && p.p00 == p.p11 || norm(w) <= 1e-14 * scale.max(1e-300) {
        return Err(Error::DegenerateEigenvector);
    }
    let total = w[0] + w[1];
    if total == 0.0 {
        return Err(Error::DegenerateEigenvector);
    }
    Ok(DominantEigen {
        pi,
        z: [w[0] / total, w[1] / total],
    })
}

/// Autoregression coefficients `(a0, b0, a1, b1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarCoeffs {
    pub a0: f64,
    pub b0: f64,
    pub a1: f64,
    pub b1: f64,
}

impl BarCoeffs {
    pub fn symmetric(a: f64, b: f64) -> Self {
        Self {
            a0: a,
            b0: b,
            a1: a,
            b1: b,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a0, self.b0, self.a1, self.b1]
    }

    pub fn from_array(t: [f64; 4]) -> Self {
        Self {
            a0: t[0],
            b0: t[1],
            a1: t[2],
            b1: t[3],
        }
    }

    pub fn intercept(&self, i: usize) -> f64 {
        if i == 0 {
            self.a0
        } else {
            self.a1
        }
    }

    pub fn slope(&self, i: usize) -> f64 {
        if i == 0 {
            self.b0
        } else {
            self.b1
        }
    }

    /// `a_i / (1 - b_i)`: mean characteristic along an all-type-`i` lineage.
    pub fn fixed_points(&self) -> [f64; 2] {
        [self.a0 / (1.0 - self.b0), self.a1 / (1.0 - self.b1)]
    }

    pub fn is_stable(&self) -> bool {
        self.b0.abs() < 1.0 && self.b1.abs() < 1.0
    }
}

/// Conditional moments of the sister noise pair `(eps0, eps1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseMoments {
    pub sigma2_0: f64,
    pub sigma2_1: f64,
    pub rho: f64,
    pub lambda_0: f64,
    pub lambda_1: f64,
    pub tau4_0: f64,
    pub tau4_1: f64,
    /// `E[eps0^2 eps1]`
    pub alpha: f64,
    /// `E[eps0 eps1^2]`
    pub beta: f64,
    /// `E[eps0^2 eps1^2]`
    pub nu2: f64,
}

impl NoiseMoments {
    pub fn sigma2(&self, i: usize) -> f64 {
        if i == 0 {
            self.sigma2_0
        } else {
            self.sigma2_1
        }
    }

    pub fn lambda(&self, i: usize) -> f64 {
        if i == 0 {
            self.lambda_0
        } else {
            self.lambda_1
        }
    }

    pub fn tau4(&self, i: usize) -> f64 {
        if i == 0 {
            self.tau4_0
        } else {
            self.tau4_1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma2_0,
            self.sigma2_1,
            self.rho,
            self.lambda_0,
            self.lambda_1,
            self.tau4_0,
            self.tau4_1,
            self.alpha,
            self.beta,
            self.nu2,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidNoise("moments must be finite".into()));
        }
        if self.sigma2_0 < 0.0 || self.sigma2_1 < 0.0 {
            return Err(Error::InvalidNoise("variances must be non-negative".into()));
        }
        if self.rho * self.rho > self.sigma2_0 * self.sigma2_1 {
            return Err(Error::InvalidNoise(
                "covariance must satisfy |rho| <= sqrt(sigma2_0 sigma2_1)".into(),
            ));
        }
        if self.tau4_0 < self.sigma2_0 * self.sigma2_0 || self.tau4_1 < self.sigma2_1 * self.sigma2_1 {
            return Err(Error::InvalidNoise("fourth moments below squared variances".into()));
        }
        if self.nu2 < self.rho * self.rho {
            return Err(Error::InvalidNoise("nu2 below rho^2".into()));
        }
        Ok(())
    }
}

/// Moments of a centered bivariate Gaussian pair.
pub fn gaussian_moments(sigma2_0: f64, sigma2_1: f64, rho: f64) -> Result<NoiseMoments> {
    let finite = sigma2_0.is_finite() && sigma2_1.is_finite() && rho.is_finite();
    if !finite || sigma2_0 < 0.0 || sigma2_1 < 0.0 || rho * rho > sigma2_0 * sigma2_1 {
        return Err(Error::InvalidNoise(format!(
            "covariance [[{sigma2_0}, {rho}], [{rho}, {sigma2_1}]] is not positive semi-definite"
        )));
    }
    Ok(NoiseMoments {
        sigma2_0,
        sigma2_1,
        rho,
        lambda_0: 0.0,
        lambda_1: 0.0,
        tau4_0: 3.0 * sigma2_0 * sigma2_0,
        tau4_1: 3.0 * sigma2_1 * sigma2_1,
        alpha: 0.0,
        beta: 0.0,
        nu2: sigma2_0 * sigma2_1 + 2.0 * rho * rho,
    })
}

/// Law of the root value of every tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RootLaw {
    Fixed { value: f64 },
    Gaussian { mean: f64, sd: f64 },
}

impl RootLaw {
    /// Gaussian start at the type-0 fixed point with the type-0 stationary
    /// spread.
    pub fn stationary(bar: &BarCoeffs, noise: &NoiseMoments) -> Result<Self> {
        if bar.b0.abs() >= 1.0 {
            return Err(Error::Unstable);
        }
        Ok(RootLaw::Gaussian {
            mean: bar.a0 / (1.0 - bar.b0),
            sd: (noise.sigma2_0 / (1.0 - bar.b0 * bar.b0)).sqrt(),
        })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RootLaw::Fixed { value } if value.is_finite() => Ok(()),
            RootLaw::Gaussian { mean, sd } if mean.is_finite() && sd.is_finite() && sd >= 0.0 => Ok(()),
            _ => Err(Error::InvalidArgument(format!("invalid root law {self:?}"))),
        }
    }

    fn draw(&self, stream: &mut RngStream) -> f64 {
        match *self {
            RootLaw::Fixed { value } => value,
            RootLaw::Gaussian { mean, sd } => mean + sd * stream.normal(),
        }
    }
}

/// Simulates `m` trees up to generation `depth`. Tree `j` draws from its own
/// stream derived from `seed`, so the forest does not depend on how trees
/// are scheduled.
pub fn simulate_forest(
    law: &GwLaw,
    bar: &BarCoeffs,
    noise: &NoiseMoments,
    root: &RootLaw,
    m: usize,
    depth: u32,
    seed: u64,
) -> Result<ObservedForest> {
    simulate_forest_with_stream(law, bar, noise, root, m, depth, &RngStream::from_seed(seed))
}

pub fn simulate_forest_with_stream(
    law: &GwLaw,
    bar: &BarCoeffs,
    noise: &NoiseMoments,
    root: &RootLaw,
    m: usize,
    depth: u32,
    stream: &RngStream,
) -> Result<ObservedForest> {
    law.validate()?;
    root.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "depth must lie in 1..={MAX_DEPTH}, got {depth}"
        )));
    }
    let all = [bar.a0, bar.b0, bar.a1, bar.b1];
    if all.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("coefficients must be finite".into()));
    }
    if noise.sigma2_0 <= 0.0 || noise.sigma2_1 <= 0.0 || noise.rho * noise.rho >= noise.sigma2_0 * noise.sigma2_1 {
        return Err(Error::InvalidNoise(
            "noise covariance must be positive definite".into(),
        ));
    }
    let sampler = PairSampler::new(noise.sigma2_0, noise.sigma2_1, noise.rho)?;
    let trees = (0..m)
        .map(|j| {
            let mut s = stream.derive(j as u64);
            simulate_tree(law, bar, &sampler, root, depth, &mut s)
        })
        .collect();
    ObservedForest::new(trees, depth)
}

fn simulate_tree(
    law: &GwLaw,
    bar: &BarCoeffs,
    sampler: &PairSampler,
    root: &RootLaw,
    depth: u32,
    stream: &mut RngStream,
) -> ObservedTree {
    let mut ids: Vec<NodeId> = vec![1];
    let mut values = vec![root.draw(stream)];
    let mut children = vec![[u32::MAX; 2]];
    // ids grows in breadth-first order, so the scan visits mothers in heap
    // order and stops at the first cell of the last generation.
    let last_generation_start = 1u64 << depth;
    let mut idx = 0;
    while idx < ids.len() {
        let k = ids[idx];
        if k >= last_generation_start {
            break;
        }
        let p = law.of_type((k % 2) as usize);
        let u = stream.uniform();
        let (l0, l1) = if u < p[0] {
            (true, true)
        } else if u < p[0] + p[1] {
            (true, false)
        } else if u < p[0] + p[1] + p[2] {
            (false, true)
        } else {
            (false, false)
        };
        let x = values[idx];
        let eps = match (l0, l1) {
            (true, true) => Some(sampler.draw(stream)),
            (true, false) => Some((sampler.draw_one(0, stream), 0.0)),
            (false, true) => Some((0.0, sampler.draw_one(1, stream))),
            (false, false) => None,
        };
        if let Some((e0, e1)) = eps {
            if l0 {
                children[idx][0] = ids.len() as u32;
                ids.push(2 * k);
                values.push(bar.a0 + bar.b0 * x + e0);
                children.push([u32::MAX; 2]);
            }
            if l1 {
                children[idx][1] = ids.len() as u32;
                ids.push(2 * k + 1);
                values.push(bar.a1 + bar.b1 * x + e1);
                children.push([u32::MAX; 2]);
            }
        }
        idx += 1;
    }
    ObservedTree::from_parts(ids, values, children)
}
