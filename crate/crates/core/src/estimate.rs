//! Point estimators: reproduction probabilities, dominant eigenvalue,
//! pooled least squares for the autoregression, residuals and noise
//! moments.
//!
//! Everything is read from a [`ForestSummary`], which holds per-generation
//! sums so that estimates at any generation index are prefix sums. Per-tree
//! contributions are combined in sorted order, which makes every estimate
//! bit-identical under any permutation of the trees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{descendants_from_vector, pattern_index};
use crate::tree::{generation, CellType, ForestCounts, ObservedForest, ObservedTree};

/// Largest condition number accepted for a 2x2 normal-equation block.
pub const MAX_CONDITION: f64 = 1e12;

/// Reproduction-law estimate from data up to generation `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GwEstimate {
    pub n: u32,
    /// `(p0(1,1), p0(1,0), p0(0,1), p0(0,0), p1(1,1), ..., p1(0,0))`
    pub p_hat: [f64; 8],
    /// Observed mothers of each type in generations `1..n`.
    pub denom: [u64; 2],
    pub pi_hat: f64,
    pub t_hat: f64,
    pub d_hat: f64,
    pub m_hat: [f64; 2],
}

impl GwEstimate {
    /// Derived quantities from given probability vectors and mother counts.
    pub fn from_probabilities(n: u32, p_hat: [f64; 8], denom: [u64; 2]) -> Self {
        let p = descendants_from_vector(&p_hat);
        let t_hat = p.trace();
        let d_hat = p.det();
        let pi_hat = 0.5 * (t_hat + p.discriminant().sqrt());
        let mean = |q: &[f64]| q[1] + q[2] + 2.0 * q[0];
        Self {
            n,
            p_hat,
            denom,
            pi_hat,
            t_hat,
            d_hat,
            m_hat: [mean(&p_hat[..4]), mean(&p_hat[4..])],
        }
    }

    pub fn p_type(&self, i: usize) -> [f64; 4] {
        let mut q = [0.0; 4];
        q.copy_from_slice(&self.p_hat[4 * i..4 * i + 4]);
        q
    }
}

/// Pooled least-squares estimate from data up to generation `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub n: u32,
    /// `(a0, b0, a1, b1)`
    pub theta: [f64; 4],
    /// Block-diagonal normal matrix over mothers in generations `0..n`.
    pub sigma_n: [[f64; 4]; 4],
    /// Moment matrix of mothers with both daughters observed, same range.
    pub s01: [[f64; 2]; 2],
    /// Right-hand side of the normal equations.
    pub rhs: [f64; 4],
    /// Entry `l` holds the estimate from data up to generation `l`, or
    /// `None` when its normal equations are singular. Entry 0 is always
    /// `None`.
    pub per_generation: Vec<Option<[f64; 4]>>,
}

impl ThetaEstimate {
    pub fn block(&self, i: usize) -> [[f64; 2]; 2] {
        let o = 2 * i;
        [
            [self.sigma_n[o][o], self.sigma_n[o][o + 1]],
            [self.sigma_n[o + 1][o], self.sigma_n[o + 1][o + 1]],
        ]
    }
}

/// Empirical noise moments from residuals of mothers in generations `0..n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub n: u32,
    pub sigma2: [f64; 2],
    pub rho: f64,
    pub tau4: [f64; 2],
    pub nu2: f64,
    pub denom: [u64; 2],
    pub denom_01: u64,
}

// Value sums per mother generation, for daughters of each type.
const SX: usize = 0; // + i: sum of X_k
const SXX: usize = 2; // + i: sum of X_k^2
const SY: usize = 4; // + i: sum of X_{2k+i}
const SXY: usize = 6; // + i: sum of X_k X_{2k+i}
const SX01: usize = 8;
const SXX01: usize = 9;
const NSUM: usize = 10;

// Residual sums.
const R2: usize = 0; // + i
const R4: usize = 2; // + i
const R01: usize = 4;
const R0011: usize = 5;
const NRES: usize = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct GenerationSums {
    observed: u64,
    daughters: [u64; 2],
    pairs: u64,
    mothers: [u64; 2],
    patterns: [[u64; 4]; 2],
    sums: [f64; NSUM],
    resid: [f64; NRES],
}

/// Per-generation sufficient statistics of a forest.
///
/// Entry `g` describes the observed cells of generation `g` acting as
/// mothers: their daughter counts and patterns, value moments and residual
/// moments, with residuals computed from the estimate at index `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestSummary {
    depth: u32,
    has_values: bool,
    generations: Vec<GenerationSums>,
    theta_path: Vec<Option<[f64; 4]>>,
}

fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

fn tree_moments(tree: &ObservedTree, depth: u32) -> Vec<GenerationSums> {
    let mut out = vec![GenerationSums::default(); depth as usize + 1];
    let values = tree.values();
    for (idx, &k) in tree.ids().iter().enumerate() {
        let g = &mut out[generation(k) as usize];
        g.observed += 1;
        let own = (k % 2) as usize;
        g.mothers[own] += 1;
        let kids = tree.children_of(idx);
        g.patterns[own][pattern_index(kids[0].is_some(), kids[1].is_some())] += 1;
        for (i, kid) in kids.iter().enumerate() {
            if kid.is_some() {
                g.daughters[i] += 1;
            }
        }
        let both = kids[0].is_some() && kids[1].is_some();
        g.pairs += u64::from(both);
        if let Some(v) = values {
            let x = v[idx];
            for (i, kid) in kids.iter().enumerate() {
                if let Some(c) = *kid {
                    let y = v[c];
                    g.sums[SX + i] += x;
                    g.sums[SXX + i] += x * x;
                    g.sums[SY + i] += y;
                    g.sums[SXY + i] += x * y;
                }
            }
            if both {
                g.sums[SX01] += x;
                g.sums[SXX01] += x * x;
            }
        }
    }
    out
}

fn tree_residuals(tree: &ObservedTree, path: &[Option<[f64; 4]>], out: &mut [GenerationSums]) {
    let Some(v) = tree.values() else { return };
    for (idx, &k) in tree.ids().iter().enumerate() {
        let g = generation(k) as usize;
        let Some(Some(t)) = path.get(g) else { continue };
        let x = v[idx];
        let kids = tree.children_of(idx);
        let mut e = [0.0; 2];
        let r = &mut out[g].resid;
        for (i, kid) in kids.iter().enumerate() {
            if let Some(c) = *kid {
                e[i] = v[c] - t[2 * i] - t[2 * i + 1] * x;
                let e2 = e[i] * e[i];
                r[R2 + i] += e2;
                r[R4 + i] += e2 * e2;
            }
        }
        if kids[0].is_some() && kids[1].is_some() {
            r[R01] += e[0] * e[1];
            r[R0011] += e[0] * e[0] * e[1] * e[1];
        }
    }
}

/// Solves one 2x2 block `[[n, sx], [sx, sxx]] (a, b) = (y, xy)`.
fn solve_block(s: [[f64; 2]; 2], rhs: [f64; 2], which: CellType) -> Result<[f64; 2]> {
    let (a, b, d) = (s[0][0], s[0][1], s[1][1]);
    let det = a * d - b * b;
    let half_gap = 0.5 * (a - d);
    let lmax = 0.5 * (a + d) + half_gap.hypot(b);
    if !(det > 0.0) || !(lmax > 0.0) {
        return Err(Error::RankDeficient(which));
    }
    let lmin = det / lmax;
    if lmax / lmin > MAX_CONDITION {
        return Err(Error::RankDeficient(which));
    }
    Ok([(d * rhs[0] - b * rhs[1]) / det, (a * rhs[1] - b * rhs[0]) / det])
}

struct Cumulative {
    daughters: [u64; 2],
    pairs: u64,
    sums: [f64; NSUM],
    resid: [f64; NRES],
}

impl ForestSummary {
    pub fn new(forest: &ObservedForest) -> Self {
        let depth = forest.depth();
        let per_tree: Vec<Vec<GenerationSums>> =
            forest.trees().iter().map(|t| tree_moments(t, depth)).collect();
        let mut generations = combine(&per_tree, depth);
        let has_values = forest.has_values();
        let theta_path = if has_values {
            let path: Vec<Option<[f64; 4]>> = (0..=depth)
                .map(|l| {
                    if l == 0 {
                        return None;
                    }
                    let c = prefix(&generations, l);
                    solve_theta(&c).ok()
                })
                .collect();
            let mut per_tree = per_tree;
            for (tree, sums) in forest.trees().iter().zip(per_tree.iter_mut()) {
                tree_residuals(tree, &path, sums);
            }
            for g in 0..=depth as usize {
                for f in 0..NRES {
                    let mut vals: Vec<f64> = per_tree.iter().map(|t| t[g].resid[f]).collect();
                    generations[g].resid[f] = sorted_sum(&mut vals);
                }
            }
            path
        } else {
            vec![None; depth as usize + 1]
        };
        Self {
            depth,
            has_values,
            generations,
            theta_path,
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn has_values(&self) -> bool {
        self.has_values
    }

    fn check(&self, n: u32) -> Result<()> {
        if n > self.depth {
            return Err(Error::OutOfRange {
                requested: n,
                depth: self.depth,
            });
        }
        Ok(())
    }

    /// Counts at index `n`, with the conventions of [`ForestCounts`].
    pub fn counts(&self, n: u32) -> Result<ForestCounts> {
        self.check(n)?;
        let gens = &self.generations;
        let c = prefix(gens, n);
        Ok(ForestCounts {
            t_star: gens[..=n as usize].iter().map(|g| g.observed).sum(),
            g_star: gens[n as usize].observed,
            t_star_0: c.daughters[0],
            t_star_1: c.daughters[1],
            t_star_01: c.pairs,
        })
    }

    pub fn gw(&self, n: u32) -> Result<GwEstimate> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "reproduction estimates need n >= 2, got {n}"
            )));
        }
        self.check(n)?;
        let mut denom = [0u64; 2];
        let mut pat = [[0u64; 4]; 2];
        for g in &self.generations[1..n as usize] {
            for i in 0..2 {
                denom[i] += g.mothers[i];
                for l in 0..4 {
                    pat[i][l] += g.patterns[i][l];
                }
            }
        }
        if denom == [0, 0] {
            return Err(Error::ForestExtinct);
        }
        let mut p_hat = [0.0; 8];
        for i in 0..2 {
            if denom[i] > 0 {
                for l in 0..4 {
                    p_hat[4 * i + l] = pat[i][l] as f64 / denom[i] as f64;
                }
            }
        }
        Ok(GwEstimate::from_probabilities(n, p_hat, denom))
    }

    pub fn theta(&self, n: u32) -> Result<ThetaEstimate> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "least-squares estimates need n >= 2, got {n}"
            )));
        }
        self.check(n)?;
        if !self.has_values {
            return Err(Error::NoValues);
        }
        let c = prefix(&self.generations, n);
        let theta = solve_theta(&c)?;
        let s = &c.sums;
        let (n0, n1) = (c.daughters[0] as f64, c.daughters[1] as f64);
        let mut sigma_n = [[0.0; 4]; 4];
        sigma_n[0][0] = n0;
        sigma_n[0][1] = s[SX];
        sigma_n[1][0] = s[SX];
        sigma_n[1][1] = s[SXX];
        sigma_n[2][2] = n1;
        sigma_n[2][3] = s[SX + 1];
        sigma_n[3][2] = s[SX + 1];
        sigma_n[3][3] = s[SXX + 1];
        Ok(ThetaEstimate {
            n,
            theta,
            sigma_n,
            s01: [[c.pairs as f64, s[SX01]], [s[SX01], s[SXX01]]],
            rhs: [s[SY], s[SXY], s[SY + 1], s[SXY + 1]],
            per_generation: self.theta_path[..=n as usize].to_vec(),
        })
    }

    pub fn noise(&self, n: u32) -> Result<NoiseEstimate> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "noise estimates need n >= 2, got {n}"
            )));
        }
        self.check(n)?;
        if !self.has_values {
            return Err(Error::NoValues);
        }
        let c = prefix(&self.generations, n);
        for i in 0..2 {
            if c.daughters[i] == 0 {
                return Err(Error::InsufficientType(CellType::from_index(i)));
            }
        }
        if c.pairs == 0 {
            return Err(Error::InsufficientPairs);
        }
        let d = [c.daughters[0] as f64, c.daughters[1] as f64];
        let p = c.pairs as f64;
        let r = &c.resid;
        Ok(NoiseEstimate {
            n,
            sigma2: [r[R2] / d[0], r[R2 + 1] / d[1]],
            rho: r[R01] / p,
            tau4: [r[R4] / d[0], r[R4 + 1] / d[1]],
            nu2: r[R0011] / p,
            denom: c.daughters,
            denom_01: c.pairs,
        })
    }
}

fn combine(per_tree: &[Vec<GenerationSums>], depth: u32) -> Vec<GenerationSums> {
    let mut out = vec![GenerationSums::default(); depth as usize + 1];
    let mut vals = Vec::with_capacity(per_tree.len());
    for (g, slot) in out.iter_mut().enumerate() {
        for t in per_tree {
            let s = &t[g];
            slot.observed += s.observed;
            slot.pairs += s.pairs;
            for i in 0..2 {
                slot.daughters[i] += s.daughters[i];
                slot.mothers[i] += s.mothers[i];
                for l in 0..4 {
                    slot.patterns[i][l] += s.patterns[i][l];
                }
            }
        }
        for f in 0..NSUM {
            vals.clear();
            vals.extend(per_tree.iter().map(|t| t[g].sums[f]));
            slot.sums[f] = sorted_sum(&mut vals);
        }
    }
    out
}

/// Sums over mother generations `0..n`.
fn prefix(gens: &[GenerationSums], n: u32) -> Cumulative {
    let mut c = Cumulative {
        daughters: [0; 2],
        pairs: 0,
        sums: [0.0; NSUM],
        resid: [0.0; NRES],
    };
    for g in &gens[..n as usize] {
        c.daughters[0] += g.daughters[0];
        c.daughters[1] += g.daughters[1];
        c.pairs += g.pairs;
        for f in 0..NSUM {
            c.sums[f] += g.sums[f];
        }
        for f in 0..NRES {
            c.resid[f] += g.resid[f];
        }
    }
    c
}

fn solve_theta(c: &Cumulative) -> Result<[f64; 4]> {
    let s = &c.sums;
    let mut theta = [0.0; 4];
    for i in 0..2 {
        let block = [[c.daughters[i] as f64, s[SX + i]], [s[SX + i], s[SXX + i]]];
        let ab = solve_block(block, [s[SY + i], s[SXY + i]], CellType::from_index(i))?;
        theta[2 * i] = ab[0];
        theta[2 * i + 1] = ab[1];
    }
    Ok(theta)
}

pub fn estimate_gw(forest: &ObservedForest, n: u32) -> Result<GwEstimate> {
    forest.check_generation(n)?;
    ForestSummary::new(forest).gw(n)
}

pub fn estimate_theta(forest: &ObservedForest, n: u32) -> Result<ThetaEstimate> {
    forest.check_generation(n)?;
    ForestSummary::new(forest).theta(n)
}

pub fn estimate_noise(forest: &ObservedForest, n: u32) -> Result<NoiseEstimate> {
    forest.check_generation(n)?;
    ForestSummary::new(forest).noise(n)
}

/// Residual of every observed cell, aligned with each tree's cell order.
///
/// The daughters of a mother in generation `l` use `per_generation[l]`; a
/// `None` entry gives zero residuals. The root has residual 0.
pub fn residuals(forest: &ObservedForest, per_generation: &[Option<[f64; 4]>]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(forest.m());
    for tree in forest.trees() {
        let values = tree.values().ok_or(Error::NoValues)?;
        let mut r = vec![0.0; tree.len()];
        for (idx, &k) in tree.ids().iter().enumerate() {
            let kids = tree.children_of(idx);
            if kids == [None, None] {
                continue;
            }
            let g = generation(k);
            let t = per_generation.get(g as usize).ok_or(Error::MissingGeneration(g))?;
            let Some(t) = t else { continue };
            for (i, kid) in kids.iter().enumerate() {
                if let Some(c) = *kid {
                    r[c] = values[c] - t[2 * i] - t[2 * i + 1] * values[idx];
                }
            }
        }
        out.push(r);
    }
    Ok(out)
}
