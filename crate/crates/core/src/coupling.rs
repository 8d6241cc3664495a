//! Block coupling of walk increments with Gaussian increments.
//!
//! A [`BlockCoupler`] pairs the exact B-step sum of the walk with a centred
//! Gaussian vector of covariance B·I. The pairing is an entropic optimal
//! transport plan, for quadratic cost, between the walk-sum pmf and the
//! Gaussian discretized on unit lattice cells. A block is drawn as
//! follows. The walk sum comes from its exact pmf. The Gaussian cell comes
//! from the plan's row conditional. The continuous Gaussian value is drawn
//! inside the cell from the truncated normal, which makes its marginal
//! exactly N(0, B·I) up to the plan's marginal defect. Inside a block the
//! walk is a bridge with the drawn sum and the Gaussian path a Brownian
//! bridge.
//!
//! This is a concrete coupler, not the optimal-rate construction: the
//! per-block error stays O(1), so D(n) still grows like √n for n ≫ B², only
//! with a smaller constant as B grows.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Site;
use crate::rng::stream;
use crate::special::{normal_cdf, normal_quantile, normal_sf};
use crate::stats::{line_fit, Moments};
use crate::stepdist::{StepLaw, StepSampler};

/// Largest supported block size.
pub const MAX_BLOCK: usize = 256;
/// Required marginal accuracy of the transport plan (total variation).
pub const MARGINAL_TOL: f64 = 1e-9;
/// Cells with mass below this are dropped from either marginal.
pub const SUPPORT_THRESHOLD: f64 = 1e-17;
const SINKHORN_CAP: usize = 20_000;
const ETA_START: f64 = 2.0;
const ETA_MIN: f64 = 1.0 / 64.0;
/// Unconditional attempts before the walk bridge switches to exact
/// dynamic-programming sampling.
const REJECTION_CAP: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("iterative scaling did not reach marginal tolerance {tol:e} (defect {defect:.3e} at eta {eta})")]
    NotConverged { eta: f64, defect: f64, tol: f64 },
    #[error("block size {0} unsupported (powers of two up to 256)")]
    SupportTooLarge(usize),
}

/// A probability table on the box |x|_∞ ≤ r, stored row-major as
/// values[(x1 + r) * side + (x2 + r)].
#[derive(Debug, Clone, PartialEq)]
struct BoxPmf {
    r: i64,
    values: Vec<f64>,
}

impl BoxPmf {
    fn side(&self) -> usize {
        (2 * self.r + 1) as usize
    }

    fn get(&self, s: Site) -> f64 {
        if s.sup_norm() > self.r {
            return 0.0;
        }
        self.values[((s.x + self.r) as usize) * self.side() + (s.y + self.r) as usize]
    }

    fn site(&self, idx: usize) -> Site {
        let side = self.side();
        Site::new((idx / side) as i64 - self.r, (idx % side) as i64 - self.r)
    }

    fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn reach(m: usize) -> i64 {
    ((2 * m) as i64).min((8.5 * (m as f64).sqrt()).ceil() as i64 + 2)
}

/// q_0, …, q_{m_max} on boxes of half-width `reach(m)`; mass pushed beyond
/// a box is dropped.
fn step_pmfs(law: &StepLaw, m_max: usize) -> Vec<BoxPmf> {
    let mut out = vec![BoxPmf { r: 0, values: vec![1.0] }];
    for m in 1..=m_max {
        let prev = &out[m - 1];
        let r = reach(m);
        let side = (2 * r + 1) as usize;
        let mut values = vec![0.0; side * side];
        for (idx, &p) in prev.values.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = prev.site(idx);
            for e in law.entries() {
                let t = s + e.step;
                if t.sup_norm() <= r {
                    values[((t.x + r) as usize) * side + (t.y + r) as usize] += p * e.prob;
                }
            }
        }
        out.push(BoxPmf { r, values });
    }
    out
}

/// Construction diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplerDiagnostics {
    pub block: usize,
    pub eta: f64,
    pub iterations: usize,
    /// E|ΔX - c(ΔY)|² under the plan, with c the Gaussian cell centre.
    pub transport_cost: f64,
    /// Total variation between the sampled walk marginal and the exact B-step pmf.
    pub walk_defect: f64,
    /// Total variation between the plan's Gaussian marginal and the discretized Gaussian.
    pub gauss_defect: f64,
    /// η values tried, largest first; the last converged one is used.
    pub eta_tried: Vec<f64>,
}

/// A one-dimensional banded Gibbs kernel between walk coordinates
/// -ra..=ra and Gaussian coordinates -rb..=rb.
#[derive(Debug, Clone)]
struct Kernel1 {
    ra: i64,
    rb: i64,
    band: i64,
    /// k[d + band] = exp(-d²/η) for |d| ≤ band
    k: Vec<f64>,
}

impl Kernel1 {
    fn new(ra: i64, rb: i64, eta: f64) -> Self {
        let band = (700.0 * eta).sqrt().floor() as i64;
        let k = (-band..=band).map(|d| (-((d * d) as f64) / eta).exp()).collect();
        Kernel1 { ra, rb, band, k }
    }

    /// Range of Gaussian indices within the band of walk coordinate x.
    fn cols(&self, x: i64) -> std::ops::RangeInclusive<i64> {
        (x - self.band).max(-self.rb)..=(x + self.band).min(self.rb)
    }

    fn rows(&self, y: i64) -> std::ops::RangeInclusive<i64> {
        (y - self.band).max(-self.ra)..=(y + self.band).min(self.ra)
    }

    #[inline]
    fn at(&self, x: i64, y: i64) -> f64 {
        self.k[(y - x + self.band) as usize]
    }

    /// (K V Kᵀ) for V on the Gaussian grid, returned on the walk grid.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (na, nb) = ((2 * self.ra + 1) as usize, (2 * self.rb + 1) as usize);
        // first coordinate: t[x1][y2] = Σ_{y1} k(x1, y1) v[y1][y2]
        let mut t = vec![0.0; na * nb];
        for x1 in -self.ra..=self.ra {
            let row = &mut t[((x1 + self.ra) as usize) * nb..][..nb];
            for y1 in self.cols(x1) {
                let kk = self.at(x1, y1);
                let src = &v[((y1 + self.rb) as usize) * nb..][..nb];
                for (r, s) in row.iter_mut().zip(src) {
                    *r += kk * s;
                }
            }
        }
        let mut out = vec![0.0; na * na];
        for x1 in 0..na {
            let src = &t[x1 * nb..][..nb];
            let dst = &mut out[x1 * na..][..na];
            for x2 in -self.ra..=self.ra {
                let mut s = 0.0;
                for y2 in self.cols(x2) {
                    s += self.at(x2, y2) * src[(y2 + self.rb) as usize];
                }
                dst[(x2 + self.ra) as usize] = s;
            }
        }
        out
    }

    /// (Kᵀ U K) for U on the walk grid, returned on the Gaussian grid.
    fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        let (na, nb) = ((2 * self.ra + 1) as usize, (2 * self.rb + 1) as usize);
        let mut t = vec![0.0; nb * na];
        for y1 in -self.rb..=self.rb {
            let row = &mut t[((y1 + self.rb) as usize) * na..][..na];
            for x1 in self.rows(y1) {
                let kk = self.at(x1, y1);
                let src = &u[((x1 + self.ra) as usize) * na..][..na];
                for (r, s) in row.iter_mut().zip(src) {
                    *r += kk * s;
                }
            }
        }
        let mut out = vec![0.0; nb * nb];
        for y1 in 0..nb {
            let src = &t[y1 * na..][..na];
            let dst = &mut out[y1 * nb..][..nb];
            for y2 in -self.rb..=self.rb {
                let mut s = 0.0;
                for x2 in self.rows(y2) {
                    s += self.at(x2, y2) * src[(x2 + self.ra) as usize];
                }
                dst[(y2 + self.rb) as usize] = s;
            }
        }
        out
    }
}

struct SinkhornOutcome {
    v: Vec<f64>,
    iterations: usize,
    defect: f64,
}

fn sinkhorn(a: &BoxPmf, b: &BoxPmf, kernel: &Kernel1) -> Option<SinkhornOutcome> {
    let mut v = vec![1.0; b.values.len()];
    let mut u = vec![0.0; a.values.len()];
    for it in 1..=SINKHORN_CAP {
        let kv = kernel.apply(&v);
        for ((ui, &ai), &k) in u.iter_mut().zip(&a.values).zip(&kv) {
            *ui = if ai == 0.0 { 0.0 } else { ai / k };
        }
        let ktu = kernel.apply_t(&u);
        for ((vi, &bi), &k) in v.iter_mut().zip(&b.values).zip(&ktu) {
            *vi = if bi == 0.0 { 0.0 } else { bi / k };
        }
        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            return None;
        }
        // columns are exact after the v-update; measure the row defect
        let kv = kernel.apply(&v);
        let defect: f64 = u.iter().zip(&kv).zip(&a.values).map(|((ui, k), ai)| (ui * k - ai).abs()).sum();
        if !defect.is_finite() {
            return None;
        }
        if defect < 0.1 * MARGINAL_TOL {
            return Some(SinkhornOutcome { v, iterations: it, defect });
        }
    }
    None
}

/// A sampleable coupling of one B-step walk sum with N(0, B·I).
pub struct BlockCoupler {
    law: StepLaw,
    block: usize,
    walk: BoxPmf,
    gauss: BoxPmf,
    kernel: Kernel1,
    v: Vec<f64>,
    walk_alias: WeightedAliasIndex<f64>,
    walk_support: Vec<usize>,
    sampler: StepSampler,
    bridge_tables: OnceLock<Vec<BoxPmf>>,
    pub diagnostics: CouplerDiagnostics,
}

impl std::fmt::Debug for BlockCoupler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockCoupler").field("block", &self.block).field("diagnostics", &self.diagnostics).finish()
    }
}

/// Discretized N(0, B·I) on unit cells centred at lattice points.
fn gaussian_cells(block: usize) -> BoxPmf {
    let sd = (block as f64).sqrt();
    let r = (8.5 * sd).ceil() as i64 + 1;
    let one: Vec<f64> = (-r..=r)
        .map(|y| {
            let (lo, hi) = ((y as f64 - 0.5) / sd, (y as f64 + 0.5) / sd);
            if lo > 0.0 {
                normal_sf(lo) - normal_sf(hi)
            } else {
                normal_cdf(hi) - normal_cdf(lo)
            }
        })
        .collect();
    let mut values = Vec::with_capacity(one.len() * one.len());
    for a in &one {
        for b in &one {
            values.push(a * b);
        }
    }
    BoxPmf { r, values }
}

fn threshold(p: &mut BoxPmf) -> f64 {
    let mut dropped = 0.0;
    for v in &mut p.values {
        if *v < SUPPORT_THRESHOLD {
            dropped += *v;
            *v = 0.0;
        }
    }
    let total = p.total();
    p.values.iter_mut().for_each(|v| *v /= total);
    dropped
}

/// Build the coupler for block size B.
pub fn build_block_coupler(law: &StepLaw, block: usize) -> Result<BlockCoupler, CouplingError> {
    if !block.is_power_of_two() || block > MAX_BLOCK {
        return Err(CouplingError::SupportTooLarge(block));
    }
    let pmfs = step_pmfs(law, block);
    let mut walk = pmfs[block].clone();
    let truncated = 1.0 - walk.total();
    let walk_drop = threshold(&mut walk) + truncated.max(0.0);
    let mut gauss = gaussian_cells(block);
    let gauss_cells_total = gauss.total();
    let gauss_drop = threshold(&mut gauss) + (1.0 - gauss_cells_total).max(0.0);

    let mut eta = ETA_START;
    let mut best: Option<(f64, Kernel1, SinkhornOutcome)> = None;
    let mut tried = Vec::new();
    let mut last_defect = f64::INFINITY;
    while eta >= ETA_MIN {
        tried.push(eta);
        let kernel = Kernel1::new(walk.r, gauss.r, eta);
        match sinkhorn(&walk, &gauss, &kernel) {
            Some(out) => {
                best = Some((eta, kernel, out));
                eta /= 2.0;
            }
            None => {
                last_defect = f64::NAN;
                break;
            }
        }
    }
    let (eta, kernel, out) = best.ok_or(CouplingError::NotConverged { eta: ETA_START, defect: last_defect, tol: MARGINAL_TOL })?;

    // plan marginal on the Gaussian side, with rows normalized to the walk pmf
    let kv = kernel.apply(&out.v);
    let row_scale: Vec<f64> = walk.values.iter().zip(&kv).map(|(&a, &k)| if a == 0.0 { 0.0 } else { a / k }).collect();
    let col = kernel.apply_t(&row_scale);
    let gauss_marg: Vec<f64> = col.iter().zip(&out.v).map(|(c, v)| c * v).collect();
    let plan_defect: f64 = 0.5 * gauss_marg.iter().zip(&gauss.values).map(|(m, g)| (m - g).abs()).sum::<f64>();

    // transport cost Σ π(x, y)|x - y|² with π = row_scale(x) K(x, y) v(y)
    let mut cost = 0.0;
    let nb = gauss.side();
    for (ix, &rs) in row_scale.iter().enumerate() {
        if rs == 0.0 {
            continue;
        }
        let x = walk.site(ix);
        for y1 in kernel.cols(x.x) {
            let k1 = kernel.at(x.x, y1);
            for y2 in kernel.cols(x.y) {
                let w = rs * k1 * kernel.at(x.y, y2) * out.v[((y1 + gauss.r) as usize) * nb + (y2 + gauss.r) as usize];
                cost += w * (((x.x - y1).pow(2) + (x.y - y2).pow(2)) as f64);
            }
        }
    }

    let walk_support: Vec<usize> = (0..walk.values.len()).filter(|&i| walk.values[i] > 0.0).collect();
    let weights: Vec<f64> = walk_support.iter().map(|&i| walk.values[i]).collect();
    let walk_alias = WeightedAliasIndex::new(weights).expect("positive weights");
    let diagnostics = CouplerDiagnostics {
        block,
        eta,
        iterations: out.iterations,
        transport_cost: cost,
        walk_defect: 0.5 * walk_drop,
        gauss_defect: plan_defect + 0.5 * gauss_drop,
        eta_tried: tried,
    };
    let _ = out.defect;
    Ok(BlockCoupler {
        law: law.clone(),
        block,
        walk,
        gauss,
        kernel,
        v: out.v,
        walk_alias,
        walk_support,
        sampler: StepSampler::new(law),
        bridge_tables: OnceLock::from(pmfs),
        diagnostics,
    })
}

/// One coupled block: the walk sum and the continuous Gaussian sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDraw {
    pub walk: Site,
    pub gauss: [f64; 2],
}

/// Truncated N(0, σ²) on [lo, hi].
fn truncated_normal<R: Rng + ?Sized>(lo: f64, hi: f64, sd: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let (a, b) = (lo / sd, hi / sd);
    let z = if a > 0.0 {
        let (sa, sb) = (normal_sf(a), normal_sf(b));
        -normal_quantile(sa - u * (sa - sb))
    } else {
        let (ca, cb) = (normal_cdf(a), normal_cdf(b));
        normal_quantile(ca + u * (cb - ca))
    };
    (z * sd).clamp(lo, hi)
}

impl BlockCoupler {
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn law(&self) -> &StepLaw {
        &self.law
    }

    /// Exact B-step pmf (after support thresholding) at s.
    pub fn walk_pmf(&self, s: Site) -> f64 {
        self.walk.get(s)
    }

    /// Discretized Gaussian cell probability at s.
    pub fn gauss_cell_pmf(&self, s: Site) -> f64 {
        self.gauss.get(s)
    }

    pub fn walk_sites(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.walk_support.iter().map(|&i| (self.walk.site(i), self.walk.values[i]))
    }

    /// Draw one coupled block.
    pub fn sample_block<R: Rng + ?Sized>(&self, rng: &mut R) -> BlockDraw {
        let x = self.walk.site(self.walk_support[self.walk_alias.sample(rng)]);
        let nb = self.gauss.side();
        let (r1, r2) = (self.kernel.cols(x.x), self.kernel.cols(x.y));
        let mut total = 0.0;
        let mut weights = Vec::with_capacity(r1.clone().count() * r2.clone().count());
        for y1 in r1.clone() {
            let k1 = self.kernel.at(x.x, y1);
            for y2 in r2.clone() {
                let w = k1 * self.kernel.at(x.y, y2) * self.v[((y1 + self.gauss.r) as usize) * nb + (y2 + self.gauss.r) as usize];
                total += w;
                weights.push(w);
            }
        }
        let mut target = rng.random::<f64>() * total;
        let width = r2.clone().count();
        let mut pick = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        let y1 = *r1.start() + (pick / width) as i64;
        let y2 = *r2.start() + (pick % width) as i64;
        let sd = (self.block as f64).sqrt();
        let g1 = truncated_normal(y1 as f64 - 0.5, y1 as f64 + 0.5, sd, rng);
        let g2 = truncated_normal(y2 as f64 - 0.5, y2 as f64 + 0.5, sd, rng);
        BlockDraw { walk: x, gauss: [g1, g2] }
    }

    /// B walk steps with the given sum. Tries unconditional paths first and
    /// falls back to exact sequential sampling from q_{B-j}(target - S_j).
    /// Returns the steps and whether the fallback was used.
    pub fn walk_bridge<R: Rng + ?Sized>(&self, sum: Site, rng: &mut R) -> (Vec<Site>, bool) {
        let b = self.block;
        let mut steps = Vec::with_capacity(b);
        for _ in 0..REJECTION_CAP {
            steps.clear();
            let mut s = Site::ORIGIN;
            for _ in 0..b {
                let v = self.sampler.sample(rng);
                s += v;
                steps.push(v);
            }
            if s == sum {
                return (steps, false);
            }
        }
        let tables = self.bridge_tables.get_or_init(|| step_pmfs(&self.law, b));
        steps.clear();
        let mut s = Site::ORIGIN;
        for j in 0..b {
            let rest = &tables[b - j - 1];
            let here = sum - s;
            let mut w: Vec<f64> = self.law.entries().iter().map(|e| e.prob * rest.get(here - e.step)).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            let mut u: f64 = rng.random();
            let mut k = w.len() - 1;
            for (i, &p) in w.iter().enumerate() {
                if u < p {
                    k = i;
                    break;
                }
                u -= p;
            }
            let v = self.law.entries()[k].step;
            s += v;
            steps.push(v);
        }
        (steps, true)
    }

    /// B Gaussian increments with the given sum: Z_i - mean(Z) + sum/B.
    pub fn gauss_bridge<R: Rng + ?Sized>(&self, sum: [f64; 2], rng: &mut R) -> Vec<[f64; 2]> {
        let b = self.block;
        let z: Vec<[f64; 2]> = (0..b).map(|_| [StandardNormal.sample(rng), StandardNormal.sample(rng)]).collect();
        let mean = z.iter().fold([0.0, 0.0], |m, v| [m[0] + v[0] / b as f64, m[1] + v[1] / b as f64]);
        z.iter()
            .map(|v| [v[0] - mean[0] + sum[0] / b as f64, v[1] - mean[1] + sum[1] / b as f64])
            .collect()
    }
}

/// Coupled increments over a run of blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub walk: Vec<Site>,
    pub gauss: Vec<[f64; 2]>,
    pub blocks: Vec<BlockDraw>,
    pub bridge_fallbacks: usize,
}

/// `n_blocks` i.i.d. coupled blocks, refined to unit steps.
pub fn sample_coupled(coupler: &BlockCoupler, n_blocks: usize, seed: u64) -> CoupledPaths {
    sample_coupled_stream(coupler, n_blocks, seed, 0)
}

pub fn sample_coupled_stream(coupler: &BlockCoupler, n_blocks: usize, seed: u64, index: u64) -> CoupledPaths {
    let mut rng = stream(seed, index);
    let b = coupler.block;
    let mut out = CoupledPaths {
        walk: Vec::with_capacity(n_blocks * b),
        gauss: Vec::with_capacity(n_blocks * b),
        blocks: Vec::with_capacity(n_blocks),
        bridge_fallbacks: 0,
    };
    for _ in 0..n_blocks {
        let d = coupler.sample_block(&mut rng);
        let (steps, fell_back) = if b == 1 { (vec![d.walk], false) } else { coupler.walk_bridge(d.walk, &mut rng) };
        out.bridge_fallbacks += fell_back as usize;
        out.walk.extend(steps);
        if b == 1 {
            out.gauss.push(d.gauss);
        } else {
            out.gauss.extend(coupler.gauss_bridge(d.gauss, &mut rng));
        }
        out.blocks.push(d);
    }
    out
}

/// D(n) estimates and the fitted growth exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingErrorStats {
    pub block: usize,
    pub n_values: Vec<usize>,
    /// RMS of max_{k ≤ n} |Σ_{i ≤ k}(X_i - Y_i)|.
    pub d_rms: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Least-squares slope of log D against log n.
    pub exponent: f64,
    /// Standard error of the slope from independent replica batches.
    pub exponent_se: f64,
    pub replicas: usize,
}

const BATCHES: usize = 20;

/// Monte Carlo D(n) for dyadic n (multiples of the block size).
pub fn coupling_error_stats(coupler: &BlockCoupler, n_values: &[usize], replicas: usize, seed: u64) -> CouplingErrorStats {
    assert!(!n_values.is_empty() && n_values.windows(2).all(|w| w[1] > w[0]));
    let b = coupler.block;
    let n_max = *n_values.last().unwrap();
    let n_blocks = n_max.div_ceil(b);
    // per replica: squared running maximum at each n
    let per_rep: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let p = sample_coupled_stream(coupler, n_blocks, seed, r);
            let mut diff = [0.0f64, 0.0];
            let mut running: f64 = 0.0;
            let mut out = Vec::with_capacity(n_values.len());
            let mut next = 0;
            for (i, (x, y)) in p.walk.iter().zip(&p.gauss).enumerate() {
                diff[0] += x.x as f64 - y[0];
                diff[1] += x.y as f64 - y[1];
                running = running.max(diff[0].hypot(diff[1]));
                while next < n_values.len() && n_values[next] == i + 1 {
                    out.push(running * running);
                    next += 1;
                }
            }
            out
        })
        .collect();
    let summarize = |reps: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        let mut d = Vec::new();
        let mut se = Vec::new();
        for j in 0..n_values.len() {
            let m: Moments = reps.iter().map(|r| r[j]).collect();
            let root = m.mean.sqrt();
            d.push(root);
            se.push(m.std_error() / (2.0 * root));
        }
        (d, se)
    };
    let (d_rms, stderr) = summarize(&per_rep);
    let lx: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
    let slope_of = |d: &[f64]| line_fit(&lx, &d.iter().map(|v| v.ln()).collect::<Vec<_>>(), None).slope;
    let exponent = slope_of(&d_rms);
    let batch = replicas / BATCHES;
    let exponent_se = if batch >= 2 {
        let slopes: Moments = per_rep.chunks(batch).take(BATCHES).map(|c| slope_of(&summarize(c).0)).collect();
        slopes.std_error()
    } else {
        f64::NAN
    };
    CouplingErrorStats { block: b, n_values: n_values.to_vec(), d_rms, stderr, exponent, exponent_se, replicas }
}

/// CSV with columns `B, n, D_rms, stderr, exponent_fit`.
pub fn write_couple_csv<W: std::io::Write>(out: W, stats: &[CouplingErrorStats]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["B", "n", "D_rms", "stderr", "exponent_fit"])?;
    for s in stats {
        for (j, &n) in s.n_values.iter().enumerate() {
            w.write_record([s.block.to_string(), n.to_string(), s.d_rms[j].to_string(), s.stderr[j].to_string(), s.exponent.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{chi_square_gof, ks_one_sample};

    fn law() -> StepLaw {
        StepLaw::reference()
    }

    #[test]
    fn block_pmf_matches_convolution_identity() {
        let p = step_pmfs(&law(), 4);
        for m in 0..=4 {
            assert!((p[m].total() - 1.0).abs() < 1e-14);
        }
        // variance per coordinate = m
        let var: f64 = p[4].values.iter().enumerate().map(|(i, v)| v * (p[4].site(i).x as f64).powi(2)).sum();
        assert!((var - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_step_coupler() {
        let c = build_block_coupler(&law(), 1).unwrap();
        let d = &c.diagnostics;
        assert!(d.transport_cost >= 0.0);
        assert!(d.walk_defect < MARGINAL_TOL && d.gauss_defect < MARGINAL_TOL, "{d:?}");
        assert!(matches!(build_block_coupler(&law(), 3), Err(CouplingError::SupportTooLarge(3))));
    }

    #[test]
    fn marginals_pass_goodness_of_fit() {
        for b in [1usize, 16] {
            let c = build_block_coupler(&law(), b).unwrap();
            let mut rng = stream(90 + b as u64, 0);
            let draws: Vec<BlockDraw> = (0..100_000).map(|_| c.sample_block(&mut rng)).collect();
            let sites: Vec<(Site, f64)> = c.walk_sites().collect();
            let index: std::collections::HashMap<Site, usize> = sites.iter().enumerate().map(|(i, s)| (s.0, i)).collect();
            let mut counts = vec![0u64; sites.len()];
            for d in &draws {
                counts[index[&d.walk]] += 1;
            }
            let probs: Vec<f64> = sites.iter().map(|s| s.1).collect();
            let chi = chi_square_gof(&counts, &probs, 5.0);
            assert!(chi.p_value > 0.01, "B {b}: {chi:?}");
            let sd = (b as f64).sqrt();
            for coord in 0..2 {
                let xs: Vec<f64> = draws.iter().map(|d| d.gauss[coord] / sd).collect();
                let ks = ks_one_sample(&xs, normal_cdf);
                assert!(ks.p_value > 0.01, "B {b} coord {coord}: {ks:?}");
            }
        }
    }

    #[test]
    fn refined_paths_respect_block_sums() {
        let c = build_block_coupler(&law(), 16).unwrap();
        let p = sample_coupled(&c, 200, 5);
        assert_eq!(p, sample_coupled(&c, 200, 5));
        for (j, d) in p.blocks.iter().enumerate() {
            let s = p.walk[j * 16..(j + 1) * 16].iter().fold(Site::ORIGIN, |a, &b| a + b);
            assert_eq!(s, d.walk);
            let g = p.gauss[j * 16..(j + 1) * 16].iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
            assert!((g[0] - d.gauss[0]).abs() < 1e-9 && (g[1] - d.gauss[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn refined_walk_steps_follow_the_law() {
        let c = build_block_coupler(&law(), 16).unwrap();
        let p = sample_coupled(&c, 62_500, 7);
        assert_eq!(p.walk.len(), 1_000_000);
        let mut counts = vec![0u64; law().entries().len()];
        for s in &p.walk {
            counts[law().entries().iter().position(|e| e.step == *s).unwrap()] += 1;
        }
        let probs: Vec<f64> = law().entries().iter().map(|e| e.prob).collect();
        let chi = chi_square_gof(&counts, &probs, 5.0);
        assert!(chi.p_value > 0.01, "{chi:?}");
    }

    #[test]
    fn error_growth() {
        let ns: Vec<usize> = (6..=12).map(|j| 1usize << j).collect();
        let c1 = build_block_coupler(&law(), 1).unwrap();
        let s1 = coupling_error_stats(&c1, &ns, 400, 3);
        assert!(s1.d_rms.windows(2).all(|w| w[1] >= w[0]));
        assert!((s1.exponent - 0.5).abs() < 0.08, "{s1:?}");
        for (d, n) in s1.d_rms.iter().zip(&ns) {
            assert!(d / (*n as f64).sqrt() < 3.0);
        }
        let c64 = build_block_coupler(&law(), 64).unwrap();
        let s64 = coupling_error_stats(&c64, &ns, 400, 3);
        assert!(s64.exponent < s1.exponent, "{} vs {}", s64.exponent, s1.exponent);
        // per-step squared block error shrinks with B
        assert!(c64.diagnostics.transport_cost / 64.0 < c1.diagnostics.transport_cost);
    }
}
