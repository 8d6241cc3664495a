//! Random walk paths, range counting and intersection local times.
//!
//! Two index conventions coexist. The range R(n) collects the sites
//! S_1, …, S_n, while occupation counts and the intersection local times
//! I_k(n) run over times 0 ≤ i < n.

use std::io::Write;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Site;
use crate::rng::stream;
use crate::special::{binomial_big, binomial_f64};
use crate::stepdist::{StepLaw, StepSampler};

/// Largest n accepted by the exhaustive tuple enumerations.
pub const BRUTE_MAX_N: usize = 14;
/// Largest k accepted by the exhaustive tuple enumerations.
pub const BRUTE_MAX_K: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error("exhaustive enumeration refused for n = {n}, k = {k} (limits n <= 14, k <= 4)")]
    RefusedTooLarge { n: usize, k: usize },
    #[error("occupation map was built without visit times")]
    MissingTimes,
    #[error("expected {expected} offsets, got {got}")]
    OffsetCount { expected: usize, got: usize },
    #[error("k must be at least {min}, got {k}")]
    OrderTooSmall { k: usize, min: usize },
    #[error("horizon {n} exceeds path length {len}")]
    HorizonTooLong { n: usize, len: usize },
    #[error("shifted intersection count overflowed 128 bits")]
    Overflow,
}

/// Where a path's randomness came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream: u64,
}

/// A stored path S_0 = 0, S_1, …, S_n.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkSample {
    positions: Vec<Site>,
    law: StepLaw,
    seed: Option<SeedRecord>,
}

impl WalkSample {
    /// Build from explicit positions; the first must be the origin.
    pub fn from_positions(positions: Vec<Site>, law: StepLaw) -> Self {
        assert_eq!(positions.first(), Some(&Site::ORIGIN), "paths start at the origin");
        WalkSample { positions, law, seed: None }
    }

    /// Number of steps n.
    pub fn len(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn positions(&self) -> &[Site] {
        &self.positions
    }

    pub fn law(&self) -> &StepLaw {
        &self.law
    }

    pub fn seed(&self) -> Option<SeedRecord> {
        self.seed
    }

    fn check_horizon(&self, n: usize) -> Result<(), WalkError> {
        if n > self.len() {
            Err(WalkError::HorizonTooLong { n, len: self.len() })
        } else {
            Ok(())
        }
    }
}

/// Simulate n steps on replica stream 0 of `seed`.
pub fn simulate_walk(law: &StepLaw, n: usize, seed: u64) -> WalkSample {
    simulate_walk_stream(law, n, seed, 0)
}

/// Simulate n steps on replica stream `index` of `seed`.
pub fn simulate_walk_stream(law: &StepLaw, n: usize, seed: u64, index: u64) -> WalkSample {
    let sampler = StepSampler::new(law);
    let mut rng = stream(seed, index);
    let mut positions = Vec::with_capacity(n + 1);
    let mut s = Site::ORIGIN;
    positions.push(s);
    for _ in 0..n {
        s += sampler.sample(&mut rng);
        positions.push(s);
    }
    WalkSample { positions, law: law.clone(), seed: Some(SeedRecord { seed, stream: index }) }
}

/// |R(n)| = #{S_1, …, S_n}.
pub fn range_size(walk: &WalkSample, n: usize) -> usize {
    assert!(n <= walk.len(), "horizon beyond path");
    walk.positions[1..=n].iter().collect::<FxHashSet<_>>().len()
}

/// |R(m)| for every m = 0..=n.
pub fn range_profile(walk: &WalkSample) -> Vec<usize> {
    let mut seen = FxHashSet::default();
    let mut out = Vec::with_capacity(walk.positions.len());
    out.push(0);
    for s in &walk.positions[1..] {
        seen.insert(*s);
        out.push(seen.len());
    }
    out
}

const TILE_BITS: i64 = 6;
const TILE: i64 = 1 << TILE_BITS;
const TILE_WORDS: usize = (TILE * TILE / 64) as usize;

/// Set of visited sites stored as 64×64 bitmap tiles keyed by tile
/// coordinate. Reuses its allocation across [`RangeCounter::reset`].
#[derive(Debug, Default)]
pub struct RangeCounter {
    index: FxHashMap<(i64, i64), u32>,
    tiles: Vec<[u64; TILE_WORDS]>,
    used: usize,
    count: usize,
    last_key: Option<(i64, i64)>,
    last_tile: usize,
}

impl RangeCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        for t in &mut self.tiles[..self.used] {
            *t = [0; TILE_WORDS];
        }
        self.index.clear();
        self.used = 0;
        self.count = 0;
        self.last_key = None;
    }

    /// Number of distinct sites inserted.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Insert a site; returns true if it was new.
    #[inline]
    pub fn insert(&mut self, s: Site) -> bool {
        let key = (s.x >> TILE_BITS, s.y >> TILE_BITS);
        let tile = if self.last_key == Some(key) {
            self.last_tile
        } else {
            let t = match self.index.get(&key) {
                Some(&t) => t as usize,
                None => {
                    let t = self.used;
                    if t == self.tiles.len() {
                        self.tiles.push([0; TILE_WORDS]);
                    }
                    self.used += 1;
                    self.index.insert(key, t as u32);
                    t
                }
            };
            self.last_key = Some(key);
            self.last_tile = t;
            t
        };
        let bit = (((s.y & (TILE - 1)) << TILE_BITS) | (s.x & (TILE - 1))) as usize;
        let word = &mut self.tiles[tile][bit >> 6];
        let mask = 1u64 << (bit & 63);
        let fresh = *word & mask == 0;
        *word |= mask;
        self.count += fresh as usize;
        fresh
    }

    pub fn contains(&self, s: Site) -> bool {
        let key = (s.x >> TILE_BITS, s.y >> TILE_BITS);
        self.index.get(&key).is_some_and(|&t| {
            let bit = (((s.y & (TILE - 1)) << TILE_BITS) | (s.x & (TILE - 1))) as usize;
            self.tiles[t as usize][bit >> 6] & (1u64 << (bit & 63)) != 0
        })
    }
}

/// Streaming |R(n)| for each horizon in the increasing list `checkpoints`,
/// without storing the path.
pub fn streaming_range<R: Rng + ?Sized>(
    sampler: &StepSampler,
    checkpoints: &[usize],
    counter: &mut RangeCounter,
    rng: &mut R,
) -> Vec<usize> {
    counter.reset();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut s = Site::ORIGIN;
    let mut t = 0;
    for &c in checkpoints {
        assert!(c >= t, "checkpoints must be nondecreasing");
        while t < c {
            s += sampler.sample(rng);
            counter.insert(s);
            t += 1;
        }
        out.push(counter.len());
    }
    out
}

/// Visit counts ℓ_x over times 0 ≤ i < n, optionally with ordered visit times.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMap {
    counts: FxHashMap<Site, u64>,
    times: Option<Vec<Site>>,
    n: usize,
}

impl OccupationMap {
    /// Build directly from a list of sites occupied at times 0..n.
    pub fn from_sites(sites: &[Site], with_times: bool) -> Self {
        let mut counts = FxHashMap::default();
        for s in sites {
            *counts.entry(*s).or_insert(0) += 1;
        }
        OccupationMap { counts, times: with_times.then(|| sites.to_vec()), n: sites.len() }
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn count(&self, s: Site) -> u64 {
        self.counts.get(&s).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &FxHashMap<Site, u64> {
        &self.counts
    }

    /// Number of distinct sites among S_0, …, S_{n-1}.
    pub fn distinct_sites(&self) -> usize {
        self.counts.len()
    }

    pub fn has_times(&self) -> bool {
        self.times.is_some()
    }

    /// Ordered visit times of `s`, when retained.
    pub fn visit_times(&self, s: Site) -> Option<Vec<usize>> {
        let seq = self.times.as_ref()?;
        Some(seq.iter().enumerate().filter(|(_, x)| **x == s).map(|(i, _)| i).collect())
    }

    /// The site occupied at each time 0..n, when retained.
    pub fn sequence(&self) -> Option<&[Site]> {
        self.times.as_deref()
    }
}

/// Occupation counts over times 0 ≤ i < n.
pub fn occupation(walk: &WalkSample, n: usize) -> OccupationMap {
    walk.check_horizon(n).expect("horizon within path");
    OccupationMap::from_sites(&walk.positions[..n], false)
}

/// Occupation counts with the time-ordered site sequence retained, as
/// needed by [`shifted_ilt`].
pub fn occupation_with_times(walk: &WalkSample, n: usize) -> OccupationMap {
    walk.check_horizon(n).expect("horizon within path");
    OccupationMap::from_sites(&walk.positions[..n], true)
}

/// I_k(n) = Σ_x C(ℓ_x + k - 1, k).
pub fn ilt(occ: &OccupationMap, k: usize) -> BigUint {
    assert!(k >= 1, "k >= 1");
    let mut by_count: FxHashMap<u64, u64> = FxHashMap::default();
    for &l in occ.counts.values() {
        *by_count.entry(l).or_insert(0) += 1;
    }
    by_count
        .into_iter()
        .map(|(l, m)| binomial_big(l + k as u64 - 1, k as u64) * m)
        .sum()
}

/// I_k(n) as f64, for bulk statistics.
pub fn ilt_f64(occ: &OccupationMap, k: usize) -> f64 {
    occ.counts.values().map(|&l| binomial_f64(l + k as u64 - 1, k as u64)).sum()
}

fn check_brute(n: usize, k: usize) -> Result<(), WalkError> {
    if n > BRUTE_MAX_N || k > BRUTE_MAX_K {
        Err(WalkError::RefusedTooLarge { n, k })
    } else {
        Ok(())
    }
}

/// Visit every nondecreasing k-tuple 0 ≤ i_1 ≤ … ≤ i_k < n.
fn for_each_tuple(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if n == 0 {
        return;
    }
    let mut idx = vec![0usize; k];
    loop {
        f(&idx);
        let mut j = k;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if idx[j] + 1 < n {
                idx[j] += 1;
                let v = idx[j];
                idx[j + 1..].iter_mut().for_each(|x| *x = v);
                break;
            }
        }
    }
}

/// I_k(n) by direct enumeration of time tuples. Exponential cost.
pub fn ilt_brute(walk: &WalkSample, n: usize, k: usize) -> Result<BigUint, WalkError> {
    check_brute(n, k)?;
    walk.check_horizon(n)?;
    let s = &walk.positions;
    let mut total: u64 = 0;
    for_each_tuple(n, k, |t| {
        if t.windows(2).all(|w| s[w[0]] == s[w[1]]) {
            total += 1;
        }
    });
    Ok(BigUint::from(total))
}

/// Γ_{k,λ}(n) = Σ_{j=1}^k C(k-1, j-1) (-g)^{k-j} I_j(n), given I_1..I_k.
pub fn renorm_ilt(i_values: &[f64], k: usize, g_lambda: f64) -> f64 {
    assert!(k >= 1 && i_values.len() >= k, "need I_1..I_k");
    (1..=k)
        .map(|j| binomial_f64((k - 1) as u64, (j - 1) as u64) * (-g_lambda).powi((k - j) as i32) * i_values[j - 1])
        .sum()
}

/// Exact-rational version of [`renorm_ilt`].
pub fn renorm_ilt_exact(i_values: &[BigUint], k: usize, g_lambda: &BigRational) -> BigRational {
    assert!(k >= 1 && i_values.len() >= k, "need I_1..I_k");
    let mut acc = BigRational::zero();
    for j in 1..=k {
        let c = BigInt::from(binomial_big((k - 1) as u64, (j - 1) as u64));
        let mut term = BigRational::from_integer(c * BigInt::from(i_values[j - 1].clone()));
        for _ in 0..k - j {
            term *= -g_lambda.clone();
        }
        acc += term;
    }
    acc
}

/// Γ_{k,λ}(n) from its centred-product definition: the sum over
/// nondecreasing tuples of Π_j (δ(S_{i_j}, S_{i_{j+1}}) - g δ(i_j, i_{j+1})).
pub fn renorm_ilt_product_brute(
    walk: &WalkSample,
    n: usize,
    k: usize,
    g_lambda: &BigRational,
) -> Result<BigRational, WalkError> {
    check_brute(n, k)?;
    walk.check_horizon(n)?;
    let s = &walk.positions;
    let one = BigRational::one();
    let mut acc = BigRational::zero();
    for_each_tuple(n, k, |t| {
        let mut term = one.clone();
        for w in t.windows(2) {
            let mut f = if s[w[0]] == s[w[1]] { one.clone() } else { BigRational::zero() };
            if w[0] == w[1] {
                f -= g_lambda;
            }
            if f.is_zero() {
                return;
            }
            term *= f;
        }
        acc += term;
    });
    Ok(acc)
}

/// Ī_k(n, x) = Σ over nondecreasing tuples of Π_j δ(S_{i_j} - S_{i_{j-1}} - x_j)
/// for offsets x = (x_2, …, x_k). Dynamic program over time with running
/// per-site sums: g_1(i) = 1, g_j(i) = Σ_{i' ≤ i, S_{i'} = S_i - x_j} g_{j-1}(i').
pub fn shifted_ilt(occ: &OccupationMap, k: usize, x: &[Site]) -> Result<BigUint, WalkError> {
    let seq = occ.sequence().ok_or(WalkError::MissingTimes)?;
    shifted_ilt_sites(seq, k, x)
}

fn shifted_ilt_sites(seq: &[Site], k: usize, x: &[Site]) -> Result<BigUint, WalkError> {
    if k < 1 {
        return Err(WalkError::OrderTooSmall { k, min: 1 });
    }
    if x.len() != k - 1 {
        return Err(WalkError::OffsetCount { expected: k - 1, got: x.len() });
    }
    if k == 1 {
        return Ok(BigUint::from(seq.len()));
    }
    // running[j][site] = Σ_{i' seen so far, S_{i'} = site} g_j(i')
    let mut running: Vec<FxHashMap<Site, u128>> = vec![FxHashMap::default(); k - 1];
    let mut total: u128 = 0;
    let mut g = vec![0u128; k];
    for &s in seq {
        g[0] = 1;
        for j in 1..k {
            // add g_{j-1}(i) before reading so that i' = i is included
            let e = running[j - 1].entry(s).or_insert(0);
            *e = e.checked_add(g[j - 1]).ok_or(WalkError::Overflow)?;
            g[j] = running[j - 1].get(&(s - x[j - 1])).copied().unwrap_or(0);
        }
        total = total.checked_add(g[k - 1]).ok_or(WalkError::Overflow)?;
    }
    Ok(BigUint::from(total))
}

/// Ī_k(n, x) by exhaustive enumeration. Exponential cost.
pub fn shifted_ilt_brute(walk: &WalkSample, n: usize, k: usize, x: &[Site]) -> Result<BigUint, WalkError> {
    check_brute(n, k)?;
    walk.check_horizon(n)?;
    if x.len() + 1 != k {
        return Err(WalkError::OffsetCount { expected: k - 1, got: x.len() });
    }
    let s = &walk.positions;
    let mut total: u64 = 0;
    for_each_tuple(n, k, |t| {
        if t.windows(2).zip(x).all(|(w, &d)| s[w[1]] - s[w[0]] == d) {
            total += 1;
        }
    });
    Ok(BigUint::from(total))
}

/// Γ̄_{k,λ}(n, x) = Σ_{A ⊆ {2..k}} (-1)^{|A|} Π_{i∈A} G(x_i) Ī_{k-|A|}(n, x_{A^c}),
/// with lattice offsets x = (x_2, …, x_k) and `green` evaluating G_λ on Z².
pub fn shifted_renorm_ilt(
    occ: &OccupationMap,
    k: usize,
    x: &[Site],
    green: impl Fn(Site) -> f64,
) -> Result<f64, WalkError> {
    let seq = occ.sequence().ok_or(WalkError::MissingTimes)?;
    if k < 1 {
        return Err(WalkError::OrderTooSmall { k, min: 1 });
    }
    if x.len() != k - 1 {
        return Err(WalkError::OffsetCount { expected: k - 1, got: x.len() });
    }
    let gx: Vec<f64> = x.iter().map(|&v| green(v)).collect();
    let mut acc = 0.0;
    for mask in 0u32..(1 << x.len()) {
        let mut weight = 1.0;
        let mut rest = Vec::with_capacity(x.len());
        for (i, &v) in x.iter().enumerate() {
            if mask & (1 << i) != 0 {
                weight *= -gx[i];
            } else {
                rest.push(v);
            }
        }
        let ibar = shifted_ilt_sites(seq, rest.len() + 1, &rest)?;
        acc += weight * ibar.to_f64().unwrap_or(f64::INFINITY);
    }
    Ok(acc)
}

/// An exponential killing time ζ ~ Exp(1) and its lattice version
/// ζ_λ = ⌈ζ/λ⌉, geometric with P(ζ_λ > n) = e^{-λn}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KilledHorizon {
    pub lambda: f64,
    pub zeta: f64,
    pub zeta_lambda: u64,
}

impl KilledHorizon {
    pub fn from_zeta(lambda: f64, zeta: f64) -> Self {
        assert!(lambda > 0.0 && zeta >= 0.0);
        let zeta_lambda = ((zeta / lambda).ceil() as u64).max(1);
        KilledHorizon { lambda, zeta, zeta_lambda }
    }
}

pub fn sample_killed_horizon<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> KilledHorizon {
    assert!(lambda > 0.0 && lambda < 1.0, "0 < lambda < 1");
    let zeta: f64 = Exp1.sample(rng);
    KilledHorizon::from_zeta(lambda, zeta)
}

/// |R(ζ_λ)| = #{S_0, …, S_{ζ_λ - 1}}: the sites x with T_x < ζ_λ.
pub fn killed_range<R: Rng + ?Sized>(
    sampler: &StepSampler,
    lambda: f64,
    counter: &mut RangeCounter,
    rng: &mut R,
) -> (KilledHorizon, usize) {
    let h = sample_killed_horizon(lambda, rng);
    counter.reset();
    let mut s = Site::ORIGIN;
    counter.insert(s);
    for _ in 1..h.zeta_lambda {
        s += sampler.sample(rng);
        counter.insert(s);
    }
    (h, counter.len())
}

/// Whether T_x < ζ_λ, simulating only up to min(T_x, ζ_λ).
pub fn hits_before_killing<R: Rng + ?Sized>(sampler: &StepSampler, target: Site, lambda: f64, rng: &mut R) -> bool {
    let h = sample_killed_horizon(lambda, rng);
    let mut s = Site::ORIGIN;
    if s == target {
        return true;
    }
    for _ in 1..h.zeta_lambda {
        s += sampler.sample(rng);
        if s == target {
            return true;
        }
    }
    false
}

/// One row of the walk statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkStatsRow {
    pub seed: u64,
    pub n: usize,
    pub range: usize,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
    #[serde(rename = "I4")]
    pub i4: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
}

impl WalkStatsRow {
    /// Range, I_2..I_4 and Γ_{2..4,λ}(n) for one stored path.
    pub fn from_walk(walk: &WalkSample, n: usize, g_lambda: f64) -> Self {
        let occ = occupation(walk, n);
        let i: Vec<f64> = (1..=4).map(|k| ilt_f64(&occ, k)).collect();
        WalkStatsRow {
            seed: walk.seed.map_or(0, |s| s.seed),
            n,
            range: range_size(walk, n),
            i2: i[1],
            i3: i[2],
            i4: i[3],
            gamma2: renorm_ilt(&i, 2, g_lambda),
            gamma3: renorm_ilt(&i, 3, g_lambda),
            gamma4: renorm_ilt(&i, 4, g_lambda),
        }
    }
}

/// Write rows as CSV preceded by a `# lambda = …` line.
pub fn write_walk_csv<W: Write>(mut out: W, lambda: f64, g_lambda: f64, rows: &[WalkStatsRow]) -> std::io::Result<()> {
    writeln!(out, "# lambda = {lambda}, g_lambda = {g_lambda}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
