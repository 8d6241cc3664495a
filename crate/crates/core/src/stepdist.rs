//! Symmetric lattice step laws with identity covariance.
//!
//! A [`StepLaw`] is a finitely supported probability table on Z² that has
//! been checked for the hypotheses every other module relies on: symmetry,
//! unit covariance and strong aperiodicity (in Spitzer's sense, |φ(p)| < 1
//! away from 2πZ²).

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use num_integer::Integer;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Site;
use crate::special::{cos_remainder2, one_minus_cos};

const SUM_TOL: f64 = 1e-12;
const COV_TOL: f64 = 1e-12;

/// One support point of a step law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub step: Site,
    pub prob: f64,
    /// Exact probability as numerator/denominator when known.
    pub exact: Option<(u64, u64)>,
}

/// A hypothesis a candidate step law fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LawViolation {
    Empty,
    NonPositiveProb { step: Site, prob: f64 },
    ProbsDontSum { sum: f64 },
    NotSymmetric { step: Site, prob: f64, mirrored: f64 },
    CovarianceNotIdentity { matrix: [[f64; 2]; 2] },
    NotStronglyAperiodic { p: [f64; 2], phi: f64 },
}

impl fmt::Display for LawViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawViolation::Empty => write!(f, "no support points"),
            LawViolation::NonPositiveProb { step, prob } => {
                write!(f, "probability {prob} at {step} is not positive")
            }
            LawViolation::ProbsDontSum { sum } => write!(f, "probabilities sum to {sum}"),
            LawViolation::NotSymmetric { step, prob, mirrored } => write!(
                f,
                "P({step}) = {prob} but P(-{step}) = {mirrored}"
            ),
            LawViolation::CovarianceNotIdentity { matrix } => write!(
                f,
                "covariance [[{}, {}], [{}, {}]] is not the identity",
                matrix[0][0], matrix[0][1], matrix[1][0], matrix[1][1]
            ),
            LawViolation::NotStronglyAperiodic { p, phi } => write!(
                f,
                "not strongly aperiodic: phi({}, {}) = {phi}",
                p[0], p[1]
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum LawError {
    #[error("invalid step law: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<LawViolation>),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LawError {
    pub fn violations(&self) -> &[LawViolation] {
        match self {
            LawError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// A validated step law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLaw {
    entries: Vec<StepEntry>,
    moment_p: f64,
    covariance: [[f64; 2]; 2],
}

impl StepLaw {
    /// Validate `(step, probability)` pairs. Duplicate steps are merged.
    pub fn new(entries: &[(Site, f64)], moment_p: f64) -> Result<StepLaw, LawError> {
        let raw: Vec<StepEntry> = entries
            .iter()
            .map(|&(step, prob)| StepEntry { step, prob, exact: None })
            .collect();
        Self::from_entries(raw, moment_p)
    }

    /// Validate steps with exact rational probabilities `num/den`.
    pub fn from_rationals(entries: &[(Site, u64, u64)], moment_p: f64) -> Result<StepLaw, LawError> {
        let raw: Vec<StepEntry> = entries
            .iter()
            .map(|&(step, num, den)| StepEntry {
                step,
                prob: num as f64 / den as f64,
                exact: Some((num, den)),
            })
            .collect();
        Self::from_entries(raw, moment_p)
    }

    fn from_entries(raw: Vec<StepEntry>, moment_p: f64) -> Result<StepLaw, LawError> {
        let mut violations = Vec::new();
        if raw.is_empty() {
            return Err(LawError::Invalid(vec![LawViolation::Empty]));
        }
        let mut entries: Vec<StepEntry> = Vec::new();
        for e in raw {
            if !(e.prob > 0.0) {
                violations.push(LawViolation::NonPositiveProb { step: e.step, prob: e.prob });
                continue;
            }
            match entries.iter_mut().find(|x| x.step == e.step) {
                Some(x) => {
                    x.prob += e.prob;
                    x.exact = match (x.exact, e.exact) {
                        (Some((a, b)), Some((c, d))) => Some(reduce(a * d + c * b, b * d)),
                        _ => None,
                    };
                }
                None => entries.push(StepEntry {
                    exact: e.exact.map(|(a, b)| reduce(a, b)),
                    ..e
                }),
            }
        }
        entries.sort_by_key(|e| (e.step.x, e.step.y));

        let sum: f64 = entries.iter().map(|e| e.prob).sum();
        if (sum - 1.0).abs() > SUM_TOL {
            violations.push(LawViolation::ProbsDontSum { sum });
        }
        for e in &entries {
            let mirrored = entries
                .iter()
                .find(|x| x.step == -e.step)
                .map_or(0.0, |x| x.prob);
            if (mirrored - e.prob).abs() > SUM_TOL && e.step.x.cmp(&0).then(e.step.y.cmp(&0)).is_gt() {
                violations.push(LawViolation::NotSymmetric { step: e.step, prob: e.prob, mirrored });
            } else if mirrored == 0.0 && e.step != Site::ORIGIN {
                violations.push(LawViolation::NotSymmetric { step: e.step, prob: e.prob, mirrored });
            }
        }
        let covariance = covariance_of(&entries);
        let off = (covariance[0][0] - 1.0)
            .abs()
            .max((covariance[1][1] - 1.0).abs())
            .max(covariance[0][1].abs());
        if off > COV_TOL {
            violations.push(LawViolation::CovarianceNotIdentity { matrix: covariance });
        }
        if let Some((p, phi)) = periodicity_witness(&entries) {
            violations.push(LawViolation::NotStronglyAperiodic { p, phi });
        }
        // A law with a one-sided support point reports it twice above; keep
        // the first occurrence only.
        violations.dedup();
        if violations.is_empty() {
            Ok(StepLaw { entries, moment_p, covariance })
        } else {
            Err(LawError::Invalid(violations))
        }
    }

    /// The reference law used throughout the tests: mass 1/10 on each of
    /// (±1, ±1), (±1, 0), (0, ±1) and 1/20 on each of (±2, 0), (0, ±2).
    pub fn reference() -> StepLaw {
        let mut e = Vec::new();
        for (x, y) in [(1, 1), (1, -1), (-1, 1), (-1, -1), (1, 0), (-1, 0), (0, 1), (0, -1)] {
            e.push((Site::new(x, y), 1, 10));
        }
        for (x, y) in [(2, 0), (-2, 0), (0, 2), (0, -2)] {
            e.push((Site::new(x, y), 1, 20));
        }
        StepLaw::from_rationals(&e, 4.0).expect("reference law is valid")
    }

    /// Parse the text table format: one support point per line as
    /// `dx dy numerator denominator`. `#` starts a comment; a comment of the
    /// form `# moment_p = 3.0` sets the recorded moment order (default 4).
    pub fn parse(text: &str) -> Result<StepLaw, LawError> {
        let mut entries = Vec::new();
        let mut moment_p = 4.0;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let (body, comment) = match line.find('#') {
                Some(k) => (&line[..k], Some(&line[k + 1..])),
                None => (line, None),
            };
            if let Some(c) = comment {
                if let Some((key, val)) = c.split_once('=') {
                    if key.trim() == "moment_p" {
                        moment_p = val.trim().parse().map_err(|_| LawError::Parse {
                            line: line_no,
                            msg: format!("bad moment_p {:?}", val.trim()),
                        })?;
                    }
                }
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 4 {
                return Err(LawError::Parse {
                    line: line_no,
                    msg: format!("expected `dx dy numerator denominator`, got {} fields", fields.len()),
                });
            }
            let int = |s: &str| -> Result<i64, LawError> {
                s.parse().map_err(|_| LawError::Parse { line: line_no, msg: format!("not an integer: {s:?}") })
            };
            let dx = int(fields[0])?;
            let dy = int(fields[1])?;
            let num = int(fields[2])?;
            let den = int(fields[3])?;
            if num < 0 || den <= 0 {
                return Err(LawError::Parse {
                    line: line_no,
                    msg: "probability must be a non-negative fraction with positive denominator".into(),
                });
            }
            entries.push((Site::new(dx, dy), num as u64, den as u64));
        }
        StepLaw::from_rationals(&entries, moment_p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StepLaw, LawError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Render in the text table format. Entries without an exact rational
    /// are written with denominator 10^15.
    pub fn to_table(&self) -> String {
        let mut s = format!("# moment_p = {}\n", self.moment_p);
        for e in &self.entries {
            let (n, d) = e.exact.unwrap_or(((e.prob * 1e15).round() as u64, 1_000_000_000_000_000));
            s.push_str(&format!("{} {} {} {}\n", e.step.x, e.step.y, n, d));
        }
        s
    }

    pub fn entries(&self) -> &[StepEntry] {
        &self.entries
    }

    pub fn moment_p(&self) -> f64 {
        self.moment_p
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        self.covariance
    }

    /// Largest |coordinate| over the support.
    pub fn max_step(&self) -> i64 {
        self.entries.iter().map(|e| e.step.sup_norm()).max().unwrap_or(0)
    }

    /// E|X|^q.
    pub fn abs_moment(&self, q: f64) -> f64 {
        self.entries.iter().map(|e| e.prob * e.step.norm().powf(q)).sum()
    }

    /// φ(p) = Σ P(v) cos(p·v); real by symmetry.
    pub fn char_fn(&self, p: [f64; 2]) -> f64 {
        self.entries.iter().map(|e| e.prob * e.step.dot(p).cos()).sum()
    }

    /// 1 - φ(p), evaluated without cancellation near p = 0.
    pub fn one_minus_char_fn(&self, p: [f64; 2]) -> f64 {
        self.entries.iter().map(|e| e.prob * one_minus_cos(e.step.dot(p))).sum()
    }

    /// Σ P(v) (p·v)²/2, which is |p|²/2 for identity covariance.
    pub fn quadratic_form(&self, p: [f64; 2]) -> f64 {
        0.5 * self.entries.iter().map(|e| e.prob * e.step.dot(p).powi(2)).sum::<f64>()
    }

    /// φ(p) - 1 + Σ P(v)(p·v)²/2 = O(|p|⁴), without cancellation.
    pub fn char_fn_remainder(&self, p: [f64; 2]) -> f64 {
        self.entries.iter().map(|e| e.prob * cos_remainder2(e.step.dot(p))).sum()
    }

    /// Exact common denominator of the probabilities, when all are rational.
    pub fn common_denominator(&self) -> Option<u64> {
        self.entries
            .iter()
            .try_fold(1u64, |acc, e| e.exact.map(|(_, d)| acc.lcm(&d)))
    }
}

fn reduce(a: u64, b: u64) -> (u64, u64) {
    let g = a.gcd(&b).max(1);
    (a / g, b / g)
}

fn covariance_of(entries: &[StepEntry]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for e in entries {
        let (x, y) = (e.step.x as f64, e.step.y as f64);
        c[0][0] += e.prob * x * x;
        c[0][1] += e.prob * x * y;
        c[1][1] += e.prob * y * y;
    }
    c[1][0] = c[0][1];
    c
}

/// Exact algebraic test of strong aperiodicity. |φ(p)| = 1 exactly when
/// p·(v - w) ∈ 2πZ for all support points v, w, so the walk is strongly
/// aperiodic iff the differences generate Z², i.e. the gcd of their 2×2
/// minors is 1. Returns a witness p with |φ(p)| = 1 otherwise, preferring
/// φ(p) = +1.
fn periodicity_witness(entries: &[StepEntry]) -> Option<([f64; 2], f64)> {
    let base = entries.first()?.step;
    let gens: Vec<Site> = entries.iter().map(|e| e.step - base).filter(|d| *d != Site::ORIGIN).collect();
    let mut index: i64 = 0;
    for (i, a) in gens.iter().enumerate() {
        for b in &gens[i + 1..] {
            index = index.gcd(&(a.x * b.y - a.y * b.x).abs());
        }
    }
    let phi_at = |p: [f64; 2]| entries.iter().map(|e| e.prob * e.step.dot(p).cos()).sum::<f64>();
    if index == 1 {
        return None;
    }
    if index == 0 {
        // Support on a line through `base`: every p orthogonal to it works.
        let dir = gens.first().copied().unwrap_or(Site::new(1, 0));
        let g = dir.x.gcd(&dir.y).max(1);
        let (a, b) = (dir.x / g, dir.y / g);
        let scale = PI / (a.abs().max(b.abs()) as f64);
        let p = [-(b as f64) * scale, a as f64 * scale];
        return Some((p, phi_at(p)));
    }
    let d = index;
    let mut best: Option<([f64; 2], f64)> = None;
    for i in 0..d {
        for j in 0..d {
            if i == 0 && j == 0 {
                continue;
            }
            if gens.iter().all(|g| (i * g.x + j * g.y).rem_euclid(d) == 0) {
                let wrap = |k: i64| {
                    let v = 2.0 * PI * k as f64 / d as f64;
                    if v > PI + 1e-12 { v - 2.0 * PI } else { v }
                };
                let p = [wrap(i), wrap(j)];
                let phi = phi_at(p);
                if best.is_none_or(|(_, b)| phi > b + 1e-12) {
                    best = Some((p, phi));
                }
            }
        }
    }
    best
}

/// Evidence for (or against) strong aperiodicity from a grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AperiodicityReport {
    pub grid_n: usize,
    /// Largest |φ| on the grid outside the excluded disc around 0.
    pub max_abs_phi: f64,
    pub worst_point: [f64; 2],
    /// Radius of the excluded neighbourhood of the origin, 4π/√grid_n.
    pub excluded_radius: f64,
    /// Required gap below 1: excluded_radius²/8, a quarter of the dip
    /// 1 - φ ≈ |p|²/2 expected at the edge of the excluded disc.
    pub margin: f64,
    pub grid_verdict: bool,
    /// Exact lattice-index certificate (differences of the support generate Z²).
    pub structural_verdict: bool,
}

impl AperiodicityReport {
    pub fn verdict(&self) -> bool {
        self.grid_verdict && self.structural_verdict
    }
}

/// Grid search of |φ| over [-π, π)² on a `grid_n × grid_n` grid.
pub fn check_strong_aperiodicity(law: &StepLaw, grid_n: usize) -> AperiodicityReport {
    check_entries(&law.entries, grid_n)
}

/// Same check on unvalidated entries, for diagnosing rejected laws.
pub fn check_strong_aperiodicity_raw(entries: &[(Site, f64)], grid_n: usize) -> AperiodicityReport {
    let e: Vec<StepEntry> = entries.iter().map(|&(step, prob)| StepEntry { step, prob, exact: None }).collect();
    check_entries(&e, grid_n)
}

fn check_entries(entries: &[StepEntry], grid_n: usize) -> AperiodicityReport {
    assert!(grid_n >= 64, "grid_n must be at least 64");
    let excluded_radius = 4.0 * PI / (grid_n as f64).sqrt();
    let margin = excluded_radius * excluded_radius / 8.0;
    let mut max_abs_phi: f64 = -1.0;
    let mut worst_point = [0.0; 2];
    for i in 0..grid_n {
        let p1 = -PI + 2.0 * PI * i as f64 / grid_n as f64;
        for j in 0..grid_n {
            let p2 = -PI + 2.0 * PI * j as f64 / grid_n as f64;
            if p1.hypot(p2) < excluded_radius {
                continue;
            }
            let phi: f64 = entries.iter().map(|e| e.prob * e.step.dot([p1, p2]).cos()).sum();
            if phi.abs() > max_abs_phi {
                max_abs_phi = phi.abs();
                worst_point = [p1, p2];
            }
        }
    }
    AperiodicityReport {
        grid_n,
        max_abs_phi,
        worst_point,
        excluded_radius,
        margin,
        grid_verdict: max_abs_phi < 1.0 - margin,
        structural_verdict: periodicity_witness(entries).is_none(),
    }
}

/// Fast sampler for a step law: a lookup table when the probabilities share
/// a small common denominator, otherwise Walker's alias method.
#[derive(Debug, Clone)]
pub struct StepSampler {
    steps: Vec<Site>,
    method: SamplerMethod,
}

#[derive(Debug, Clone)]
enum SamplerMethod {
    Table(Vec<u16>),
    Alias(WeightedAliasIndex<f64>),
}

impl StepSampler {
    pub fn new(law: &StepLaw) -> Self {
        let steps: Vec<Site> = law.entries.iter().map(|e| e.step).collect();
        if let Some(den) = law.common_denominator().filter(|&d| d <= 1 << 16) {
            let mut table = Vec::with_capacity(den as usize);
            for (k, e) in law.entries.iter().enumerate() {
                let (n, d) = e.exact.expect("rational");
                table.extend(std::iter::repeat_n(k as u16, (n * (den / d)) as usize));
            }
            if table.len() == den as usize {
                return StepSampler { steps, method: SamplerMethod::Table(table) };
            }
        }
        let w: Vec<f64> = law.entries.iter().map(|e| e.prob).collect();
        let alias = WeightedAliasIndex::new(w).expect("positive weights");
        StepSampler { steps, method: SamplerMethod::Alias(alias) }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        match &self.method {
            SamplerMethod::Table(t) => self.steps[t[rng.random_range(0..t.len())] as usize],
            SamplerMethod::Alias(a) => self.steps[a.sample(rng)],
        }
    }
}

/// Draw one step; convenience wrapper building a throwaway sampler.
pub fn sample_step<R: Rng + ?Sized>(law: &StepLaw, rng: &mut R) -> Site {
    StepSampler::new(law).sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diagonal() -> Vec<(Site, f64)> {
        [(1, 1), (1, -1), (-1, 1), (-1, -1)].iter().map(|&(x, y)| (Site::new(x, y), 0.25)).collect()
    }

    fn nearest_neighbour() -> Vec<(Site, f64)> {
        [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().map(|&(x, y)| (Site::new(x, y), 0.25)).collect()
    }

    #[test]
    fn reference_law_has_identity_covariance() {
        let law = StepLaw::reference();
        // Var(X¹) = 4·(1/10) [diagonals] + 2·(1/10) [axis] + 2·4·(1/20) [far] = 0.4 + 0.2 + 0.4
        let c = law.covariance();
        assert_relative_eq!(c[0][0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(c[1][1], 1.0, epsilon = 1e-15);
        assert_eq!(c[0][1], 0.0);
        assert_eq!(law.entries().len(), 12);
        assert_eq!(law.common_denominator(), Some(20));
        assert_eq!(law.max_step(), 2);
    }

    #[test]
    fn diagonal_walk_is_periodic_at_pi_pi() {
        let err = StepLaw::new(&diagonal(), 4.0).unwrap_err();
        let v = err.violations();
        assert_eq!(v.len(), 1, "{v:?}");
        match v[0] {
            LawViolation::NotStronglyAperiodic { p, phi } => {
                assert_relative_eq!(p[0].abs(), PI, epsilon = 1e-12);
                assert_relative_eq!(p[1].abs(), PI, epsilon = 1e-12);
                assert_relative_eq!(phi, 1.0, epsilon = 1e-12);
            }
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nearest_neighbour_walk_has_half_covariance() {
        let err = StepLaw::new(&nearest_neighbour(), 4.0).unwrap_err();
        let cov = err
            .violations()
            .iter()
            .find_map(|v| match v {
                LawViolation::CovarianceNotIdentity { matrix } => Some(*matrix),
                _ => None,
            })
            .expect("covariance violation reported");
        assert_relative_eq!(cov[0][0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(cov[1][1], 0.5, epsilon = 1e-15);
        // it is also periodic (φ(π,π) = -1), and that is listed too
        assert!(err.violations().iter().any(|v| matches!(v, LawViolation::NotStronglyAperiodic { .. })));
    }

    #[test]
    fn asymmetric_and_unnormalised_laws_are_rejected() {
        let e = vec![(Site::new(1, 0), 0.5), (Site::new(0, 1), 0.6)];
        let err = StepLaw::new(&e, 4.0).unwrap_err();
        let v = err.violations();
        assert!(v.iter().any(|x| matches!(x, LawViolation::ProbsDontSum { .. })));
        assert!(v.iter().any(|x| matches!(x, LawViolation::NotSymmetric { .. })));
        assert!(matches!(StepLaw::new(&[], 4.0).unwrap_err().violations()[0], LawViolation::Empty));
    }

    #[test]
    fn char_fn_values() {
        let law = StepLaw::reference();
        assert_eq!(law.char_fn([0.0, 0.0]), 1.0);
        // (2/5)(-1)(-1) + (1/5)(-1-1) + (1/10)(1+1)
        assert_relative_eq!(law.char_fn([PI, PI]), 0.2, epsilon = 1e-15);
        // (2/5)(-1) + (1/5)(1-1) + (1/10)(2)
        assert_relative_eq!(law.char_fn([0.0, PI]), -0.2, epsilon = 1e-15);
    }

    #[test]
    fn aperiodicity_grid_search() {
        let law = StepLaw::reference();
        let coarse = check_strong_aperiodicity(&law, 64);
        let fine = check_strong_aperiodicity(&law, 512);
        assert!(coarse.verdict() && fine.verdict());
        assert!(fine.max_abs_phi < 1.0 - fine.margin);
        let diag = check_strong_aperiodicity_raw(&diagonal(), 64);
        assert!(!diag.grid_verdict && !diag.structural_verdict);
        assert_relative_eq!(diag.max_abs_phi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let law = StepLaw::reference();
        let back = StepLaw::parse(&law.to_table()).unwrap();
        assert_eq!(back, law);
        let text = "# a comment\n# moment_p = 3.5\n1 0 1 2\n-1 0 1 2\n";
        // covariance diag(1, 0) is rejected, and the moment order was parsed first
        assert!(matches!(StepLaw::parse(text), Err(LawError::Invalid(_))));
        assert!(matches!(StepLaw::parse("1 0 1"), Err(LawError::Parse { line: 1, .. })));
        assert!(matches!(StepLaw::parse("1 x 1 2"), Err(LawError::Parse { .. })));
    }

    #[test]
    fn sampling_matches_table() {
        let law = StepLaw::reference();
        let sampler = StepSampler::new(&law);
        let mut rng = stream(11, 0);
        let n = 1_000_000;
        let mut counts = vec![0u64; law.entries().len()];
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let s = sampler.sample(&mut rng);
            let k = law.entries().iter().position(|e| e.step == s).unwrap();
            counts[k] += 1;
            let (x, y) = (s.x as f64, s.y as f64);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        for (e, &c) in law.entries().iter().zip(&counts) {
            let se = (e.prob * (1.0 - e.prob) / nf).sqrt();
            assert!((c as f64 / nf - e.prob).abs() < 4.0 * se, "{:?}: {c}", e.step);
        }
        // mean: SE = 1/√n per coordinate; covariance entries: SE from fourth moments
        let se_mean = (1.0 / nf).sqrt();
        assert!((sx / nf).abs() < 4.0 * se_mean && (sy / nf).abs() < 4.0 * se_mean);
        let m4 = law.entries().iter().map(|e| e.prob * (e.step.x as f64).powi(4)).sum::<f64>();
        let se_var = ((m4 - 1.0) / nf).sqrt();
        assert!((sxx / nf - 1.0).abs() < 4.0 * se_var);
        assert!((syy / nf - 1.0).abs() < 4.0 * se_var);
        let m22 = law.entries().iter().map(|e| e.prob * (e.step.x * e.step.y) as f64 * (e.step.x * e.step.y) as f64).sum::<f64>();
        assert!((sxy / nf).abs() < 4.0 * (m22 / nf).sqrt());
    }

    #[test]
    fn alias_sampler_for_irrational_weights() {
        let law = StepLaw::reference();
        let e: Vec<(Site, f64)> = law.entries().iter().map(|e| (e.step, e.prob)).collect();
        let law2 = StepLaw::new(&e, 4.0).unwrap();
        assert!(law2.common_denominator().is_none());
        let s = StepSampler::new(&law2);
        let a: Vec<Site> = {
            let mut r = stream(5, 1);
            (0..100).map(|_| s.sample(&mut r)).collect()
        };
        let b: Vec<Site> = {
            let mut r = stream(5, 1);
            (0..100).map(|_| s.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|x| law2.entries().iter().any(|e| e.step == *x)));
    }

    proptest! {
        #[test]
        fn char_fn_properties(p1 in -PI..PI, p2 in -PI..PI) {
            let law = StepLaw::reference();
            let phi = law.char_fn([p1, p2]);
            prop_assert!((phi - law.char_fn([-p1, -p2])).abs() < 1e-14);
            // complex-exponential reference: Σ P(v) e^{i p·v}
            let (re, im) = law.entries().iter().fold((0.0, 0.0), |(re, im), e| {
                let t = e.step.dot([p1, p2]);
                (re + e.prob * t.cos(), im + e.prob * t.sin())
            });
            prop_assert!((phi - re).abs() < 1e-14);
            prop_assert!(im.abs() < 1e-14);
            prop_assert!((law.one_minus_char_fn([p1, p2]) - (1.0 - phi)).abs() < 1e-14);
            let rem = law.char_fn_remainder([p1, p2]);
            prop_assert!((rem - (phi - 1.0 + 0.5 * (p1 * p1 + p2 * p2))).abs() < 1e-13);
        }
    }
}
