//! Killed lattice Green's function G_λ(x) = Σ_j e^{-λj} q_j(x).
//!
//! Two independent routes: a truncated series evaluated spectrally on a
//! periodic torus ([`green_series`]), and the Fourier integral over
//! [-π, π]² with the model kernel 1/(λ + |p|²/2) subtracted and integrated
//! in closed form ([`green_fourier`]). The constant c_X of the asymptote
//! g_λ = (1/2π) log(1/λ) + c_X + o(1) comes from [`c_x`].

use std::f64::consts::{FRAC_PI_4, PI};
use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Site;
use crate::quadrature::{integrate_square_polar, GaussLegendre, PolarGrid};
use crate::special::CATALAN;
use crate::stepdist::StepLaw;

/// Largest torus side the series route will try.
pub const MAX_TORUS: usize = 8192;
/// Required certificate on probability mass that leaves the usable window.
pub const WRAP_TOLERANCE: f64 = 1e-12;
/// Required truncation tail of the series route.
pub const SERIES_TAIL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum GreenError {
    #[error("torus of side {torus} too small: spread bound {spread:.3e} exceeds {tolerance:e}")]
    TorusTooSmall { torus: usize, spread: f64, tolerance: f64 },
    #[error("quadrature not converged: successive levels differ by {diff:.3e} (tolerance {tolerance:.1e})")]
    QuadratureNotConverged { diff: f64, tolerance: f64 },
    #[error("shift {z} leaves window of half-width {half_width}")]
    WindowExceeded { z: Site, half_width: i64 },
    #[error("lambda = {0} outside the supported range")]
    LambdaOutOfRange(f64),
}

/// A value with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreenMethod {
    Series,
    Fourier,
}

/// Bernstein bound on P(|S_n|_∞ ≥ a) for a walk with unit coordinate
/// variance and steps bounded by `max_step`.
pub fn spread_bound(n: usize, a: f64, max_step: i64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    let m = max_step as f64;
    (4.0 * (-(a * a) / (2.0 * (n as f64 + m * a / 3.0))).exp()).min(1.0)
}

/// Torus index of a site.
fn wrap(v: i64, l: usize) -> usize {
    v.rem_euclid(l as i64) as usize
}

struct Torus {
    l: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Torus {
    fn new(l: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_inverse(l);
        Torus { l, fft }
    }

    /// φ(2πk/L) on the L×L frequency grid.
    fn char_fn(&self, law: &StepLaw) -> Vec<f64> {
        let l = self.l;
        let mut out = vec![0.0; l * l];
        for e in law.entries() {
            let (sx, sy) = (wrap(e.step.x, l), wrap(e.step.y, l));
            // separable phases: cos(a + b) via complex products
            for i in 0..l {
                let ax = 2.0 * PI * ((i * sx) % l) as f64 / l as f64;
                for j in 0..l {
                    let ay = 2.0 * PI * ((j * sy) % l) as f64 / l as f64;
                    out[j * l + i] += e.prob * (ax + ay).cos();
                }
            }
        }
        out
    }

    /// Unnormalized inverse 2-D transform of a real even spectrum, returned
    /// as real values divided by L².
    fn inverse_real(&self, spectrum: &[f64]) -> Vec<f64> {
        let l = self.l;
        let mut buf: Vec<Complex64> = spectrum.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        let mut t = vec![Complex64::new(0.0, 0.0); l * l];
        for j in 0..l {
            for i in 0..l {
                t[i * l + j] = buf[j * l + i];
            }
        }
        self.fft.process(&mut t);
        let norm = 1.0 / (l * l) as f64;
        // t is transposed: t[i * l + j] holds site (i, j) as (x, y) = (i, j)
        let mut out = vec![0.0; l * l];
        for i in 0..l {
            for j in 0..l {
                out[j * l + i] = t[i * l + j].re * norm;
            }
        }
        out
    }
}

/// Transition probabilities q_n on an L×L torus.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    torus: usize,
    steps: Vec<usize>,
    tables: Vec<Vec<f64>>,
    /// Bound on the torus wrap-around error of any entry.
    pub wrap_bound: f64,
}

impl TransitionTable {
    pub fn torus(&self) -> usize {
        self.torus
    }

    /// q_n(x) for a requested n (|x|_∞ < L/2).
    pub fn q(&self, n: usize, x: Site) -> Option<f64> {
        let k = self.steps.iter().position(|&s| s == n)?;
        Some(self.tables[k][wrap(x.y, self.torus) * self.torus + wrap(x.x, self.torus)])
    }

    /// Σ_x q_n(x) over the torus.
    pub fn mass(&self, n: usize) -> Option<f64> {
        let k = self.steps.iter().position(|&s| s == n)?;
        Some(self.tables[k].iter().sum())
    }
}

/// q_0, …, q_{n_max} on a torus of side `torus_size`.
pub fn transition_table(law: &StepLaw, n_max: usize, torus_size: usize) -> Result<TransitionTable, GreenError> {
    let steps: Vec<usize> = (0..=n_max).collect();
    transition_at(law, &steps, torus_size)
}

/// q_n for the listed n only.
pub fn transition_at(law: &StepLaw, steps: &[usize], torus_size: usize) -> Result<TransitionTable, GreenError> {
    assert!(torus_size.is_power_of_two(), "torus side must be a power of two");
    let n_max = steps.iter().copied().max().unwrap_or(0);
    let spread = spread_bound(n_max, torus_size as f64 / 2.0, law.max_step());
    if spread > WRAP_TOLERANCE {
        return Err(GreenError::TorusTooSmall { torus: torus_size, spread, tolerance: WRAP_TOLERANCE });
    }
    let torus = Torus::new(torus_size);
    let phi = torus.char_fn(law);
    let tables = steps
        .iter()
        .map(|&n| {
            let spec: Vec<f64> = phi.iter().map(|&f| f.powi(n as i32)).collect();
            torus.inverse_real(&spec)
        })
        .collect();
    Ok(TransitionTable { torus: torus_size, steps: steps.to_vec(), tables, wrap_bound: spread })
}

/// G_λ tabulated on the box |x|_∞ ≤ half_width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenTable {
    pub lambda: f64,
    pub half_width: i64,
    values: Vec<f64>,
    pub g_lambda: f64,
    pub method: GreenMethod,
    /// Series terms used (N).
    pub terms: usize,
    /// Torus side used.
    pub torus: usize,
    /// Σ_{n > N} e^{-λn}: bounds both pointwise and total truncation error.
    pub tail_bound: f64,
    /// Pointwise bound on the torus wrap-around error inside the window.
    pub wrap_bound: f64,
    /// Bound on the true mass Σ G_λ outside the window.
    pub outside_bound: f64,
}

impl GreenTable {
    fn idx(&self, x: Site) -> Option<usize> {
        let r = self.half_width;
        (x.sup_norm() <= r).then(|| ((x.y + r) * (2 * r + 1) + (x.x + r)) as usize)
    }

    pub fn get(&self, x: Site) -> Option<f64> {
        self.idx(x).map(|i| self.values[i])
    }

    /// Value at x, zero outside the window.
    pub fn get_or_zero(&self, x: Site) -> f64 {
        self.get(x).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        let r = self.half_width;
        let w = 2 * r + 1;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (Site::new(i as i64 % w - r, i as i64 / w - r), v))
    }

    /// Σ_{window} G_λ.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Bound on |Σ_{window} G_λ - 1/(1 - e^{-λ})|.
    pub fn mass_bound(&self) -> f64 {
        let sites = ((2 * self.half_width + 1) as f64).powi(2);
        self.tail_bound + self.outside_bound + sites * self.wrap_bound
    }
}

/// Truncation N: the smallest N with e^{-λ(N+1)}/(1 - e^{-λ}) < tolerance.
pub fn series_terms(lambda: f64, tolerance: f64) -> usize {
    let denom = -(-lambda).exp_m1();
    let n = ((tolerance * denom).ln() / -lambda - 1.0).ceil().max(0.0);
    n as usize
}

/// G_λ on the box |x|_∞ ≤ half_width by the truncated series, evaluated
/// on an automatically sized torus as the closed geometric sum
/// (1 - z^{N+1})/(1 - z), z = e^{-λ} φ̂.
pub fn green_series(law: &StepLaw, lambda: f64, half_width: i64) -> Result<GreenTable, GreenError> {
    if !(0.01..1.0).contains(&lambda) {
        return Err(GreenError::LambdaOutOfRange(lambda));
    }
    let n = series_terms(lambda, SERIES_TAIL);
    let m = law.max_step();
    let mut l = ((6.0 * (n as f64).sqrt() * m as f64).ceil() as usize).next_power_of_two().max(16);
    loop {
        let usable = (l / 4) as f64;
        let spread = spread_bound(n, usable, m) / -(-lambda).exp_m1();
        if spread < WRAP_TOLERANCE && (l / 4) as i64 >= half_width {
            break;
        }
        if l >= MAX_TORUS {
            return Err(GreenError::TorusTooSmall { torus: l, spread, tolerance: WRAP_TOLERANCE });
        }
        l *= 2;
    }
    let torus = Torus::new(l);
    let phi = torus.char_fn(law);
    let s = (-lambda).exp();
    let spec: Vec<f64> = phi
        .iter()
        .map(|&f| {
            let z = s * f;
            (1.0 - z.powi(n as i32 + 1)) / (1.0 - z)
        })
        .collect();
    let full = torus.inverse_real(&spec);
    let r = half_width;
    let w = (2 * r + 1) as usize;
    let mut values = vec![0.0; w * w];
    for y in -r..=r {
        for x in -r..=r {
            let a = full[wrap(y, l) * l + wrap(x, l)];
            let b = full[wrap(-y, l) * l + wrap(-x, l)];
            values[((y + r) as usize) * w + (x + r) as usize] = 0.5 * (a + b);
        }
    }
    let inv = 1.0 / -(-lambda).exp_m1();
    let tail_bound = (-lambda * (n + 1) as f64).exp() * inv;
    let wrap_bound = spread_bound(n, (l as i64 - r) as f64, m) * inv;
    // Σ_j e^{-λj} P(|S_j|_∞ > r), term by term
    let outside_bound: f64 = (1..=n).map(|j| (-lambda * j as f64).exp() * spread_bound(j, (r + 1) as f64, m)).sum();
    let g_lambda = values[(r as usize) * w + r as usize];
    Ok(GreenTable {
        lambda,
        half_width,
        values,
        g_lambda,
        method: GreenMethod::Series,
        terms: n,
        torus: l,
        tail_bound,
        wrap_bound,
        outside_bound,
    })
}

/// ∫_{[-π,π]²} dp/(λ + |p|²/2): the disc |p| < π in closed form plus the
/// four corners as a one-dimensional angular integral.
pub fn model_kernel_integral(lambda: f64) -> f64 {
    let c = PI * PI / 2.0;
    let disc = 2.0 * PI * ((lambda + c) / lambda).ln();
    disc + corner_integral(lambda)
}

/// 8 ∫_0^{π/4} log((λ + π²/(2cos²θ))/(λ + π²/2)) dθ.
fn corner_integral(lambda: f64) -> f64 {
    let c = PI * PI / 2.0;
    let gl = GaussLegendre::new(40);
    8.0 * gl.integrate(0.0, FRAC_PI_4, |t| {
        let ct = t.cos();
        ((lambda + c / (ct * ct)) / (lambda + c)).ln()
    })
}

/// Limit of the corner integral as λ → 0, divided by (2π)²:
/// (ln 2)/π - 2G/π² with G Catalan's constant.
pub fn corner_constant() -> f64 {
    std::f64::consts::LN_2 / PI - 2.0 * CATALAN / (PI * PI)
}

const FOURIER_TOL: f64 = 1e-10;
const MAX_LEVEL: u32 = 6;

/// Integrate at successive refinement levels until two agree.
fn converge(mut at_level: impl FnMut(u32) -> f64, tol: f64) -> Result<(f64, f64, u32), GreenError> {
    let mut prev = at_level(1);
    let mut diff = f64::INFINITY;
    for level in 2..=MAX_LEVEL {
        let cur = at_level(level);
        diff = (cur - prev).abs();
        if diff <= tol * cur.abs().max(1.0) {
            return Ok((cur, diff, level));
        }
        prev = cur;
    }
    Err(GreenError::QuadratureNotConverged { diff, tolerance: tol })
}

/// G_λ(x) by Fourier quadrature with model-kernel subtraction.
pub fn green_fourier(law: &StepLaw, lambda: f64, x: Site) -> Result<Estimate, GreenError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(GreenError::LambdaOutOfRange(lambda));
    }
    let em1 = (-lambda).exp_m1();
    let s = (-lambda).exp();
    let lin = lambda + em1;
    let extra = (x.norm() / 2.0).min(16.0);
    let r_min = lambda.sqrt().max(1e-8) / 8.0;
    let remainder = |p: [f64; 2]| {
        let half_r2 = 0.5 * (p[0] * p[0] + p[1] * p[1]);
        let omc = law.one_minus_char_fn(p);
        let d1 = -em1 + s * omc;
        let d2 = lambda + half_r2;
        let shape = half_r2 - law.quadratic_form(p) + law.char_fn_remainder(p);
        let one_minus_cos = crate::special::one_minus_cos(x.dot(p));
        // D2 cos(p·x) - D1, arranged to avoid cancellation near p = 0
        let num = lin + (-em1) * half_r2 + s * shape - one_minus_cos * d2;
        num / (d1 * d2)
    };
    let (rem, diff, _) = converge(|level| integrate_square_polar(remainder, &PolarGrid::at_level(r_min, level, extra)), FOURIER_TOL)?;
    let norm = 1.0 / (4.0 * PI * PI);
    let value = norm * (model_kernel_integral(lambda) + rem);
    Ok(Estimate { value, bound: norm * diff + 1e-13 * value.abs() })
}

/// g_λ = G_λ(0).
pub fn g_lambda(law: &StepLaw, lambda: f64) -> Result<Estimate, GreenError> {
    green_fourier(law, lambda, Site::ORIGIN)
}

/// The asymptotic constant c_X and its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CxEstimate {
    pub value: f64,
    pub bound: f64,
    /// (1/2π) log(π²/2).
    pub disc_term: f64,
    /// Corner part of the model-kernel integral, (ln 2)/π - 2G/π².
    pub corner_term: f64,
    /// (2π)^{-2} ∫ (φ - 1 + |p|²/2)/((1 - φ)|p|²/2) dp.
    pub integral_term: f64,
    /// Refinement levels at which the integral was evaluated.
    pub refinement_levels: Vec<u32>,
    pub law: String,
}

/// c_X = (1/2π) log(π²/2) + corner term + (2π)^{-2} ∫ F(p) dp.
pub fn c_x(law: &StepLaw) -> Result<CxEstimate, GreenError> {
    let f = |p: [f64; 2]| {
        let half_r2 = 0.5 * (p[0] * p[0] + p[1] * p[1]);
        let num = half_r2 - law.quadratic_form(p) + law.char_fn_remainder(p);
        num / (law.one_minus_char_fn(p) * half_r2)
    };
    let (integral, diff, level) = converge(|level| integrate_square_polar(f, &PolarGrid::at_level(1e-8, level, 0.0)), 1e-11)?;
    let norm = 1.0 / (4.0 * PI * PI);
    let disc_term = (PI * PI / 2.0).ln() / (2.0 * PI);
    let corner_term = corner_constant();
    let integral_term = norm * integral;
    Ok(CxEstimate {
        value: disc_term + corner_term + integral_term,
        bound: norm * diff + 1e-14,
        disc_term,
        corner_term,
        integral_term,
        refinement_levels: vec![level - 1, level],
        law: law.to_table(),
    })
}

/// ‖G_λ‖_m over the window, with the bound from mass outside it.
pub fn green_lm_norm(table: &GreenTable, m: u32) -> Estimate {
    assert!(m >= 1);
    let sum: f64 = table.values.iter().map(|&v| v.abs().powi(m as i32)).sum();
    // outside the window G ≤ g_λ, so Σ_out G^m ≤ g^{m-1} Σ_out G
    let outside = table.g_lambda.powi(m as i32 - 1) * (table.outside_bound + table.tail_bound);
    let value = sum.powf(1.0 / m as f64);
    Estimate { value, bound: (sum + outside).powf(1.0 / m as f64) - value }
}

/// Δ_z G_λ(x) = G_λ(x + z) - G_λ(x) on the sub-box where both points lie
/// in the window.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffTable {
    pub z: Site,
    pub lambda: f64,
    pub values: Vec<(Site, f64)>,
}

impl DiffTable {
    /// (Σ_x |Δ_z G_λ(x)|^m)^{1/m}.
    pub fn norm(&self, m: u32) -> f64 {
        self.values.iter().map(|(_, v)| v.abs().powi(m as i32)).sum::<f64>().powf(1.0 / m as f64)
    }

    /// ‖Δ_z G_λ‖_m / (|z√λ|^{β/m} λ^{-1/m}): the ratio whose boundedness in
    /// λ is the Hölder-type estimate on difference norms.
    pub fn bound_ratio(&self, m: u32, beta: f64) -> f64 {
        let mf = m as f64;
        let scaled = self.z.norm() * self.lambda.sqrt();
        self.norm(m) / (scaled.powf(beta / mf) * self.lambda.powf(-1.0 / mf))
    }
}

/// Default Hölder exponent for [`DiffTable::bound_ratio`].
pub const DEFAULT_BETA: f64 = 0.5;

pub fn diff_green(table: &GreenTable, z: Site) -> Result<DiffTable, GreenError> {
    let r = table.half_width;
    if z.sup_norm() > r {
        return Err(GreenError::WindowExceeded { z, half_width: r });
    }
    let mut values = Vec::new();
    for y in -r..=r {
        for x in -r..=r {
            let a = Site::new(x, y);
            if let (Some(g0), Some(g1)) = (table.get(a), table.get(a + z)) {
                values.push((a, g1 - g0));
            }
        }
    }
    Ok(DiffTable { z, lambda: table.lambda, values })
}

/// Residual of the discrete resolvent identity
/// G_s - G_{s'} = ((s - s')/s') (G_s * G_{s'} - G_s), s = e^{-λ},
/// on the box |x|_∞ ≤ radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventCheck {
    pub max_residual: f64,
    /// Same comparison with the continuous-time factor (λ' - λ) and
    /// without the G_s correction, for reference.
    pub continuous_form_deviation: f64,
}

pub fn resolvent_check(a: &GreenTable, b: &GreenTable, radius: i64) -> ResolventCheck {
    let s = (-a.lambda).exp();
    let s2 = (-b.lambda).exp();
    let factor = (s - s2) / s2;
    let mut max_residual: f64 = 0.0;
    let mut continuous: f64 = 0.0;
    for y in -radius..=radius {
        for x in -radius..=radius {
            let site = Site::new(x, y);
            let conv: f64 = a.iter().map(|(u, gu)| gu * b.get_or_zero(site - u)).sum();
            let lhs = a.get_or_zero(site) - b.get_or_zero(site);
            max_residual = max_residual.max((lhs - factor * (conv - a.get_or_zero(site))).abs());
            continuous = continuous.max((lhs - (b.lambda - a.lambda) * conv).abs());
        }
    }
    ResolventCheck { max_residual, continuous_form_deviation: continuous }
}

/// CSV with columns `x, y, G`.
pub fn write_green_csv<W: Write>(out: W, rows: impl IntoIterator<Item = (Site, f64)>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "G"])?;
    for (s, g) in rows {
        w.write_record([s.x.to_string(), s.y.to_string(), format!("{g:.15e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::line_fit;
    use approx::assert_relative_eq;

    fn law() -> StepLaw {
        StepLaw::reference()
    }

    #[test]
    fn transition_tables() {
        let t = transition_table(&law(), 20, 256).unwrap();
        assert!((t.q(0, Site::ORIGIN).unwrap() - 1.0).abs() < 1e-14);
        assert!(t.q(0, Site::new(1, 0)).unwrap().abs() < 1e-14);
        assert_relative_eq!(t.q(1, Site::new(2, 0)).unwrap(), 0.05, epsilon = 1e-14);
        // two steps returning to 0: Σ P(v)P(-v) = Σ P(v)²
        let ret: f64 = law().entries().iter().map(|e| e.prob * e.prob).sum();
        assert_relative_eq!(t.q(2, Site::ORIGIN).unwrap(), ret, epsilon = 1e-14);
        for n in 0..=20 {
            assert!((t.mass(n).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(transition_table(&law(), 5000, 64), Err(GreenError::TorusTooSmall { .. })));
    }

    #[test]
    fn local_limit_trend() {
        // n q_n(0) → 1/(2π) for unit covariance
        let steps = [100, 300, 1000, 3000, 10_000];
        let t = transition_at(&law(), &steps, 2048).unwrap();
        let v: Vec<f64> = steps.iter().map(|&n| n as f64 * t.q(n, Site::ORIGIN).unwrap()).collect();
        for w in v.windows(2) {
            assert!((w[1] - w[0]).abs() < 0.01 * w[0], "{v:?}");
        }
        assert!((v[4] - 1.0 / (2.0 * PI)).abs() < 1e-3, "{v:?}");
    }

    #[test]
    fn series_mass_and_symmetry() {
        let lambda = 0.1;
        let t = green_series(&law(), lambda, 60).unwrap();
        assert_relative_eq!(1.0 / -(-lambda).exp_m1(), 10.508_331_944_775_4, epsilon = 1e-9);
        let target = 1.0 / -(-lambda as f64).exp_m1();
        assert!((t.mass() - target).abs() <= t.mass_bound().max(1e-9), "{} vs {target}", t.mass());
        for (s, v) in t.iter() {
            assert_eq!(v, t.get(-s).unwrap());
            assert!(v > 0.0 && v <= t.g_lambda, "{s}: {v}");
        }
        assert!(matches!(green_series(&law(), 0.001, 5), Err(GreenError::LambdaOutOfRange(_))));
    }

    #[test]
    fn series_and_fourier_agree() {
        let lambda = 0.05;
        let t = green_series(&law(), lambda, 12).unwrap();
        for s in [Site::ORIGIN, Site::new(3, 4), Site::new(1, 0), Site::new(10, 0), Site::new(-7, 7)] {
            let f = green_fourier(&law(), lambda, s).unwrap();
            let v = t.get(s).unwrap();
            assert!((f.value - v).abs() < 1e-6, "{s}: series {v} fourier {}", f.value);
        }
    }

    #[test]
    fn fourier_sanity_near_one() {
        let lambda = 0.999;
        let g = g_lambda(&law(), lambda).unwrap().value;
        let max_phi = 1.0; // |φ| ≤ 1
        assert!(g >= 1.0 && g <= 1.0 / (1.0 - (-lambda).exp() * max_phi));
    }

    #[test]
    fn model_kernel_closed_form() {
        for lambda in [1e-5_f64, 0.01, 0.5] {
            let direct = integrate_square_polar(|p| 1.0 / (lambda + 0.5 * (p[0] * p[0] + p[1] * p[1])), &PolarGrid::at_level(lambda.sqrt() / 8.0, 3, 0.0));
            assert_relative_eq!(model_kernel_integral(lambda), direct, max_relative = 1e-11);
        }
        let lim = corner_integral(1e-14) / (4.0 * PI * PI);
        assert_relative_eq!(lim, corner_constant(), epsilon = 1e-12);
    }

    #[test]
    fn c_x_is_stable_and_matches_asymptote() {
        let c = c_x(&law()).unwrap();
        assert!(c.value.is_finite() && c.bound < 1e-5);
        let p = [1e-6 / 2f64.sqrt(), 1e-6 / 2f64.sqrt()];
        let half_r2 = 0.5e-12;
        let v = (half_r2 - law().quadratic_form(p) + law().char_fn_remainder(p)) / (law().one_minus_char_fn(p) * half_r2);
        assert!(v.is_finite());
        let g = g_lambda(&law(), 1e-5).unwrap().value;
        let gap = g - (1.0 / 1e-5f64).ln() / (2.0 * PI);
        assert!((gap - c.value).abs() < 5e-3, "gap {gap} c_x {}", c.value);
    }

    #[test]
    fn asymptote_is_cauchy() {
        let gaps: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&l| g_lambda(&law(), l).unwrap().value - (1.0 / l).ln() / (2.0 * PI))
            .collect();
        let c = c_x(&law()).unwrap().value;
        assert!((gaps[2] - c).abs() < (gaps[1] - c).abs());
        assert!((gaps[1] - c).abs() < (gaps[0] - c).abs());
        assert!((gaps[2] - gaps[1]).abs() < (gaps[1] - gaps[0]).abs());
    }

    #[test]
    fn resolvent_identity() {
        let a = green_series(&law(), 0.1, 64).unwrap();
        let b = green_series(&law(), 0.2, 64).unwrap();
        let r = resolvent_check(&a, &b, 5);
        assert!(r.max_residual < 1e-6, "{r:?}");
    }

    #[test]
    fn lm_norms() {
        let lambdas = [0.2_f64, 0.1, 0.05, 0.02];
        let tables: Vec<GreenTable> = lambdas.iter().map(|&l| green_series(&law(), l, 96).unwrap()).collect();
        for t in &tables {
            let n1 = green_lm_norm(t, 1);
            let target = 1.0 / -(-t.lambda).exp_m1();
            assert!((n1.value - target).abs() <= n1.bound + t.mass_bound() + 1e-9);
            let n8 = green_lm_norm(t, 8).value;
            assert!(n8 >= t.g_lambda && n8 < green_lm_norm(t, 4).value);
        }
        // ‖G_λ‖_m = O(λ^{-1/m}): fitted growth rate stays below 1/m, and at
        // m = 2 the scaled norm λ‖G_λ‖₂² decreases toward 1/(2π).
        let x: Vec<f64> = lambdas.iter().map(|l| (1.0 / l).ln()).collect();
        for m in [2u32, 3] {
            let y: Vec<f64> = tables.iter().map(|t| green_lm_norm(t, m).value.ln()).collect();
            let fit = line_fit(&x, &y, None);
            assert!(fit.slope > 0.0 && fit.slope < 1.0 / m as f64 + 0.1, "m {m}: slope {}", fit.slope);
        }
        let scaled: Vec<f64> = tables.iter().map(|t| t.lambda * green_lm_norm(t, 2).value.powi(2)).collect();
        assert!(scaled.windows(2).all(|w| w[1] < w[0]), "{scaled:?}");
        assert!(scaled.iter().all(|&v| v > 1.0 / (2.0 * PI)));
    }

    #[test]
    fn difference_tables() {
        let t = green_series(&law(), 0.1, 40).unwrap();
        let zero = diff_green(&t, Site::ORIGIN).unwrap();
        assert!(zero.values.iter().all(|(_, v)| *v == 0.0));
        let z = Site::new(2, 1);
        let d = diff_green(&t, z).unwrap();
        let dm = diff_green(&t, -z).unwrap();
        let lookup: std::collections::HashMap<Site, f64> = dm.values.iter().copied().collect();
        for &(x, v) in &d.values {
            if let Some(w) = lookup.get(&(x + z)) {
                assert!((w + v).abs() < 1e-15);
            }
        }
        assert!(matches!(diff_green(&t, Site::new(41, 0)), Err(GreenError::WindowExceeded { .. })));
        let lambdas = [0.2_f64, 0.1, 0.05, 0.02];
        let x: Vec<f64> = lambdas.iter().map(|l| (1.0 / l).ln()).collect();
        for m in [2u32, 3] {
            let y: Vec<f64> = lambdas
                .iter()
                .map(|&l| diff_green(&green_series(&law(), l, 96).unwrap(), Site::new(1, 0)).unwrap().norm(m).ln())
                .collect();
            let fit = line_fit(&x, &y, None);
            assert!(fit.slope <= 1.0 / m as f64 + 0.1, "m {m}: slope {}", fit.slope);
        }
    }

    #[test]
    fn csv_format() {
        let mut buf = Vec::new();
        write_green_csv(&mut buf, [(Site::new(1, -2), 0.5)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,y,G\n1,-2,5.0"));
    }
}
