//! Gauss–Legendre panel quadrature, including a polar scheme for the
//! square [-π, π]² with geometric radial grading toward the origin.

use std::f64::consts::{FRAC_PI_4, PI};

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// ∫_a^b f.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Sum of the rule over consecutive panels given by `breaks`.
    pub fn integrate_panels<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> f64 {
        breaks
            .windows(2)
            .map(|w| self.integrate(w[0], w[1], &mut f))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Breakpoints `0, lo, 2 lo, 4 lo, …, hi` (ratio 2), with every panel wider
/// than `max_width` split evenly.
pub fn graded_breaks(lo: f64, hi: f64, max_width: f64) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo);
    let mut geo = vec![0.0];
    let mut r = lo;
    while r < hi {
        geo.push(r);
        r *= 2.0;
    }
    geo.push(hi);
    let mut out = vec![0.0];
    for w in geo.windows(2) {
        let pieces = ((w[1] - w[0]) / max_width).ceil().max(1.0) as usize;
        for j in 1..=pieces {
            out.push(w[0] + (w[1] - w[0]) * j as f64 / pieces as f64);
        }
    }
    out
}

/// ∫_0^∞ g(t) dt for integrands with at most a logarithmic singularity at 0
/// and exponential decay: panels graded geometrically toward 0, unit panels
/// out to 60.
pub fn integrate_half_line(g: impl Fn(f64) -> f64) -> f64 {
    let gl = GaussLegendre::new(20);
    let mut b = graded_breaks(1e-12, 1.0, 0.25);
    let mut r = 1.0;
    while r < 60.0 {
        r += 1.0;
        b.push(r);
    }
    gl.integrate_panels(&b, g)
}

/// Layout of the polar panel scheme on [-π, π]².
#[derive(Debug, Clone, Copy)]
pub struct PolarGrid {
    /// Radius of the innermost radial panel.
    pub r_min: f64,
    /// Angular panels per octant.
    pub theta_panels: usize,
    /// Maximum width of a radial panel, as a fraction of the boundary radius.
    pub max_radial_width: f64,
    /// Gauss–Legendre order on every panel.
    pub order: usize,
    /// Integrand satisfies f(p) = f(-p); only half the square is visited.
    pub even: bool,
}

impl PolarGrid {
    /// Grid at refinement `level`; each level doubles angular and outer
    /// radial resolution.
    pub fn at_level(r_min: f64, level: u32, extra: f64) -> Self {
        let scale = 1usize << level;
        let base = (2.0 + extra).ceil() as usize;
        PolarGrid {
            r_min,
            theta_panels: base * scale,
            max_radial_width: 1.0 / (base * scale) as f64,
            order: 12,
            even: true,
        }
    }
}

/// ∫_{[-π,π]²} f(p) dp by octant-wise polar coordinates.
///
/// In each octant the radius runs to the square's boundary ρ(θ); the radial
/// variable is rescaled to s = r/ρ(θ) ∈ [0, 1] and graded geometrically down
/// to s = r_min/π.
pub fn integrate_square_polar<F: Fn([f64; 2]) -> f64>(f: F, grid: &PolarGrid) -> f64 {
    let gl = GaussLegendre::new(grid.order);
    let s_min = (grid.r_min / PI).min(0.25);
    let sbreaks = graded_breaks(s_min, 1.0, grid.max_radial_width);
    let octants = if grid.even { 4 } else { 8 };
    let mut total = 0.0;
    for oct in 0..octants {
        let t0 = oct as f64 * FRAC_PI_4;
        let dt = FRAC_PI_4 / grid.theta_panels as f64;
        for tp in 0..grid.theta_panels {
            let a = t0 + tp as f64 * dt;
            total += gl.integrate(a, a + dt, |theta| {
                let (s, c) = theta.sin_cos();
                let rho = PI / c.abs().max(s.abs());
                let radial = gl.integrate_panels(&sbreaks, |u| {
                    let r = u * rho;
                    u * f([r * c, r * s])
                });
                radial * rho * rho
            });
        }
    }
    if grid.even {
        2.0 * total
    } else {
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_exactness() {
        let gl = GaussLegendre::new(8);
        assert_relative_eq!(gl.weights.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        // exact for degree 15
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert_relative_eq!(v, 2f64.powi(16) / 16.0, max_relative = 1e-13);
        let v = GaussLegendre::new(20).integrate(0.0, PI, f64::sin);
        assert_relative_eq!(v, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn graded_breaks_cover_interval() {
        let b = graded_breaks(1e-3, 1.0, 0.1);
        assert_eq!(b[0], 0.0);
        assert_eq!(*b.last().unwrap(), 1.0);
        assert!(b.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.1 + 1e-15));
    }

    #[test]
    fn polar_square_area_and_moments() {
        let grid = PolarGrid::at_level(1e-6, 1, 0.0);
        let area = integrate_square_polar(|_| 1.0, &grid);
        assert_relative_eq!(area, 4.0 * PI * PI, max_relative = 1e-13);
        // ∫ p1² over the square = (2π)(2π³/3)
        let m2 = integrate_square_polar(|p| p[0] * p[0], &grid);
        assert_relative_eq!(m2, 2.0 * PI * 2.0 * PI.powi(3) / 3.0, max_relative = 1e-12);
        let odd = PolarGrid { even: false, ..grid };
        let c = integrate_square_polar(|p| (p[0] + 2.0 * p[1]).cos(), &odd);
        assert!(c.abs() < 1e-11, "{c}");
    }

    #[test]
    fn polar_square_log_singularity() {
        // ∫ log|p| over the square, against a fine Cartesian reference computed
        // in closed form: 8 ∫_0^{π/4} ∫_0^{π/cos θ} r log r dr dθ.
        let grid = PolarGrid::at_level(1e-8, 2, 0.0);
        let v = integrate_square_polar(|p| (p[0].hypot(p[1])).ln(), &grid);
        let gl = GaussLegendre::new(30);
        let reference = 8.0
            * gl.integrate(0.0, FRAC_PI_4, |t| {
                let r = PI / t.cos();
                r * r / 2.0 * (r.ln() - 0.5)
            });
        assert_relative_eq!(v, reference, max_relative = 1e-12);
    }
}
