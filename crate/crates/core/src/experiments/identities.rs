//! Exact and closed-form identities, each usable on its own.

use std::f64::consts::PI;
use std::time::Instant;
use rand::Rng;

use super::tolerances as tol;
use super::{finish, in_pool, replicas, ExperimentError, ExperimentResult, ExperimentSpec, Report};
use crate::brownian::{
    alpha_table, alpha_table_direct, hat_gamma_from_table, renorm_transform, rescale_gamma, rescale_path, simulate_bm_stream,
    u_eps, u_one, RenormWeights,
};
use crate::green::{c_x, g_lambda, green_fourier, green_series, resolvent_check};
use crate::lattice::Site;
use crate::quadrature::integrate_half_line;
use crate::rng::{stream, subseed};
use crate::special::binomial_f64;
use crate::stats::Moments;
use crate::stepdist::{StepLaw, StepSampler};
use crate::walk::{hits_before_killing, ilt, ilt_brute, occupation_with_times, shifted_ilt, shifted_ilt_brute, simulate_walk_stream};

const OFFSETS: [Site; 6] =
    [Site::new(0, 0), Site::new(1, 0), Site::new(-1, 1), Site::new(0, 2), Site::new(2, -1), Site::new(1, 1)];

/// I_k and Ī_k against exhaustive enumeration for k ≤ 4, n ≤ 10.
pub fn check_combinatorial_oracles(law: &StepLaw, paths: usize, seed: u64, rep: &mut Report) -> Result<(), ExperimentError> {
    let mut mismatches = 0usize;
    let mut checks = 0usize;
    for i in 0..paths as u64 {
        let n = 1 + (i % 10) as usize;
        let w = simulate_walk_stream(law, n, seed, i);
        let occ = occupation_with_times(&w, n);
        for k in 1..=4 {
            checks += 1;
            mismatches += (ilt(&occ, k) != ilt_brute(&w, n, k)?) as usize;
            if k >= 2 {
                let x: Vec<Site> = (0..k - 1).map(|j| OFFSETS[(i as usize + 2 * j + k) % OFFSETS.len()]).collect();
                checks += 1;
                mismatches += (shifted_ilt(&occ, k, &x)? != shifted_ilt_brute(&w, n, k, &x)?) as usize;
            }
        }
    }
    rep.push(
        "combinatorial_oracles",
        mismatches == 0,
        mismatches as f64,
        0.0,
        0.0,
        format!("{checks} comparisons over {paths} paths"),
    );
    Ok(())
}

/// Total mass, discrete resolvent identity, and series/Fourier agreement.
pub fn check_green_identities(law: &StepLaw, lambdas: &[f64], rep: &mut Report) -> Result<(), ExperimentError> {
    let mut tables = Vec::new();
    for &lambda in lambdas {
        let hw = (12.0 / lambda.sqrt()).ceil() as i64;
        let t = green_series(law, lambda, hw)?;
        let want = 1.0 / -(-lambda).exp_m1();
        rep.bounded(format!("green_mass[lambda={lambda}]"), t.mass(), t.mass_bound());
        rep.within(format!("green_mass[lambda={lambda}]"), t.mass(), want, t.mass_bound(), "Σ G_λ = 1/(1-e^-λ) within the reported bound");
        tables.push(t);
    }
    let mut by_lambda: Vec<_> = tables.iter().collect();
    by_lambda.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    for w in by_lambda.windows(2) {
        let r = resolvent_check(w[0], w[1], 5);
        rep.push(
            format!("resolvent[lambda={},{}]", w[0].lambda, w[1].lambda),
            r.max_residual < tol::RESOLVENT,
            r.max_residual,
            0.0,
            tol::RESOLVENT,
            "discrete resolvent identity on |x|_∞ ≤ 5",
        );
    }
    let lambda = 0.05;
    let t = match tables.iter().find(|t| t.lambda == lambda) {
        Some(t) => t.clone(),
        None => green_series(law, lambda, 12)?,
    };
    // G is even, so half the disc suffices
    let sites: Vec<Site> = (-10i64..=10)
        .flat_map(|x| (-10i64..=10).map(move |y| Site::new(x, y)))
        .filter(|s| s.norm_sq() <= 100 && (s.x > 0 || (s.x == 0 && s.y >= 0)))
        .collect();
    let gaps: Vec<f64> = replicas(sites.len(), |i| {
        let s = sites[i as usize];
        green_fourier(law, lambda, s).map(|f| (f.value - t.get(s).expect("inside window")).abs())
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    rep.push(
        "series_fourier_agreement[lambda=0.05]",
        worst < tol::SERIES_FOURIER,
        worst,
        0.0,
        tol::SERIES_FOURIER,
        format!("{} sites with |x| ≤ 10 (and their reflections)", sites.len()),
    );
    Ok(())
}

/// |g_λ - log(1/λ)/2π - c_X| at a small λ.
pub fn check_green_asymptote(law: &StepLaw, lambda: f64, rep: &mut Report) -> Result<(), ExperimentError> {
    let c = c_x(law)?;
    let g = g_lambda(law, lambda)?;
    let residual = g.value - (1.0 / lambda).ln() / (2.0 * PI) - c.value;
    rep.bounded("c_x", c.value, c.bound);
    rep.bounded(format!("g_lambda[lambda={lambda}]"), g.value, g.bound);
    rep.push(
        format!("green_asymptote[lambda={lambda}]"),
        residual.abs() <= tol::GREEN_ASYMPTOTE,
        residual,
        0.0,
        tol::GREEN_ASYMPTOTE,
        "g_λ - log(1/λ)/2π against c_X",
    );
    Ok(())
}

/// P(T_x < ζ_λ) = G_λ(x)/g_λ by simulation.
pub fn check_hitting_identity(
    law: &StepLaw,
    lambda: f64,
    targets: &[Site],
    samples: usize,
    seed: u64,
    rep: &mut Report,
) -> Result<(), ExperimentError> {
    let g = g_lambda(law, lambda)?;
    let sampler = StepSampler::new(law);
    for (ti, &x) in targets.iter().enumerate() {
        let gx = green_fourier(law, lambda, x)?;
        let want = gx.value / g.value;
        let s = subseed(seed, &format!("hitting/{ti}"));
        let hits: Vec<bool> = replicas(samples, |r| hits_before_killing(&sampler, x, lambda, &mut stream(s, r)));
        let m: Moments = hits.iter().map(|&h| h as u8 as f64).collect();
        let bound = want * (gx.bound / gx.value + g.bound / g.value);
        rep.mc(format!("hitting_probability[x=({},{})]", x.x, x.y), &m);
        rep.bounded(format!("green_ratio[x=({},{})]", x.x, x.y), want, bound);
        rep.within(
            format!("hitting_identity[x=({},{}),lambda={lambda}]", x.x, x.y),
            m.mean,
            want,
            tol::SE_BAND * m.std_error() + bound,
            "within 3 SE of G_λ(x)/g_λ",
        );
    }
    Ok(())
}

/// u_ε and u¹ closed forms against quadrature of their defining integrals.
pub fn check_brownian_closed_forms(rep: &mut Report) -> Result<(), ExperimentError> {
    let mut worst: f64 = 0.0;
    for eps in [1e-3, 0.01, 0.1, 1.0, 5.0] {
        let q = integrate_half_line(|t| (-t).exp() / (2.0 * PI * (t + eps)));
        worst = worst.max((u_eps(eps) - q).abs());
    }
    rep.push("u_eps_closed_form", worst <= tol::BROWN_CLOSED_FORM, worst, 0.0, tol::BROWN_CLOSED_FORM, "∫ e^{-t} p_{t+ε}(0) dt");
    let mut worst: f64 = 0.0;
    for r in [0.1, 0.5, 1.0, 3.0] {
        for angle in [0.0, 0.7, 2.0] {
            let y = [r * f64::cos(angle), r * f64::sin(angle)];
            let q = integrate_half_line(|t| (-t - r * r / (2.0 * t)).exp() / (2.0 * PI * t));
            worst = worst.max((u_one(y)? - q).abs());
        }
    }
    rep.push("u_one_closed_form", worst <= tol::BROWN_CLOSED_FORM, worst, 0.0, tol::BROWN_CLOSED_FORM, "∫ e^{-t} p_t(y) dt");
    Ok(())
}

/// Renormalization round trip, Brownian rescaling (two routes and pathwise
/// on matched grids), and the geometric-coefficient tail.
pub fn check_lemma_identities(h: f64, paths: usize, seed: u64, rep: &mut Report) -> Result<(), ExperimentError> {
    // change of counter-term and back
    let mut rng = stream(subseed(seed, "renorm"), 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=6usize);
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b = rng.random_range(-2.0..2.0);
        let back = renorm_transform(&renorm_transform(&v, b), -b);
        for (x, y) in v.iter().zip(&back) {
            worst = worst.max((x - y).abs() / (1.0 + x.abs()));
        }
    }
    rep.push("renorm_roundtrip", worst <= tol::RENORM_ROUNDTRIP, worst, 0.0, tol::RENORM_ROUNDTRIP, "k ≤ 6, 200 random draws");

    // γ₂(1/r, ω_r) against r^{-1}(γ₂(1, ω) + b_r γ₁(1, ω)), r = 4
    let r = 4.0;
    let eps = crate::brownian::default_schedule(h);
    let s = subseed(seed, "rescale");
    let rows: Vec<[f64; 3]> = replicas(paths, |i| -> Result<[f64; 3], ExperimentError> {
        let p = simulate_bm_stream(h, 1.0, s, i);
        let q = rescale_path(&p, r)?;
        let a = {
            let t = alpha_table(&q, 2, &eps, 1.0 / r)?;
            hat_gamma_from_table(&t, &RenormWeights::brownian(2, &eps), 1.0 / r)?
        };
        let t = alpha_table(&p, 2, &eps, 1.0)?;
        let g1 = hat_gamma_from_table(&t, &RenormWeights::brownian(1, &eps), 1.0)?;
        let g2 = hat_gamma_from_table(&t, &RenormWeights::brownian(2, &eps), 1.0)?;
        let predicted = rescale_gamma(&[g1.value, g2.value], r)[1];
        Ok([a.value - predicted, a.error_estimate + g2.error_estimate / r, a.value])
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let d: Moments = rows.iter().map(|x| x[0]).collect();
    let e: Moments = rows.iter().map(|x| x[1]).collect();
    let individually = rows.iter().filter(|x| x[0].abs() <= x[1]).count() as f64 / rows.len().max(1) as f64;
    rep.mc("rescaling_two_route_gap", &d);
    rep.mc("rescaling_extrapolation_error", &e);
    rep.mc_value("rescaling_paths_within_own_error", individually, (individually * (1.0 - individually) / paths as f64).sqrt(), paths as u64);
    let band = tol::SE_BAND * d.std_error() + e.mean;
    rep.within("rescaling_two_route[k=2,r=4]", d.mean, 0.0, band, format!("{paths} paths; band = 3 SE + mean extrapolation error"));

    // pathwise α rescaling on matched grids
    let mut worst: f64 = 0.0;
    for i in 0..4u64 {
        let p = simulate_bm_stream(1e-3, 1.0, subseed(seed, "alpha-rescale"), i);
        let q = rescale_path(&p, r)?;
        let coarse = p.subsample(r as usize);
        let (t, e) = (0.25, 0.006);
        for l in 1..=3 {
            let lhs = alpha_table_direct(&q, l, &[e], t)?.alpha(0, l, t);
            let rhs = alpha_table_direct(&coarse, l, &[r * e], r * t)?.alpha(0, l, r * t) / r;
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1e-300));
        }
    }
    rep.push("alpha_rescaling_exact", worst <= tol::ALPHA_RESCALE, worst, 0.0, tol::ALPHA_RESCALE, "α_l(t, ω_r) = r^{-1} α_l(rt, ω) at matched ε");

    check_geometric_tail(rep);
    Ok(())
}

/// Σ_{j=m}^k C(j-1, m-1) x^{j-m} against (1-x)^{-m}. The gap is the tail
/// Σ_{i > k-m} C(i+m-1, m-1) x^i ≤ C(k, m-1) x^{k-m+1} (1-x)^{-m}; at m = 1
/// that is x^k/(1-x) ≤ 2x^k for x ≤ 1/2.
fn check_geometric_tail(rep: &mut Report) {
    let xs: [f64; 6] = [0.02, 0.05, 0.1, 0.2, 0.3, 0.5];
    let mut worst_m1: f64 = 0.0;
    let mut worst_general: f64 = 0.0;
    for m in 1..=4usize {
        for k in m..=8usize {
            for &x in &xs {
                let partial: f64 = (m..=k).map(|j| binomial_f64((j - 1) as u64, (m - 1) as u64) * x.powi((j - m) as i32)).sum();
                let closed = (1.0 - x).powi(-(m as i32));
                // the difference of two O(1) numbers carries a few ulps of rounding
                let gap = ((closed - partial).abs() - 8.0 * f64::EPSILON * closed).max(0.0);
                let order = x.powi((k - m + 1) as i32);
                if m == 1 {
                    worst_m1 = worst_m1.max(gap / (tol::SERIES_GAP_FACTOR * order));
                }
                let constant = binomial_f64(k as u64, (m - 1) as u64) * (1.0 - x).powi(-(m as i32));
                worst_general = worst_general.max(gap / (constant * order));
            }
        }
    }
    let example = (1.0_f64 / 0.9 - (1.0 + 0.1 + 0.01)).abs();
    rep.bounded("series_gap[m=1,k=3,x=0.1]", example, 1e-15);
    rep.push("series_gap_m1", worst_m1 <= 1.0, worst_m1, 0.0, 1.0, "gap / (2 x^k) for k ≤ 8, x ≤ 0.5");
    rep.push("series_gap_general", worst_general <= 1.0, worst_general, 0.0, 1.0, "gap / (C(k,m-1) x^{k-m+1} (1-x)^{-m}) for m ≤ 4");
}

/// Hitting targets and killing rate of the hitting-identity check.
pub const HITTING_TARGETS: [Site; 2] = [Site::new(1, 0), Site::new(3, 4)];
pub const HITTING_LAMBDA: f64 = 0.05;
pub const ASYMPTOTE_LAMBDA: f64 = 1e-5;

/// Every registered identity.
pub fn run_identity_suite(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    let mut rep = Report::default();
    in_pool(spec.workers, || -> Result<(), ExperimentError> {
        check_combinatorial_oracles(&law, 200, subseed(spec.seed, "oracles"), &mut rep)?;
        check_green_identities(&law, &spec.lambda, &mut rep)?;
        check_green_asymptote(&law, ASYMPTOTE_LAMBDA, &mut rep)?;
        check_hitting_identity(&law, HITTING_LAMBDA, &HITTING_TARGETS, spec.replicas, spec.seed, &mut rep)?;
        check_brownian_closed_forms(&mut rep)?;
        check_lemma_identities(spec.h, spec.paths, spec.seed, &mut rep)
    })?;
    Ok(finish(spec, &law, start, rep))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_tail_example() {
        let mut rep = Report::default();
        check_geometric_tail(&mut rep);
        let ex = rep.estimates.iter().find(|e| e.name.starts_with("series_gap[m=1")).unwrap();
        assert!((ex.value - 1.111_111e-3).abs() < 1e-9);
        assert!(ex.value <= 2.0 * 0.1f64.powi(3));
        assert!(rep.verdicts.iter().all(|v| v.passed), "{:?}", rep.verdicts);
    }

    #[test]
    fn oracles_on_reference_walk() {
        let mut rep = Report::default();
        check_combinatorial_oracles(&StepLaw::reference(), 30, 1, &mut rep).unwrap();
        assert!(rep.verdicts[0].passed);
    }
}
