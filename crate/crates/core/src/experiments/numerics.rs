//! Runners for deterministic numerics, Brownian sampling and the coupler.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use super::tolerances as tol;
use super::{csv_string, finish, in_pool, replicas, ExperimentError, ExperimentResult, ExperimentSpec, Report};
use crate::brownian::{alpha_table, hat_gamma_from_table, mean_gamma2, simulate_bm_stream, write_gamma_csv, BrownError, GammaEstimate, GammaRow, RenormWeights};
use crate::coupling::{build_block_coupler, coupling_error_stats, write_couple_csv};
use crate::green::{c_x, g_lambda, green_fourier, green_series, write_green_csv};
use crate::lattice::Site;
use crate::rng::{stream, subseed};
use crate::special::normal_cdf;
use crate::stats::{chi_square_gof, ks_one_sample, Moments};

/// γ₂(1) on `paths` independent Brownian paths; path i uses stream i of `seed`.
pub fn gamma2_samples(h: f64, eps: &[f64], paths: usize, seed: u64) -> Result<Vec<GammaEstimate>, BrownError> {
    replicas(paths, |i| {
        let p = simulate_bm_stream(h, 1.0, seed, i);
        let table = alpha_table(&p, 2, eps, 1.0)?;
        hat_gamma_from_table(&table, &RenormWeights::brownian(2, eps), 1.0)
    })
    .into_iter()
    .collect()
}

/// Green tables G_λ(x) on |x|_∞ ≤ half_width.
pub fn run_green(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    let mut rep = Report::default();
    for &lambda in &spec.lambda {
        let file = if spec.lambda.len() == 1 { "green.csv".to_string() } else { format!("green_lambda={lambda}.csv") };
        if (0.01..1.0).contains(&lambda) {
            let t = green_series(&law, lambda, spec.half_width)?;
            rep.bounded(format!("g_lambda[lambda={lambda}]"), t.g_lambda, t.tail_bound + t.wrap_bound);
            rep.bounded(format!("window_mass[lambda={lambda}]"), t.mass(), t.mass_bound());
            let want = 1.0 / -(-lambda).exp_m1();
            rep.within(format!("mass_identity[lambda={lambda}]"), t.mass(), want, t.mass_bound(), "window mass within its bound of 1/(1-e^-λ)");
            rep.table(file, csv_string(|b| write_green_csv(b, t.iter()))?);
        } else {
            let r = spec.half_width;
            let mut rows = Vec::new();
            let mut worst: f64 = 0.0;
            for y in -r..=r {
                for x in -r..=r {
                    let e = green_fourier(&law, lambda, Site::new(x, y))?;
                    worst = worst.max(e.bound);
                    rows.push((Site::new(x, y), e.value));
                }
            }
            let g = rows.iter().find(|(s, _)| *s == Site::ORIGIN).unwrap().1;
            rep.bounded(format!("g_lambda[lambda={lambda}]"), g, worst);
            rep.table(file, csv_string(|b| write_green_csv(b, rows))?);
        }
    }
    Ok(finish(spec, &law, start, rep))
}

/// c_X and the residual of the Green asymptote along λ.
pub fn run_cx(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    let c = c_x(&law)?;
    let mut rep = Report::default();
    rep.bounded("c_x", c.value, c.bound);
    rep.bounded("c_x_disc_term", c.disc_term, 0.0);
    rep.bounded("c_x_corner_term", c.corner_term, 1e-15);
    rep.bounded("c_x_integral_term", c.integral_term, c.bound);
    let mut lambdas = spec.lambda.clone();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut csv = String::from("lambda,g_lambda,bound,gap,c_x,residual\n");
    let mut residuals = Vec::new();
    for &lambda in &lambdas {
        let g = g_lambda(&law, lambda)?;
        let gap = g.value - (1.0 / lambda).ln() / (2.0 * PI);
        rep.bounded(format!("asymptote_gap[lambda={lambda}]"), gap, g.bound);
        writeln!(csv, "{lambda},{},{},{gap},{},{}", g.value, g.bound, c.value, gap - c.value).unwrap();
        residuals.push((gap - c.value).abs());
    }
    if let (Some(&lambda), Some(&res)) = (lambdas.last(), residuals.last()) {
        rep.push(
            format!("green_asymptote[lambda={lambda}]"),
            res <= tol::GREEN_ASYMPTOTE,
            res,
            0.0,
            tol::GREEN_ASYMPTOTE,
            "|g_λ - log(1/λ)/2π - c_X|",
        );
    }
    if residuals.len() >= 2 {
        rep.push(
            "green_asymptote_shrinking",
            residuals.windows(2).all(|w| w[1] < w[0]),
            *residuals.last().unwrap(),
            0.0,
            residuals[0],
            format!("residuals along decreasing λ: {residuals:?}"),
        );
    }
    rep.table("cx.csv", csv);
    Ok(finish(spec, &law, start, rep))
}

/// γ_1..γ_k(1) over Brownian paths; checks E γ₂(1) = (γ_Euler - 1)/(2π).
pub fn run_gamma(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    let k = spec.k;
    if !(1..=6).contains(&k) || spec.paths < 2 {
        return Err(ExperimentError::Parameter("gamma needs 1 ≤ k ≤ 6 and at least 2 paths".into()));
    }
    let eps = spec.eps_schedule();
    let seed = subseed(spec.seed, "gamma");
    let per_path: Vec<Vec<GammaEstimate>> = in_pool(spec.workers, || {
        replicas(spec.paths, |i| -> Result<Vec<GammaEstimate>, BrownError> {
            let p = simulate_bm_stream(spec.h, 1.0, seed, i);
            let table = alpha_table(&p, k, &eps, 1.0)?;
            (1..=k).map(|j| hat_gamma_from_table(&table, &RenormWeights::brownian(j, &eps), 1.0)).collect()
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
    })?;
    let mut rep = Report::default();
    let mut rows = Vec::new();
    for (i, gs) in per_path.iter().enumerate() {
        for g in gs {
            rows.extend(GammaRow::rows(i as u64, g));
        }
    }
    for j in 1..=k {
        let m: Moments = per_path.iter().map(|g| g[j - 1].value).collect();
        rep.mc(format!("gamma_mean[k={j}]"), &m);
        for (l, e) in eps.iter().enumerate() {
            let ml: Moments = per_path.iter().map(|g| g[j - 1].levels[l]).collect();
            rep.mc(format!("gamma_level_mean[k={j},eps={e}]"), &ml);
        }
        let conv: Moments = per_path.iter().map(|g| g[j - 1].converging as u8 as f64).collect();
        rep.mc(format!("fraction_gaps_shrinking[k={j}]"), &conv);
        if j == 2 {
            let target = mean_gamma2();
            rep.within("gamma2_mean", m.mean, target, tol::SE_BAND * m.std_error(), format!("{} paths, ε = {eps:?}", m.n));
        }
    }
    rep.table("gamma.csv", csv_string(|b| write_gamma_csv(b, &rows))?);
    Ok(finish(spec, &law, start, rep))
}

/// Block draws used for each goodness-of-fit test.
pub const GOF_DRAWS: usize = 100_000;

/// Coupler marginals and D(n) growth for each block size.
pub fn run_couple(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    let mut ns = spec.n.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 2 || ns.iter().any(|n| !n.is_power_of_two()) || spec.replicas < 2 {
        return Err(ExperimentError::Parameter("couple needs at least two dyadic n and two replicas".into()));
    }
    let mut blocks = spec.block.clone();
    blocks.sort_unstable();
    blocks.dedup();
    let mut rep = Report::default();
    let mut all = Vec::new();
    for &b in &blocks {
        let coupler = in_pool(spec.workers, || build_block_coupler(&law, b))?;
        let d = &coupler.diagnostics;
        rep.bounded(format!("transport_cost[B={b}]"), d.transport_cost, d.gauss_defect + d.walk_defect);
        rep.bounded(format!("eta[B={b}]"), d.eta, 0.0);
        rep.push(
            format!("marginal_defects[B={b}]"),
            d.walk_defect < tol::MARGINAL_TV && d.gauss_defect < tol::MARGINAL_TV,
            d.walk_defect.max(d.gauss_defect),
            0.0,
            tol::MARGINAL_TV,
            format!("walk {:.2e}, gaussian {:.2e}", d.walk_defect, d.gauss_defect),
        );
        let mut rng = stream(subseed(spec.seed, &format!("couple/gof/{b}")), 0);
        let draws: Vec<_> = (0..GOF_DRAWS).map(|_| coupler.sample_block(&mut rng)).collect();
        let sites: Vec<(Site, f64)> = coupler.walk_sites().collect();
        let index: rustc_hash::FxHashMap<Site, usize> = sites.iter().enumerate().map(|(i, s)| (s.0, i)).collect();
        let mut counts = vec![0u64; sites.len()];
        for dr in &draws {
            counts[index[&dr.walk]] += 1;
        }
        let chi = chi_square_gof(&counts, &sites.iter().map(|s| s.1).collect::<Vec<_>>(), 5.0);
        rep.push(format!("walk_marginal_gof[B={b}]"), chi.p_value > tol::GOF_P, chi.p_value, 1.0, 1.0 - tol::GOF_P, format!("chi-square {:.1}", chi.statistic));
        let sd = (b as f64).sqrt();
        for c in 0..2 {
            let xs: Vec<f64> = draws.iter().map(|dr| dr.gauss[c] / sd).collect();
            let ks = ks_one_sample(&xs, normal_cdf);
            rep.push(format!("gaussian_marginal_gof[B={b},coord={c}]"), ks.p_value > tol::GOF_P, ks.p_value, 1.0, 1.0 - tol::GOF_P, format!("KS {:.4}", ks.statistic));
        }
        let s = in_pool(spec.workers, || coupling_error_stats(&coupler, &ns, spec.replicas, subseed(spec.seed, &format!("couple/{b}"))));
        for (j, &n) in ns.iter().enumerate() {
            rep.mc_value(format!("D_rms[B={b},n={n}]"), s.d_rms[j], s.stderr[j], s.replicas as u64);
        }
        rep.mc_value(format!("exponent[B={b}]"), s.exponent, s.exponent_se, s.replicas as u64);
        rep.push(
            format!("d_nondecreasing[B={b}]"),
            s.d_rms.windows(2).all(|w| w[1] >= w[0]),
            s.d_rms[s.d_rms.len() - 1],
            s.d_rms[0],
            0.0,
            "running maximum over a growing prefix",
        );
        let ratio: Vec<f64> = s.d_rms.iter().zip(&ns).map(|(d, &n)| d / (n as f64).sqrt()).collect();
        let (first, last) = (ratio[0], ratio[ratio.len() - 1]);
        let last_se = s.stderr[ratio.len() - 1] / (*ns.last().unwrap() as f64).sqrt();
        rep.push(
            format!("diffusive_bound[B={b}]"),
            last <= first + tol::SE_BAND * last_se,
            last,
            first,
            tol::SE_BAND * last_se,
            "D(n)/√n does not grow",
        );
        all.push(s);
    }
    if all.len() >= 2 {
        let mono = all.windows(2).all(|w| w[1].exponent <= w[0].exponent);
        rep.push(
            "exponent_nonincreasing",
            mono,
            all.last().unwrap().exponent,
            all[0].exponent,
            0.0,
            format!("exponents by block: {:?}", all.iter().map(|s| (s.block, s.exponent)).collect::<Vec<_>>()),
        );
        let (lo, hi) = (&all[0], all.last().unwrap());
        let se = (lo.exponent_se.powi(2) + hi.exponent_se.powi(2)).sqrt();
        rep.push(
            format!("exponent_separation[B={}vs{}]", lo.block, hi.block),
            hi.exponent < lo.exponent - tol::COUPLING_SEPARATION * se,
            hi.exponent,
            lo.exponent,
            tol::COUPLING_SEPARATION * se,
            "largest-block exponent below smallest-block exponent by 2 SE",
        );
    }
    rep.table("couple.csv", csv_string(|b| write_couple_csv(b, &all))?);
    Ok(finish(spec, &law, start, rep))
}
