//! Runners driven by walk simulation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use super::tolerances as tol;
use super::{finish, in_pool, replicas, ExperimentError, ExperimentResult, ExperimentSpec, Report};
use crate::brownian::mean_gamma2;
use crate::green::{c_x, g_lambda, green_series};
use crate::lattice::Site;
use crate::rng::{stream, subseed};
use crate::stats::{ks_two_sample, line_fit, Moments};
use crate::stepdist::StepSampler;
use crate::walk::{
    ilt_f64, renorm_ilt, sample_killed_horizon, shifted_renorm_ilt, streaming_range, OccupationMap,
    RangeCounter,
};

fn sorted_unique<T: PartialOrd + Copy>(v: &[T]) -> Vec<T> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| a == b);
    v
}

/// g̃_n = (1/2π) log n + c_X.
pub fn g_tilde(n: f64, cx: f64) -> f64 {
    n.ln() / (2.0 * PI) + cx
}

/// P_k(n) = Σ_{j ≤ k} (-1)^{j-1} g̃_n^{-j} E γ_j(1) for k ∈ {1, 2}.
pub fn range_prediction(k: usize, n: f64, cx: f64) -> f64 {
    let g = g_tilde(n, cx);
    let means = [1.0, mean_gamma2()];
    (1..=k.min(2)).map(|j| (-1f64).powi(j as i32 - 1) * means[j - 1] / g.powi(j as i32)).sum()
}

/// E|R(n)|/n against the one- and two-term predictions.
pub fn run_range_law(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    let ns = sorted_unique(&spec.n);
    if ns.is_empty() || ns[0] == 0 || spec.replicas < 2 {
        return Err(ExperimentError::Parameter("range needs n ≥ 1 and at least 2 replicas".into()));
    }
    let cx = c_x(&law)?;
    let sampler = StepSampler::new(&law);
    let seed = subseed(spec.seed, "range");
    let runs: Vec<Vec<usize>> = in_pool(spec.workers, || {
        replicas(spec.replicas, |r| {
            let mut counter = RangeCounter::new();
            streaming_range(&sampler, &ns, &mut counter, &mut stream(seed, r))
        })
    });
    let mut rep = Report::default();
    rep.bounded("c_x", cx.value, cx.bound);
    let mut csv = String::from("n,replicas,mean_range_over_n,stderr,P1,P2,best_order,log_n_times_mean\n");
    let mut trend = Vec::new();
    for (j, &n) in ns.iter().enumerate() {
        let nf = n as f64;
        let m: Moments = runs.iter().map(|r| r[j] as f64 / nf).collect();
        let (p1, p2) = (range_prediction(1, nf, cx.value), range_prediction(2, nf, cx.value));
        // dP/dc_X ≈ -1/g̃²
        let pb = cx.bound / g_tilde(nf, cx.value).powi(2);
        rep.mc(format!("mean_range_over_n[n={n}]"), &m);
        rep.bounded(format!("P1[n={n}]"), p1, pb);
        rep.bounded(format!("P2[n={n}]"), p2, 2.0 * pb);
        let best = if (m.mean - p2).abs() < (m.mean - p1).abs() { 2 } else { 1 };
        let ln = nf.ln();
        if n > 1 {
            rep.mc_value(format!("log_n_mean_ratio[n={n}]"), ln * m.mean, ln * m.std_error(), m.n);
            trend.push((n, ln * m.mean));
        }
        writeln!(csv, "{n},{},{},{},{p1},{p2},{best},{}", m.n, m.mean, m.std_error(), ln * m.mean).unwrap();
        if n == 1 {
            let all_one = runs.iter().all(|r| r[j] == 1);
            rep.push("range_at_one_step", all_one, m.mean, 1.0, 0.0, "|R(1)| = 1 on every replica");
        }
        if n >= tol::RANGE_CHECK_N {
            let rel = (m.mean - p2).abs() / p2;
            rep.push(
                format!("range_within_p2[n={n}]"),
                rel <= tol::RANGE_REL,
                m.mean,
                p2,
                tol::RANGE_REL * p2,
                format!("relative gap {rel:.4}"),
            );
            rep.push(
                format!("range_closer_to_p2[n={n}]"),
                (m.mean - p2).abs() < (m.mean - p1).abs(),
                (m.mean - p2).abs(),
                0.0,
                (m.mean - p1).abs(),
                "|mean - P2| < |mean - P1|",
            );
        }
    }
    if trend.len() >= 2 {
        let increasing = trend.windows(2).all(|w| w[1].1 > w[0].1);
        let last = trend.last().unwrap().1;
        rep.push(
            "log_n_ratio_increasing",
            increasing && last < 2.0 * PI,
            last,
            2.0 * PI,
            2.0 * PI,
            format!("log n · E|R(n)|/n along n: {:?}", trend.iter().map(|t| t.1).collect::<Vec<_>>()),
        );
    }
    rep.table("range.csv", csv);
    Ok(finish(spec, &law, start, rep))
}

fn walk_to_horizon(sampler: &StepSampler, len: u64, rng: &mut crate::rng::Stream) -> Vec<Site> {
    let mut pos = Vec::with_capacity(len as usize);
    let mut s = Site::ORIGIN;
    pos.push(s);
    for _ in 1..len {
        s += sampler.sample(rng);
        pos.push(s);
    }
    pos
}

/// Killed range mean and the L² expansion residuals at k = 1, 2.
pub fn run_killed_range(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    let lambdas = spec.lambda.clone();
    if lambdas.iter().any(|&l| !(l > 0.0 && l < 1.0)) || spec.replicas < 2 {
        return Err(ExperimentError::Parameter("killed-range needs 0 < lambda < 1 and at least 2 replicas".into()));
    }
    let sampler = StepSampler::new(&law);
    let mut rep = Report::default();
    let mut csv = String::from("lambda,g_lambda,exact_mean,mc_mean,stderr,second_moment_k1,se_k1,second_moment_k2,se_k2\n");
    let mut second = Vec::new();
    for (li, &lambda) in lambdas.iter().enumerate() {
        let g = g_lambda(&law, lambda)?;
        let gv = g.value;
        let exact = 1.0 / (-(-lambda).exp_m1() * gv);
        let seed = subseed(spec.seed, &format!("killed-range/{li}"));
        let rows: Vec<[f64; 3]> = in_pool(spec.workers, || {
            replicas(spec.replicas, |r| {
                let mut rng = stream(seed, r);
                let h = sample_killed_horizon(lambda, &mut rng);
                let pos = walk_to_horizon(&sampler, h.zeta_lambda, &mut rng);
                let occ = OccupationMap::from_sites(&pos, false);
                let range = occ.distinct_sites() as f64;
                let i1 = ilt_f64(&occ, 1);
                let i2 = ilt_f64(&occ, 2);
                let (gam1, gam2) = (i1, i2 - gv * i1);
                let r1 = lambda * gv * (range - gam1 / gv);
                let r2 = lambda * gv * gv * (range - gam1 / gv + gam2 / (gv * gv));
                [range, r1 * r1, r2 * r2]
            })
        });
        let m: Moments = rows.iter().map(|r| r[0]).collect();
        let s1: Moments = rows.iter().map(|r| r[1]).collect();
        let s2: Moments = rows.iter().map(|r| r[2]).collect();
        rep.bounded(format!("g_lambda[lambda={lambda}]"), gv, g.bound);
        rep.bounded(format!("exact_killed_mean[lambda={lambda}]"), exact, exact * g.bound / gv);
        rep.mc(format!("killed_range_mean[lambda={lambda}]"), &m);
        rep.mc(format!("l2_residual_k1[lambda={lambda}]"), &s1);
        rep.mc(format!("l2_residual_k2[lambda={lambda}]"), &s2);
        let band = tol::SE_BAND * m.std_error() + exact * g.bound / gv;
        rep.within(format!("killed_range_mean[lambda={lambda}]"), m.mean, exact, band, "within 3 SE of 1/((1-e^-λ)g_λ)");
        writeln!(
            csv,
            "{lambda},{gv},{exact},{},{},{},{},{},{}",
            m.mean,
            m.std_error(),
            s1.mean,
            s1.std_error(),
            s2.mean,
            s2.std_error()
        )
        .unwrap();
        second.push((lambda, s1.mean, s2.mean));
    }
    if second.len() >= 2 {
        let mut by_lambda = second.clone();
        by_lambda.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let decreasing = by_lambda.windows(2).all(|w| w[1].1 < w[0].1);
        rep.push(
            "l2_residual_k1_decreasing",
            decreasing,
            by_lambda.last().unwrap().1,
            0.0,
            by_lambda[0].1,
            format!("E[(λ g (|R| - Γ1/g))²] along decreasing λ: {:?}", by_lambda.iter().map(|t| t.1).collect::<Vec<_>>()),
        );
    }
    rep.table("killed_range.csv", csv);
    Ok(finish(spec, &law, start, rep))
}

/// Second-order CLT with freshly sampled Brownian γ₂ values.
pub fn run_clt_second_order(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    run_clt_with_gamma(spec, None)
}

/// Second-order CLT. `gamma2` supplies precomputed γ₂(1) samples; when
/// absent, `spec.paths` Brownian paths are simulated.
///
/// The walk statistic is (2π g̃_n)² (|R(n)|/n - 1/g̃_n), whose scale
/// log n + 2π c_X differs from log n by a constant; both are reported.
/// The mean is compared uncentered against E[-(2π)² γ₂(1)]; spread and
/// shape are compared after centering each side at its sample mean.
pub fn run_clt_with_gamma(spec: &ExperimentSpec, gamma2: Option<&[f64]>) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    let n = *spec.n.first().ok_or_else(|| ExperimentError::Parameter("clt needs n".into()))?;
    if spec.replicas < 2 {
        return Err(ExperimentError::Parameter("clt needs at least 2 replicas".into()));
    }
    let nf = n as f64;
    let cx = c_x(&law)?.value;
    let g = g_tilde(nf, cx);
    let scale = (2.0 * PI * g).powi(2);
    let sampler = StepSampler::new(&law);
    let seed = subseed(spec.seed, "clt/walk");
    let ratios: Vec<f64> = in_pool(spec.workers, || {
        replicas(spec.replicas, |r| {
            let mut counter = RangeCounter::new();
            streaming_range(&sampler, &[n], &mut counter, &mut stream(seed, r))[0] as f64 / nf
        })
    });
    let owned;
    let gamma: &[f64] = match gamma2 {
        Some(g) => g,
        None => {
            let eps = spec.eps_schedule();
            owned = in_pool(spec.workers, || super::gamma2_samples(spec.h, &eps, spec.paths, subseed(spec.seed, "clt/brown")))?
                .iter()
                .map(|e| e.value)
                .collect::<Vec<_>>();
            &owned
        }
    };
    if gamma.len() < 2 {
        return Err(ExperimentError::Parameter("clt needs at least 2 Brownian paths".into()));
    }
    let walk: Vec<f64> = ratios.iter().map(|r| scale * (r - 1.0 / g)).collect();
    let brown: Vec<f64> = gamma.iter().map(|v| -(2.0 * PI).powi(2) * v).collect();
    let mw: Moments = walk.iter().copied().collect();
    let mb: Moments = brown.iter().copied().collect();
    let center = |v: &[f64], m: f64| v.iter().map(|x| x - m).collect::<Vec<_>>();
    let (cw, cb) = (center(&walk, mw.mean), center(&brown, mb.mean));
    let ks = ks_two_sample(&cw, &cb);
    let ks_raw = ks_two_sample(&walk, &brown);
    let half = brown.len() / 2;
    let ks_self = ks_two_sample(&center(&brown[..half], 0.0), &center(&brown[half..], 0.0));
    let ln2 = nf.ln().powi(2);
    let sd_log: Moments = ratios.iter().map(|r| ln2 * r).collect();
    let sd_se = |m: &Moments| m.std_dev() / (2.0 * (m.n as f64 - 1.0)).sqrt();

    let mut rep = Report::default();
    rep.mc("walk_mean", &mw);
    rep.mc("brownian_mean", &mb);
    rep.mc_value("walk_sd", mw.std_dev(), sd_se(&mw), mw.n);
    rep.mc_value("brownian_sd", mb.std_dev(), sd_se(&mb), mb.n);
    rep.mc_value("walk_sd_log_n_squared_scale", sd_log.std_dev(), sd_se(&sd_log), sd_log.n);
    // KS distances carry their null fluctuation scale √((m + n)/(mn)) as error
    let ks_scale = |a: usize, b: usize| ((a + b) as f64 / (a * b) as f64).sqrt();
    rep.mc_value("ks_centered", ks.statistic, ks_scale(cw.len(), cb.len()), (cw.len() + cb.len()) as u64);
    rep.mc_value("ks_uncentered", ks_raw.statistic, ks_scale(walk.len(), brown.len()), (walk.len() + brown.len()) as u64);
    rep.mc_value("ks_brownian_self_distance", ks_self.statistic, ks_scale(half, brown.len() - half), brown.len() as u64);
    rep.bounded("mean_target", -(2.0 * PI).powi(2) * mean_gamma2(), 0.0);
    let rel_mean = (mw.mean - mb.mean).abs() / mb.mean.abs();
    let rel_sd = (mw.std_dev() - mb.std_dev()).abs() / mb.std_dev();
    rep.push("clt_mean", rel_mean <= tol::CLT_REL, mw.mean, mb.mean, tol::CLT_REL * mb.mean.abs(), format!("relative gap {rel_mean:.3}"));
    rep.push("clt_sd", rel_sd <= tol::CLT_REL, mw.std_dev(), mb.std_dev(), tol::CLT_REL * mb.std_dev(), format!("relative gap {rel_sd:.3}"));
    rep.push("clt_ks", ks.statistic < tol::CLT_KS, ks.statistic, 0.0, tol::CLT_KS, format!("p = {:.3}", ks.p_value));
    rep.push(
        "clt_sample_sizes",
        walk.len() >= 1000 && brown.len() >= 1000,
        walk.len().min(brown.len()) as f64,
        1000.0,
        0.0,
        "at least 1000 samples per side",
    );
    let mut csv = String::from("side,value,centered\n");
    for (v, c) in walk.iter().zip(&cw) {
        writeln!(csv, "walk,{v},{c}").unwrap();
    }
    for (v, c) in brown.iter().zip(&cb) {
        writeln!(csv, "brownian,{v},{c}").unwrap();
    }
    rep.table("clt.csv", csv);
    Ok(finish(spec, &law, start, rep))
}

/// Continuum offset norms λ^0.4, λ^0.3, λ^0.2 tested at each λ.
pub const HOELDER_POWERS: [f64; 3] = [0.4, 0.3, 0.2];

/// E|λΓ̄_{2,λ}(ζ_λ, y) - λΓ_{2,λ}(ζ_λ)|² for lattice offsets y/√λ nearest
/// to the continuum norms λ^{0.4}, λ^{0.3}, λ^{0.2}.
pub fn run_hoelder_trend(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    let start = Instant::now();
    let law = spec.load_law()?;
    if spec.k != 2 {
        return Err(ExperimentError::Parameter("offset statistics exist only for k = 2".into()));
    }
    if spec.replicas < 2 {
        return Err(ExperimentError::Parameter("hoelder needs at least 2 replicas".into()));
    }
    let sampler = StepSampler::new(&law);
    let mut rep = Report::default();
    let mut csv = String::from("lambda,y_norm,offset_x,offset_y,statistic,stderr\n");
    for (li, &lambda) in spec.lambda.iter().enumerate() {
        let offsets: Vec<Site> = HOELDER_POWERS.iter().map(|p| Site::nearest_with_norm(lambda.powf(*p) / lambda.sqrt())).collect();
        let reach = offsets.iter().map(|s| s.sup_norm()).max().unwrap_or(0).max(1);
        let table = green_series(&law, lambda, reach)?;
        let g = table.g_lambda;
        let seed = subseed(spec.seed, &format!("hoelder/{li}"));
        let rows: Vec<Vec<f64>> = in_pool(spec.workers, || {
            replicas(spec.replicas, |r| {
                let mut rng = stream(seed, r);
                let h = sample_killed_horizon(lambda, &mut rng);
                let pos = walk_to_horizon(&sampler, h.zeta_lambda, &mut rng);
                let occ = OccupationMap::from_sites(&pos, true);
                let green = |s: Site| table.get(s).expect("offset inside table");
                let base = renorm_ilt(&[ilt_f64(&occ, 1), ilt_f64(&occ, 2)], 2, g);
                let mut out = Vec::with_capacity(offsets.len() + 1);
                let at_zero = shifted_renorm_ilt(&occ, 2, &[Site::ORIGIN], green).expect("times kept") - base;
                out.push((lambda * at_zero).powi(2));
                for &y in &offsets {
                    let d = shifted_renorm_ilt(&occ, 2, &[y], green).expect("times kept") - base;
                    out.push((lambda * d).powi(2));
                }
                out
            })
        });
        let zero_exact = rows.iter().all(|r| r[0] == 0.0);
        rep.push(format!("hoelder_zero_offset[lambda={lambda}]"), zero_exact, 0.0, 0.0, 0.0, "statistic vanishes at y = 0");
        let mut stats = Vec::new();
        for (j, &y) in offsets.iter().enumerate() {
            let m: Moments = rows.iter().map(|r| r[j + 1]).collect();
            let ynorm = y.norm() * lambda.sqrt();
            rep.mc(format!("hoelder_statistic[lambda={lambda},y=({},{})]", y.x, y.y), &m);
            writeln!(csv, "{lambda},{ynorm},{},{},{},{}", y.x, y.y, m.mean, m.std_error()).unwrap();
            stats.push((ynorm, m));
        }
        let mut by_norm = stats.clone();
        by_norm.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let distinct = by_norm.windows(2).all(|w| w[1].0 > w[0].0);
        let increasing = distinct && by_norm.windows(2).all(|w| w[1].1.mean > w[0].1.mean);
        rep.push(
            format!("hoelder_monotone[lambda={lambda}]"),
            increasing,
            by_norm[0].1.mean,
            0.0,
            by_norm.last().unwrap().1.mean,
            format!("statistic by increasing |y|: {:?}", by_norm.iter().map(|s| s.1.mean).collect::<Vec<_>>()),
        );
        if distinct {
            let lx: Vec<f64> = by_norm.iter().map(|s| s.0.ln()).collect();
            let ly: Vec<f64> = by_norm.iter().map(|s| s.1.mean.ln()).collect();
            let sig: Vec<f64> = by_norm.iter().map(|s| s.1.std_error() / s.1.mean).collect();
            let fit = line_fit(&lx, &ly, Some(&sig));
            rep.mc_value(format!("hoelder_exponent[lambda={lambda}]"), fit.slope, fit.slope_se, spec.replicas as u64);
            rep.push(
                format!("hoelder_exponent_positive[lambda={lambda}]"),
                fit.slope > tol::HOELDER_SEPARATION * fit.slope_se,
                fit.slope,
                0.0,
                tol::HOELDER_SEPARATION * fit.slope_se,
                "fitted |y| exponent above 2 SE",
            );
        }
    }
    rep.table("hoelder.csv", csv);
    Ok(finish(spec, &law, start, rep))
}
