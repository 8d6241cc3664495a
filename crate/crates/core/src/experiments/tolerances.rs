//! Every pass/fail threshold used by the runners, in one place.

use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerance {
    pub name: &'static str,
    pub value: f64,
    pub meaning: &'static str,
}

/// Width, in standard errors, of the band for Monte Carlo identities.
pub const SE_BAND: f64 = 3.0;
/// |E|R(n)|/n - P₂(n)| / P₂(n) at the largest tested n.
pub const RANGE_REL: f64 = 0.02;
/// Smallest n at which the two-term prediction is checked.
pub const RANGE_CHECK_N: usize = 1_000_000;
/// Relative agreement of CLT means and standard deviations.
pub const CLT_REL: f64 = 0.25;
/// Two-sample KS distance for the CLT comparison.
pub const CLT_KS: f64 = 0.15;
/// |g_λ - log(1/λ)/2π - c_X| at the smallest tested λ.
pub const GREEN_ASYMPTOTE: f64 = 5e-3;
pub const RESOLVENT: f64 = 1e-6;
pub const SERIES_FOURIER: f64 = 1e-6;
/// Closed forms of u_ε and u¹ against quadrature of their integrals.
pub const BROWN_CLOSED_FORM: f64 = 1e-8;
/// Renormalization change-of-counter-term round trip (relative).
pub const RENORM_ROUNDTRIP: f64 = 1e-12;
/// Pathwise α rescaling on matched grids (relative).
pub const ALPHA_RESCALE: f64 = 1e-12;
/// Coefficient of x^{k-m+1} allowed in the geometric-coefficient gap at m = 1.
pub const SERIES_GAP_FACTOR: f64 = 2.0;
/// Goodness-of-fit p-value floor for coupler marginals.
pub const GOF_P: f64 = 0.01;
/// Separation, in combined standard errors, of the B = 1 and largest-B exponents.
pub const COUPLING_SEPARATION: f64 = 2.0;
/// Margin, in standard errors, for the fitted Hölder exponent.
pub const HOELDER_SEPARATION: f64 = 2.0;
/// Total-variation defect allowed in each coupler marginal.
pub const MARGINAL_TV: f64 = 1e-9;

pub const REGISTRY: &[Tolerance] = &[
    Tolerance { name: "se_band", value: SE_BAND, meaning: "standard errors allowed for Monte Carlo identities" },
    Tolerance { name: "range_rel", value: RANGE_REL, meaning: "relative gap of E|R(n)|/n to P2(n)" },
    Tolerance { name: "range_check_n", value: RANGE_CHECK_N as f64, meaning: "smallest n for the P2 check" },
    Tolerance { name: "clt_rel", value: CLT_REL, meaning: "relative gap of CLT means and standard deviations" },
    Tolerance { name: "clt_ks", value: CLT_KS, meaning: "two-sample KS distance for the CLT" },
    Tolerance { name: "green_asymptote", value: GREEN_ASYMPTOTE, meaning: "Green asymptote residual at the smallest lambda" },
    Tolerance { name: "resolvent", value: RESOLVENT, meaning: "discrete resolvent identity residual" },
    Tolerance { name: "series_fourier", value: SERIES_FOURIER, meaning: "series vs Fourier Green values" },
    Tolerance { name: "brown_closed_form", value: BROWN_CLOSED_FORM, meaning: "u_eps and u_one closed forms vs quadrature" },
    Tolerance { name: "renorm_roundtrip", value: RENORM_ROUNDTRIP, meaning: "counter-term change round trip (relative)" },
    Tolerance { name: "alpha_rescale", value: ALPHA_RESCALE, meaning: "pathwise alpha rescaling (relative)" },
    Tolerance { name: "series_gap_factor", value: SERIES_GAP_FACTOR, meaning: "constant in the m = 1 geometric tail bound" },
    Tolerance { name: "gof_p", value: GOF_P, meaning: "p-value floor for coupler marginals" },
    Tolerance { name: "coupling_separation", value: COUPLING_SEPARATION, meaning: "standard errors between extreme block exponents" },
    Tolerance { name: "hoelder_separation", value: HOELDER_SEPARATION, meaning: "standard errors for a positive Hoelder exponent" },
    Tolerance { name: "marginal_tv", value: MARGINAL_TV, meaning: "coupler marginal total-variation defect" },
];

pub fn lookup(name: &str) -> Option<f64> {
    REGISTRY.iter().find(|t| t.name == name).map(|t| t.value)
}
