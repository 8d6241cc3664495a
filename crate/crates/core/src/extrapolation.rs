//! Richardson-type extrapolation with known error exponents.
//!
//! Given values f(ε_i) believed to behave like
//! f(ε) = f₀ + Σ_j c_j ε^{p_j}, the weights w with Σ w_i = 1 and
//! Σ w_i ε_i^{p_j} = 0 eliminate the listed error terms exactly.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    pub weights: Vec<f64>,
    /// |value - (extrapolate that drops the last exponent and the coarsest level)|
    pub error_estimate: f64,
}

/// Extrapolate to ε → 0 from `levels.len() == exponents.len() + 1` values.
pub fn extrapolate(eps: &[f64], values: &[f64], exponents: &[f64]) -> Extrapolation {
    assert_eq!(eps.len(), values.len());
    assert_eq!(eps.len(), exponents.len() + 1, "need one more level than error terms");
    let weights = weights_for(eps, exponents);
    let value = dot(&weights, values);
    let error_estimate = if exponents.is_empty() {
        f64::NAN
    } else {
        // drop the coarsest level and the last error term
        let w2 = weights_for(&eps[1..], &exponents[..exponents.len() - 1]);
        (value - dot(&w2, &values[1..])).abs()
    };
    Extrapolation { value, weights, error_estimate }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn weights_for(eps: &[f64], exponents: &[f64]) -> Vec<f64> {
    let n = eps.len();
    // rows: 1, ε^{p_1}, …; solve A^T-style system M w = e_0
    let mut m = vec![vec![0.0; n + 1]; n];
    for (i, row) in m.iter_mut().enumerate() {
        for j in 0..n {
            row[j] = if i == 0 { 1.0 } else { eps[j].powf(exponents[i - 1]) };
        }
        row[n] = if i == 0 { 1.0 } else { 0.0 };
    }
    solve_in_place(&mut m)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_in_place(m: &mut [Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular extrapolation system");
        for r in 0..n {
            if r != col {
                let f = m[r][col] / p;
                if f != 0.0 {
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}
