//! Shifted Legendre polynomials on `[0, 1]` and their roots.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest stage count accepted by the root finder.
pub const MAX_STAGES: usize = 12;

/// `(p_k(x), p_k'(x))` for the classical Legendre polynomial on `[-1, 1]`,
/// by the three-term recurrence.
pub fn legendre(k: usize, x: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    let (mut dprev, mut dcur) = (0.0, 1.0);
    for n in 1..k {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * cur - nf * prev) / (nf + 1.0);
        let dnext = ((2.0 * nf + 1.0) * (cur + x * dcur) - nf * dprev) / (nf + 1.0);
        prev = cur;
        cur = next;
        dprev = dcur;
        dcur = dnext;
    }
    (cur, dcur)
}

/// Shifted Legendre polynomial normalised to unit `L²(0, 1)` norm,
/// `P_k(λ) = √(2k+1) p_k(2λ − 1)`.
pub fn shifted_legendre(k: usize, lambda: f64) -> f64 {
    ((2 * k + 1) as f64).sqrt() * legendre(k, 2.0 * lambda - 1.0).0
}

/// Same polynomial from its explicit binomial expansion. Cancels badly for
/// large `k`; only used as a cross-check for small degrees.
pub fn shifted_legendre_binomial(k: usize, lambda: f64) -> f64 {
    let mut sum = 0.0;
    for m in 0..=k {
        let sign = if (m + k).is_multiple_of(2) { 1.0 } else { -1.0 };
        sum += sign * binomial(k, m) * binomial(m + k, m) * lambda.powi(m as i32);
    }
    ((2 * k + 1) as f64).sqrt() * sum
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Gauss–Legendre nodes on `[-1, 1]`, ascending, with the matching weights.
///
/// Nodes are the eigenvalues of the symmetric Jacobi matrix of the Legendre
/// recurrence, polished by one Newton step on `p_s` and symmetrised.
pub(crate) fn gauss_legendre_symmetric(s: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if s == 0 || s > MAX_STAGES {
        return Err(Error::UnsupportedStages { stages: s, max: MAX_STAGES });
    }
    let mut jacobi = DMatrix::zeros(s, s);
    for k in 1..s {
        let kf = k as f64;
        let beta = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = beta;
        jacobi[(k, k - 1)] = beta;
    }
    let mut x: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    x.sort_by(|a, b| a.total_cmp(b));
    for xi in x.iter_mut() {
        let (p, dp) = legendre(s, *xi);
        *xi -= p / dp;
    }
    for i in 0..s / 2 {
        let m = 0.5 * (x[s - 1 - i] - x[i]);
        x[i] = -m;
        x[s - 1 - i] = m;
    }
    if s % 2 == 1 {
        x[s / 2] = 0.0;
    }
    let w = x
        .iter()
        .map(|&xi| {
            let (_, dp) = legendre(s, xi);
            2.0 / ((1.0 - xi * xi) * dp * dp)
        })
        .collect();
    Ok((x, w))
}

/// Gauss nodes and weights mapped to `[0, 1]`.
pub fn gauss_rule_unit(s: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w) = gauss_legendre_symmetric(s)?;
    Ok((
        x.iter().map(|xi| 0.5 * (1.0 + xi)).collect(),
        w.iter().map(|wi| 0.5 * wi).collect(),
    ))
}

/// Zeros of the `s`-th shifted Legendre polynomial, ascending in `(0, 1)`.
pub fn shifted_legendre_roots(s: usize) -> Result<Vec<f64>> {
    Ok(gauss_rule_unit(s)?.0)
}
