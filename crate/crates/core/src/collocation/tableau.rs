//! Collocation Butcher tableaus.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::legendre::{gauss_rule_unit, shifted_legendre_roots, MAX_STAGES};
use crate::error::{Error, Result};

/// `(c, A, b)` of an `s`-stage collocation method, with `A⁻¹` and
/// `ρ = 1 − bᵀA⁻¹e` cached.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    pub s: usize,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub a_inv: DMatrix<f64>,
    pub rho: f64,
    /// Classical order (the quadrature order of `(c, b)`).
    pub order: usize,
    /// `bᵀA⁻¹`, the weights mapping stage values of the algebraic variables to
    /// the step-end value.
    pub b_a_inv: DVector<f64>,
}

/// The `s`-stage Gauss method.
pub fn gauss_tableau(s: usize) -> Result<ButcherTableau> {
    let c = shifted_legendre_roots(s)?;
    collocation_tableau(&c)
}

/// Collocation method for distinct abscissae `c ⊂ [0, 1]`.
///
/// `a_ij = ∫₀^{c_i} ℓ_j`, `b_i = ∫₀¹ ℓ_i` for the Lagrange basis `ℓ_j` on `c`,
/// integrated with an `s`-point Gauss rule (exact for the degree `s − 1`
/// integrands).
pub fn collocation_tableau(c: &[f64]) -> Result<ButcherTableau> {
    let s = c.len();
    if s == 0 || s > MAX_STAGES {
        return Err(Error::UnsupportedStages { stages: s, max: MAX_STAGES });
    }
    if c.iter().any(|ci| !(0.0..=1.0).contains(ci)) {
        return Err(Error::InvalidInput("collocation abscissae must lie in [0, 1]".into()));
    }
    if c.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "collocation abscissae must be strictly increasing".into(),
        ));
    }
    let (nodes, weights) = gauss_rule_unit(s)?;
    let integrate = |j: usize, upper: f64| -> f64 {
        upper
            * nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * lagrange(c, j, upper * x))
                .sum::<f64>()
    };
    let a = DMatrix::from_fn(s, s, |i, j| integrate(j, c[i]));
    let b = DVector::from_fn(s, |i, _| integrate(i, 1.0));
    let a_inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("collocation matrix A is singular".into()))?;
    let b_a_inv = a_inv.transpose() * &b;
    let rho = 1.0 - b_a_inv.sum();
    let c = DVector::from_column_slice(c);
    let order = quadrature_order(&c, &b);
    Ok(ButcherTableau { s, c, a, b, a_inv, rho, order, b_a_inv })
}

fn lagrange(c: &[f64], j: usize, x: f64) -> f64 {
    c.iter()
        .enumerate()
        .filter(|(l, _)| *l != j)
        .map(|(_, cl)| (x - cl) / (c[j] - cl))
        .product()
}

/// Largest `p ≤ 2s` with `Σ b_i c_i^{k−1} = 1/k` for `k = 1..=p`.
fn quadrature_order(c: &DVector<f64>, b: &DVector<f64>) -> usize {
    let mut p = 0;
    for k in 1..=(2 * c.len()) {
        let q: f64 = b.iter().zip(c.iter()).map(|(bi, ci)| bi * ci.powi(k as i32 - 1)).sum();
        if (q - 1.0 / k as f64).abs() > 1e-12 {
            break;
        }
        p = k;
    }
    p
}

impl ButcherTableau {
    /// `max_i |Σ_j a_ij c_j^{k−1} − c_i^k / k|` over `k = 1..=q`.
    pub fn simplifying_condition_error(&self, q: usize) -> f64 {
        let mut err: f64 = 0.0;
        for k in 1..=q {
            for i in 0..self.s {
                let lhs: f64 = (0..self.s)
                    .map(|j| self.a[(i, j)] * self.c[j].powi(k as i32 - 1))
                    .sum();
                err = err.max((lhs - self.c[i].powi(k as i32) / k as f64).abs());
            }
        }
        err
    }

    /// Plain-text table: one `c_i | a_i1 … a_is` row per stage and a final
    /// `| b_1 … b_s` row, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {}-stage collocation tableau, order {}, rho = {:.16e}",
            self.s, self.order, self.rho
        );
        for i in 0..self.s {
            let _ = write!(out, "{:>24.16e} |", self.c[i]);
            for j in 0..self.s {
                let _ = write!(out, " {:>24.16e}", self.a[(i, j)]);
            }
            out.push('\n');
        }
        let _ = write!(out, "{:>24} |", "");
        for j in 0..self.s {
            let _ = write!(out, " {:>24.16e}", self.b[j]);
        }
        out.push('\n');
        out
    }
}
