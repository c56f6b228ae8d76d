//! Numerical checks of the closed-form identities behind the Gauss
//! collocation analysis: the Legendre matrix `G`, the tridiagonal similarity
//! form `X_G`, `det A = s!/(2s)!` and the stability limit `ρ = (−1)^s`.

use nalgebra::{DMatrix, DVector};

use crate::collocation::{gauss_rule_unit, gauss_tableau, shifted_legendre, shifted_legendre_binomial};
use crate::error::{Error, Result};

/// Largest `s` for the matrix constructions.
pub const MAX_APPENDIX_STAGES: usize = 10;
/// Beyond this `s` the determinant comparison sits at the double-precision
/// floor and is reported but not asserted.
pub const DET_CHECK_MAX_STAGES: usize = 8;

pub const DET_TOL: f64 = 1e-10;
pub const RHO_TOL: f64 = 1e-10;
pub const B_A_INV_E_TOL: f64 = 1e-10;
pub const GBG_TOL: f64 = 1e-11;
pub const SIMILARITY_TOL: f64 = 1e-11;
pub const QUADRATURE_TOL: f64 = 1e-12;
pub const RECURRENCE_TOL: f64 = 1e-10;
pub const MEAN_TOL: f64 = 1e-12;

fn check_stages(s: usize) -> Result<()> {
    if (1..=MAX_APPENDIX_STAGES).contains(&s) {
        Ok(())
    } else {
        Err(Error::UnsupportedStages { stages: s, max: MAX_APPENDIX_STAGES })
    }
}

/// `ξ_k = 1 / (2√(4k² − 1))`.
pub fn xi(k: usize) -> f64 {
    let k = k as f64;
    0.5 / (4.0 * k * k - 1.0).sqrt()
}

/// `G_ij = P_{j−1}(γ_i)` at the Gauss nodes.
pub fn matrix_g(s: usize) -> Result<DMatrix<f64>> {
    check_stages(s)?;
    let tab = gauss_tableau(s)?;
    Ok(DMatrix::from_fn(s, s, |i, j| shifted_legendre(j, tab.c[i])))
}

/// The tridiagonal matrix with `½` in the corner, `ξ_k` below and `−ξ_k`
/// above the diagonal.
pub fn matrix_xg(s: usize) -> Result<DMatrix<f64>> {
    check_stages(s)?;
    let mut x = DMatrix::zeros(s, s);
    x[(0, 0)] = 0.5;
    for k in 1..s {
        x[(k, k - 1)] = xi(k);
        x[(k - 1, k)] = -xi(k);
    }
    Ok(x)
}

/// `s!/(2s)!` from exact integer arithmetic.
pub fn det_closed_form(s: usize) -> f64 {
    let denom: u128 = ((s as u128 + 1)..=(2 * s as u128)).product();
    1.0 / denom as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppendixReport {
    pub s: usize,
    /// `‖GᵀBG − I‖_max`.
    pub gbg_error: f64,
    /// `‖G⁻¹AG − X_G‖_max`.
    pub similarity_error: f64,
    pub det_a: f64,
    pub det_closed_form: f64,
    /// `1 − bᵀA⁻¹e`.
    pub rho_numeric: f64,
    pub rho_closed_form: f64,
    pub b_a_inv_e: f64,
    /// Worst `|Σ bᵢP_k(γᵢ)P_l(γᵢ) − δ_kl|` over `k + l ≤ 2s − 2`.
    pub quadrature_error: f64,
    /// Worst pointwise error of `∫₀^λ P_k = ξ_{k+1}P_{k+1}(λ) − ξ_k P_{k−1}(λ)`.
    pub recurrence_error: f64,
    /// Worst `|∫₀¹ P_k − δ_k0|`.
    pub mean_error: f64,
    /// Explicit-expansion cross-check of the recurrence (small `s` only).
    pub binomial_error: Option<f64>,
}

impl AppendixReport {
    pub fn det_relative_error(&self) -> f64 {
        (self.det_a - self.det_closed_form).abs() / self.det_closed_form
    }

    pub fn b_a_inv_e_closed_form(&self) -> f64 {
        if self.s % 2 == 1 {
            2.0
        } else {
            0.0
        }
    }

    pub fn det_checked(&self) -> bool {
        self.s <= DET_CHECK_MAX_STAGES
    }

    /// Names of the checks that failed.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut check = |ok: bool, name| {
            if !ok {
                out.push(name);
            }
        };
        check(self.gbg_error < GBG_TOL, "gbg");
        check(self.similarity_error < SIMILARITY_TOL, "similarity");
        check(!self.det_checked() || self.det_relative_error() < DET_TOL, "det");
        check((self.rho_numeric - self.rho_closed_form).abs() < RHO_TOL, "rho");
        check((self.b_a_inv_e - self.b_a_inv_e_closed_form()).abs() < B_A_INV_E_TOL, "bAinv_e");
        check(self.quadrature_error < QUADRATURE_TOL, "quadrature");
        check(self.recurrence_error < RECURRENCE_TOL, "recurrence");
        check(self.mean_error < MEAN_TOL, "mean");
        check(self.binomial_error.is_none_or(|e| e < RECURRENCE_TOL), "binomial");
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub const HEADER: &'static str =
        "s,gbg_error,similarity_error,det_A,det_closed_form,det_rel_error,rho_numeric,rho_closed_form,bAinv_e,quadrature_error,recurrence_error,mean_error,status";

    pub fn to_row(&self) -> String {
        let status = if self.passed() {
            "ok".to_string()
        } else {
            format!("FAIL({})", self.failures().join("|"))
        };
        let det_note = if self.det_checked() { "" } else { " (floor)" };
        format!(
            "{},{:.3e},{:.3e},{:.16e},{:.16e},{:.3e}{},{:.16e},{},{:.16e},{:.3e},{:.3e},{:.3e},{}",
            self.s,
            self.gbg_error,
            self.similarity_error,
            self.det_a,
            self.det_closed_form,
            self.det_relative_error(),
            det_note,
            self.rho_numeric,
            self.rho_closed_form,
            self.b_a_inv_e,
            self.quadrature_error,
            self.recurrence_error,
            self.mean_error,
            status
        )
    }
}

/// Composite Gauss quadrature of `f` over `[a, b]`.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * w;
            rule.0.iter().zip(&rule.1).map(|(x, wt)| wt * f(lo + w * x)).sum::<f64>() * w
        })
        .sum()
}

pub fn verify_appendix(s: usize) -> Result<AppendixReport> {
    check_stages(s)?;
    let tab = gauss_tableau(s)?;
    let g = matrix_g(s)?;
    let xg = matrix_xg(s)?;
    let bmat = DMatrix::from_diagonal(&tab.b);

    let gbg = g.transpose() * &bmat * &g - DMatrix::identity(s, s);
    let g_lu = g.clone().lu();
    let sim = g_lu
        .solve(&(&tab.a * &g))
        .ok_or_else(|| Error::InvalidInput(format!("G is singular for s = {s}")))?;

    let a_lu = tab.a.clone().lu();
    let det_a = a_lu.determinant();
    let w = tab
        .a
        .transpose()
        .lu()
        .solve(&tab.b)
        .ok_or_else(|| Error::InvalidInput(format!("A is singular for s = {s}")))?;
    let b_a_inv_e = w.sum();

    let mut quadrature_error: f64 = 0.0;
    for k in 0..=2 * s - 2 {
        for l in 0..=(2 * s - 2 - k) {
            let q: f64 = (0..s)
                .map(|i| tab.b[i] * shifted_legendre(k, tab.c[i]) * shifted_legendre(l, tab.c[i]))
                .sum();
            let delta = if k == l { 1.0 } else { 0.0 };
            quadrature_error = quadrature_error.max((q - delta).abs());
        }
    }

    let rule = gauss_rule_unit(8)?;
    let mut recurrence_error: f64 = 0.0;
    for k in 1..=s {
        for j in 0..20 {
            let lambda = (j as f64 + 0.5) / 20.0;
            let lhs = integrate(|x| shifted_legendre(k, x), 0.0, lambda, 16, &rule);
            let rhs = xi(k + 1) * shifted_legendre(k + 1, lambda) - xi(k) * shifted_legendre(k - 1, lambda);
            recurrence_error = recurrence_error.max((lhs - rhs).abs());
        }
    }

    let mut mean_error: f64 = 0.0;
    for k in 0..=2 * s {
        let m = integrate(|x| shifted_legendre(k, x), 0.0, 1.0, 16, &rule);
        let want = if k == 0 { 1.0 } else { 0.0 };
        mean_error = mean_error.max((m - want).abs());
    }

    let binomial_error = (s <= 4).then(|| {
        (0..=s)
            .flat_map(|k| (0..=20).map(move |j| (k, j as f64 / 20.0)))
            .map(|(k, x)| (shifted_legendre(k, x) - shifted_legendre_binomial(k, x)).abs())
            .fold(0.0, f64::max)
    });

    Ok(AppendixReport {
        s,
        gbg_error: gbg.amax(),
        similarity_error: (sim - xg).amax(),
        det_a,
        det_closed_form: det_closed_form(s),
        rho_numeric: 1.0 - b_a_inv_e,
        rho_closed_form: if s.is_multiple_of(2) { 1.0 } else { -1.0 },
        b_a_inv_e,
        quadrature_error,
        recurrence_error,
        mean_error,
        binomial_error,
    })
}

/// Reports for `s = 1..=max_stages`.
pub fn verify_appendix_range(max_stages: usize) -> Result<Vec<AppendixReport>> {
    check_stages(max_stages)?;
    (1..=max_stages).map(verify_appendix).collect()
}

/// `ρ` from an arbitrary tableau: `1 − bᵀA⁻¹e`.
pub fn stability_limit(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<f64> {
    a.transpose().lu().solve(b).map(|w| 1.0 - w.sum())
}
