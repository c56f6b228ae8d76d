//! One step of a collocation method applied to the reduced index-1 DAE by the
//! direct approach.
//!
//! The differential stage derivatives `Ẋ_i` are the Newton unknowns. The
//! algebraic stage values are eliminated in closed form, because `g̃` is linear
//! in `ỹ` with the constant, invertible Jacobian `K̃_R`:
//!
//! ```text
//! X_i = x_n + h Σ_j a_ij Ẋ_j
//! Y_i = K̃_R⁻¹ (Ĩ_s(t_i) − (K̃_L + Γ̃(θ_i)) Ψ̃_i)
//! Ẋ_i = f̃(t_i, X_i, Y_i)
//! x_{n+1} = x_n + h Σ_i b_i Ẋ_i
//! y_{n+1} = ρ y_n + bᵀA⁻¹ Y
//! ```

use nalgebra::{DMatrix, DVector};

use super::tableau::ButcherTableau;
use crate::error::{Error, Result};
use crate::model::GeneratorModel;
use crate::state::{diff, AlgVector, DiffVector, PhVector, ReducedState};

/// Solver settings of the stage Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussOptions {
    /// Relative tolerance on the stage-derivative update, per variable group.
    pub newton_tol: f64,
    pub max_iterations: usize,
    /// Refresh the Jacobian when successive updates shrink by less than this.
    pub refresh_contraction: f64,
    /// Accepted relative constraint residual of the first input state.
    pub consistency_tol: f64,
    pub check_consistency: bool,
    /// Keep `(x_i, k_i)` for every stage (needed by the structure diagnostics).
    pub record_stages: bool,
}

impl Default for GaussOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            max_iterations: 50,
            refresh_contraction: 0.5,
            consistency_tol: 1e-6,
            check_consistency: true,
            record_stages: false,
        }
    }
}

/// Convergence information of one collocation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussStepReport {
    pub newton_iterations: usize,
    /// Scaled residual `‖Ẋ_i − f̃(t_i, X_i, Y_i)‖` after the last update.
    pub stage_residual: f64,
    /// Relative `‖g̃‖∞` at the step end point.
    pub constraint_residual: f64,
    pub jacobian_evaluations: usize,
}

/// State and derivative at one collocation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageSample {
    /// `x_i = (Y_i; X_i; t_i)`.
    pub point: ReducedState,
    /// `k_i = (Ẏ_i; Ẋ_i; 1)` in port-Hamiltonian ordering.
    pub derivative: PhVector,
}

/// Output of [`GaussStepper::step`].
#[derive(Clone, Debug)]
pub struct GaussStep {
    pub state: ReducedState,
    pub report: GaussStepReport,
    /// Present when [`GaussOptions::record_stages`] is set.
    pub stages: Option<Vec<StageSample>>,
}

/// Fixed-step collocation integrator for one trajectory.
#[derive(Clone, Debug)]
pub struct GaussStepper<'a> {
    model: &'a GeneratorModel,
    tableau: &'a ButcherTableau,
    h: f64,
    opts: GaussOptions,
    started: bool,
    /// Last output `x̃` and the low-order bits lost when it was summed.
    carry: Option<(DiffVector, DiffVector)>,
    // scratch
    stage_derivs: DVector<f64>,
}

impl<'a> GaussStepper<'a> {
    pub fn new(
        model: &'a GeneratorModel,
        tableau: &'a ButcherTableau,
        h: f64,
        opts: GaussOptions,
    ) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {h}")));
        }
        Ok(Self {
            model,
            tableau,
            h,
            opts,
            started: false,
            carry: None,
            stage_derivs: DVector::zeros(diff::DIM * tableau.s),
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn options(&self) -> &GaussOptions {
        &self.opts
    }

    pub fn set_options(&mut self, opts: GaussOptions) {
        self.opts = opts;
    }

    pub fn tableau(&self) -> &ButcherTableau {
        self.tableau
    }

    /// Advances `state` by one step of size `h`. The consistency of the input
    /// is checked on the first call only; later inputs carry the method's own
    /// `O(h^q)` constraint drift.
    pub fn step(&mut self, state: &ReducedState) -> Result<GaussStep> {
        let model = self.model;
        let tab = self.tableau;
        let (s, h, n) = (tab.s, self.h, diff::DIM);

        if self.opts.check_consistency && !self.started {
            let residual = model.relative_constraint_residual(state);
            if !(residual <= self.opts.consistency_tol) {
                return Err(Error::InconsistentState {
                    residual,
                    tolerance: self.opts.consistency_tol,
                });
            }
        }
        self.started = true;

        let t0 = state.t;
        let x0 = state.x_tilde();
        let y0 = state.y_tilde();
        let stage_times: Vec<f64> = tab.c.iter().map(|ci| t0 + ci * h).collect();

        let f0 = model.reduced_ode_rhs(t0, &x0);
        for i in 0..s {
            self.stage_derivs.rows_mut(i * n, n).copy_from(&f0);
        }

        let mut lu = newton_matrix(tab, h, &model.reduced_ode_jacobian(t0, &x0)).lu();
        let mut jac_evals = 1;
        let mut prev_norm = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;

        while iterations < self.opts.max_iterations {
            iterations += 1;
            let stages = stage_values(tab, h, &x0, &self.stage_derivs);
            let mut residual = DVector::zeros(n * s);
            for i in 0..s {
                let f = model.reduced_ode_rhs(stage_times[i], &stages[i]);
                let r = self.stage_derivs.rows(i * n, n) - f;
                residual.rows_mut(i * n, n).copy_from(&r);
            }
            let delta = lu.solve(&residual).ok_or_else(|| Error::SingularMatrix {
                step: 0,
                t: t0,
                detail: "collocation Newton matrix".into(),
            })?;
            self.stage_derivs -= &delta;
            if !self.stage_derivs.iter().all(|v| v.is_finite()) {
                return Err(Error::NewtonDivergence {
                    iterations,
                    residual: f64::INFINITY,
                });
            }

            let norm = scaled_norm(&delta, &self.stage_derivs, s);
            let update = state_update_norm(&delta, &x0, s, h);
            if norm <= self.opts.newton_tol || update <= STATE_RESOLUTION {
                converged = true;
                break;
            }
            // Roundoff floor: no further progress at a level close to the tolerance.
            if norm >= prev_norm && (norm <= 1e3 * self.opts.newton_tol || update <= STAGNATION_RESOLUTION) {
                converged = true;
                break;
            }
            if norm > self.opts.refresh_contraction * prev_norm {
                let mean = stages.iter().fold(DiffVector::zeros(), |acc, x| acc + x) / s as f64;
                let jac = model.reduced_ode_jacobian(t0 + 0.5 * h, &mean);
                lu = newton_matrix(tab, h, &jac).lu();
                jac_evals += 1;
            }
            prev_norm = norm;
        }

        let stages = stage_values(tab, h, &x0, &self.stage_derivs);
        let mut final_residual = DVector::zeros(n * s);
        let mut alg_stages = Vec::with_capacity(s);
        for i in 0..s {
            let y = model.consistent_ydot(stage_times[i], &stages[i]);
            let f = model.dae_rhs(stage_times[i], &stages[i], &y);
            final_residual
                .rows_mut(i * n, n)
                .copy_from(&(self.stage_derivs.rows(i * n, n) - f));
            alg_stages.push(y);
        }
        let stage_residual = scaled_norm(&final_residual, &self.stage_derivs, s);
        if !converged {
            return Err(Error::NewtonDivergence { iterations, residual: stage_residual });
        }

        let mut increment = DiffVector::zeros();
        for i in 0..s {
            increment += self.stage_derivs.rows(i * n, n) * (h * tab.b[i]);
        }
        // Compensated summation across consecutive steps of one trajectory.
        let lost = match &self.carry {
            Some((last, c)) if *last == x0 => *c,
            _ => DiffVector::zeros(),
        };
        let corrected = increment - lost;
        let x1 = x0 + corrected;
        self.carry = Some((x1, (x1 - x0) - corrected));
        let mut y1 = y0 * tab.rho;
        for i in 0..s {
            y1 += alg_stages[i] * tab.b_a_inv[i];
        }
        let next = ReducedState::from_parts(t0 + h, &x1, &y1);
        let report = GaussStepReport {
            newton_iterations: iterations,
            stage_residual,
            constraint_residual: model.relative_constraint_residual(&next),
            jacobian_evaluations: jac_evals,
        };

        let samples = self.opts.record_stages.then(|| {
            (0..s)
                .map(|i| {
                    // hẎ = A⁻¹(Y − e y_n)
                    let mut y_dot = AlgVector::zeros();
                    for j in 0..s {
                        y_dot += (alg_stages[j] - y0) * (tab.a_inv[(i, j)] / h);
                    }
                    let mut k = PhVector::zeros();
                    k.fixed_rows_mut::<4>(0).copy_from(&y_dot);
                    k.fixed_rows_mut::<16>(4).copy_from(&self.stage_derivs.rows(i * n, n));
                    k[20] = 1.0;
                    StageSample {
                        point: ReducedState::from_parts(stage_times[i], &stages[i], &alg_stages[i]),
                        derivative: k,
                    }
                })
                .collect()
        });

        Ok(GaussStep { state: next, report, stages: samples })
    }
}

/// One collocation step with a fresh stepper.
pub fn gauss_dae_step(
    state: &ReducedState,
    h: f64,
    tableau: &ButcherTableau,
    model: &GeneratorModel,
    opts: GaussOptions,
) -> Result<(ReducedState, GaussStepReport)> {
    let step = GaussStepper::new(model, tableau, h, opts)?.step(state)?;
    Ok((step.state, step.report))
}

fn stage_values(
    tab: &ButcherTableau,
    h: f64,
    x0: &DiffVector,
    derivs: &DVector<f64>,
) -> Vec<DiffVector> {
    let n = diff::DIM;
    (0..tab.s)
        .map(|i| {
            let mut x = *x0;
            for j in 0..tab.s {
                let a = tab.a[(i, j)];
                if a != 0.0 {
                    x += derivs.fixed_rows::<16>(j * n) * (h * a);
                }
            }
            x
        })
        .collect()
}

/// `I − h (A ⊗ J_f)`.
fn newton_matrix(tab: &ButcherTableau, h: f64, jac: &crate::model::DiffJacobian) -> DMatrix<f64> {
    let n = diff::DIM;
    let s = tab.s;
    let mut m = DMatrix::identity(n * s, n * s);
    for i in 0..s {
        for j in 0..s {
            let a = h * tab.a[(i, j)];
            if a == 0.0 {
                continue;
            }
            let mut block = m.view_mut((i * n, j * n), (n, n));
            block -= jac * a;
        }
    }
    m
}

/// Stage corrections below this many units of the state magnitude no longer
/// change the stage values in floating point.
const STATE_RESOLUTION: f64 = 4.0 * f64::EPSILON;
/// A non-contracting iteration whose corrections stay within a few ulps of
/// the state is cycling on roundoff.
const STAGNATION_RESOLUTION: f64 = 64.0 * f64::EPSILON;

/// Max over the groups of `h ‖δ_group‖∞ / max(1, ‖x_group‖∞)`.
fn state_update_norm(delta: &DVector<f64>, x0: &DiffVector, s: usize, h: f64) -> f64 {
    let groups = [(diff::PSI, 4), (diff::THETA_DOT, 6), (diff::THETA, 6)];
    let mut worst: f64 = 0.0;
    for (off, len) in groups {
        let mut dmax: f64 = 0.0;
        for i in 0..s {
            dmax = dmax.max(delta.rows(i * diff::DIM + off, len).amax());
        }
        worst = worst.max(h * dmax / x0.rows(off, len).amax().max(1.0));
    }
    worst
}

/// Max over the variable groups `Ψ̃`, `θ̇`, `θ` (all stages) of
/// `‖v_group‖∞ / max(1, ‖scale_group‖∞)`.
fn scaled_norm(v: &DVector<f64>, scale: &DVector<f64>, s: usize) -> f64 {
    let groups = [
        (diff::PSI, 4),
        (diff::THETA_DOT, 6),
        (diff::THETA, 6),
    ];
    let mut worst: f64 = 0.0;
    for (off, len) in groups {
        let mut vmax: f64 = 0.0;
        let mut smax: f64 = 1.0;
        for i in 0..s {
            let base = i * diff::DIM + off;
            vmax = vmax.max(v.rows(base, len).amax());
            smax = smax.max(scale.rows(base, len).amax());
        }
        worst = worst.max(vmax / smax);
    }
    worst
}
