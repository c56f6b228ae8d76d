//! Predictor-corrector methods (I) and (II) on the full model.
//!
//! Both methods share the angle predictor `θ⁰ = θ_n + hθ̇_n` and the
//! trapezoidal electrical solve
//!
//! ```text
//! [K_E1 + h/2 K_E2(θ⁰)] x_E,n+1 = [K_E1 − h/2 K_E2(θ_n)] x_E,n + h/2 (g_E(t_n) + g_E(t_n+1))
//! ```
//!
//! and differ in the torque term of the mechanical solve
//! `(K_M1 + h/2 K_M2) x_M,n+1 = (K_M1 − h/2 K_M2) x_M,n + h ḡ_M`:
//! method (I) uses `ḡ_M = g_M(Ψ_n, θ_n)`, method (II) the average with
//! `g_M(Ψ_n+1, θ⁰)`.
//!
//! Both linear systems are solved for the increments `x_n+1 − x_n`. The
//! electrical right-hand side then reduces to averaged constraint residuals,
//! and `Kθ` stays in difference form while the angles grow like `120π t`.

use nalgebra::{SMatrix, Matrix6, Vector6, LU, U12};

use crate::error::{Error, Result};
use crate::model::{GeneratorModel, ROTOR};
use crate::state::{HalfVector, PcState};

pub type HalfMatrix = SMatrix<f64, 12, 12>;

/// Largest accepted 1-norm condition estimate of the step matrices.
pub const MAX_CONDITION: f64 = 1e14;

/// Which mechanical correction to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PcVariant {
    /// Left-endpoint torque.
    One,
    /// Trapezoidal torque with the predicted angle.
    Two,
}

/// Constant blocks of the predictor-corrector splitting plus evaluators for
/// the state-dependent ones.
#[derive(Clone, Debug)]
pub struct PcBlocks<'a> {
    model: &'a GeneratorModel,
    pub k_e1: HalfMatrix,
    pub k_m1: HalfMatrix,
    pub k_m2: HalfMatrix,
}

pub fn assemble_pc_blocks(model: &GeneratorModel) -> PcBlocks<'_> {
    let fm = model.full_matrices();
    let mut k_e1 = HalfMatrix::zeros();
    k_e1.fixed_view_mut::<6, 6>(0, 0).copy_from(&fm.k_c);
    k_e1.fixed_view_mut::<6, 6>(6, 6).copy_from(&Matrix6::identity());

    let mut k_m1 = HalfMatrix::zeros();
    k_m1.fixed_view_mut::<6, 6>(0, 0).copy_from(&fm.j);
    k_m1.fixed_view_mut::<6, 6>(6, 6).copy_from(&Matrix6::identity());

    let mut k_m2 = HalfMatrix::zeros();
    k_m2.fixed_view_mut::<6, 6>(0, 0).copy_from(&fm.d);
    k_m2.fixed_view_mut::<6, 6>(0, 6).copy_from(&fm.k);
    k_m2.fixed_view_mut::<6, 6>(6, 0).copy_from(&(-Matrix6::identity()));

    PcBlocks { model, k_e1, k_m1, k_m2 }
}

impl PcBlocks<'_> {
    /// `K_E2(θ) = [K_R, K_L + Γ(θ5); −I, 0]`.
    pub fn k_e2(&self, theta5: f64) -> HalfMatrix {
        let mut m = HalfMatrix::zeros();
        m.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.model.full_matrices().k_r);
        m.fixed_view_mut::<6, 6>(0, 6).copy_from(&self.model.inductance_full(theta5));
        m.fixed_view_mut::<6, 6>(6, 0).copy_from(&(-Matrix6::identity()));
        m
    }

    /// `g_E(t) = (I_s(t); 0)`.
    pub fn g_e(&self, t: f64) -> HalfVector {
        stack(&self.model.source_full(t), &Vector6::zeros())
    }

    /// `g_M(Ψ, θ) = (T − ½Ψᵀ(∂Γ/∂θ)Ψ; 0)`.
    pub fn g_m(&self, psi: &Vector6<f64>, theta: &Vector6<f64>) -> HalfVector {
        stack(&self.model.mechanical_load(psi, theta[ROTOR]), &Vector6::zeros())
    }

    /// `K_R Ψ̇ + (K_L + Γ(θ5))Ψ − I_s(t)`.
    pub fn constraint_residual(
        &self,
        psi_dot: &Vector6<f64>,
        psi: &Vector6<f64>,
        theta5: f64,
        t: f64,
    ) -> Vector6<f64> {
        self.model.full_matrices().k_r * psi_dot + self.model.inductance_full(theta5) * psi
            - self.model.source_full(t)
    }

    /// `K_M2 x_M` with `Kθ` evaluated on angle differences.
    pub fn k_m2_apply(&self, x_m: &HalfVector) -> HalfVector {
        let theta_dot = x_m.fixed_rows::<6>(0).into_owned();
        let theta = x_m.fixed_rows::<6>(6).into_owned();
        let top = self.model.full_matrices().d * theta_dot + self.model.stiffness_force(&theta);
        stack(&top, &(-theta_dot))
    }
}

/// Linear-solve diagnostics of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PcStepReport {
    /// `‖Ax − b‖∞ / ‖b‖∞` of the electrical solve.
    pub electrical_residual: f64,
    /// Same for the mechanical solve (both in increment form).
    pub mechanical_residual: f64,
    /// 1-norm condition estimate of the row-equilibrated electrical matrix.
    pub electrical_condition: f64,
}

/// Per-trajectory state of the predictor-corrector steppers: the constant
/// blocks and the mechanical factorization for one step size.
#[derive(Clone, Debug)]
pub struct PcWorkspace<'a> {
    blocks: PcBlocks<'a>,
    h: f64,
    km_plus: HalfMatrix,
    km_lu: LU<f64, U12, U12>,
    steps: u64,
}

impl<'a> PcWorkspace<'a> {
    pub fn new(model: &'a GeneratorModel, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {h}")));
        }
        let blocks = assemble_pc_blocks(model);
        let km_plus = blocks.k_m1 + blocks.k_m2 * (0.5 * h);
        let km_lu = km_plus.lu();
        let cond = condition_estimate(&km_plus, &km_lu);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SingularMatrix {
                step: 0,
                t: 0.0,
                detail: format!("mechanical step matrix, condition estimate {cond:.3e}"),
            });
        }
        Ok(Self { blocks, h, km_plus, km_lu, steps: 0 })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn blocks(&self) -> &PcBlocks<'a> {
        &self.blocks
    }

    /// Number of steps taken with this workspace.
    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// One step of the chosen method.
    pub fn step(&mut self, state: &PcState, variant: PcVariant) -> Result<(PcState, PcStepReport)> {
        let step = self.steps;
        self.steps += 1;
        let h = self.h;
        let half = 0.5 * h;
        let b = &self.blocks;
        let t1 = state.t + h;

        // (i) angle predictor
        let theta_pred = state.theta + state.theta_dot * h;

        // (ii) trapezoidal electrical solve
        let x_e = state.x_e();
        let a_plus = b.k_e1 + b.k_e2(theta_pred[ROTOR]) * half;
        // increment form: A⁺ Δ = −h/2 (K_E2(θ_n) + K_E2(θ⁰)) x_E,n + h/2 (g_E(t_n) + g_E(t_n+1))
        let mut rhs_e = HalfVector::zeros();
        let r0 = b.constraint_residual(&state.psi_dot, &state.psi, state.theta[ROTOR], state.t);
        let r1 = b.constraint_residual(&state.psi_dot, &state.psi, theta_pred[ROTOR], t1);
        for i in 0..6 {
            rhs_e[i] = -half * (r0[i] + r1[i]);
            rhs_e[6 + i] = h * state.psi_dot[i];
        }
        let row_scale = HalfVector::from_fn(|i, _| {
            let m = a_plus.row(i).amax();
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        });
        let a_eq = HalfMatrix::from_fn(|i, j| a_plus[(i, j)] * row_scale[i]);
        let lu = a_eq.lu();
        let cond = condition_estimate(&a_eq, &lu);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SingularMatrix {
                step,
                t: state.t,
                detail: format!("electrical step matrix, condition estimate {cond:.3e}"),
            });
        }
        let delta_e = lu.solve(&rhs_e.component_mul(&row_scale)).ok_or_else(|| {
            Error::SingularMatrix { step, t: state.t, detail: "electrical step matrix".into() }
        })?;
        let x_e1 = x_e + delta_e;
        let psi1 = x_e1.fixed_rows::<6>(6).into_owned();

        // (iii) mechanical correction
        let g0 = b.g_m(&state.psi, &state.theta);
        let g_bar = match variant {
            PcVariant::One => g0,
            PcVariant::Two => (g0 + b.g_m(&psi1, &theta_pred)) * 0.5,
        };
        let x_m = state.x_m();
        let rhs_m = (g_bar - b.k_m2_apply(&x_m)) * h;
        let delta = self.km_lu.solve(&rhs_m).ok_or_else(|| Error::SingularMatrix {
            step,
            t: state.t,
            detail: "mechanical step matrix".into(),
        })?;
        let x_m1 = x_m + delta;

        let report = PcStepReport {
            electrical_residual: relative_residual(&a_plus, &delta_e, &rhs_e),
            mechanical_residual: relative_residual(&self.km_plus, &delta, &rhs_m),
            electrical_condition: cond,
        };
        let next = PcState::from_halves(t1, &x_e1, &x_m1);
        if !next.is_finite() {
            return Err(Error::Integration {
                step,
                t: state.t,
                source: Box::new(Error::InvalidInput("non-finite state".into())),
            });
        }
        Ok((next, report))
    }
}

/// P-C method (I): one step with left-endpoint torque.
pub fn pc1_step(state: &PcState, ws: &mut PcWorkspace<'_>) -> Result<PcState> {
    ws.step(state, PcVariant::One).map(|(s, _)| s)
}

/// P-C method (II): one step with trapezoidal torque.
pub fn pc2_step(state: &PcState, ws: &mut PcWorkspace<'_>) -> Result<PcState> {
    ws.step(state, PcVariant::Two).map(|(s, _)| s)
}

fn stack(a: &Vector6<f64>, b: &Vector6<f64>) -> HalfVector {
    let mut v = HalfVector::zeros();
    v.fixed_rows_mut::<6>(0).copy_from(a);
    v.fixed_rows_mut::<6>(6).copy_from(b);
    v
}

fn condition_estimate(a: &HalfMatrix, lu: &LU<f64, U12, U12>) -> f64 {
    match lu.try_inverse() {
        Some(inv) => norm1(a) * norm1(&inv),
        None => f64::INFINITY,
    }
}

fn norm1(a: &HalfMatrix) -> f64 {
    a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

fn relative_residual(a: &HalfMatrix, x: &HalfVector, b: &HalfVector) -> f64 {
    let r = (a * x - b).amax();
    let scale = b.amax();
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}
