//! Matrices, right-hand sides and the Hamiltonian of the generator models.
//!
//! Two formulations share one parameter set:
//!
//! * the **full** second-order model in `(Ψ, θ)` with six fluxes, whose
//!   electrical equation is singular (`K_C = 0`, zero resistance at node 2);
//! * the **reduced** index-1 DAE obtained by eliminating `Ψ2α, Ψ2β`, written in
//!   port-Hamiltonian descriptor form with state `(Ψ̃̇; Ψ̃; θ̇; θ; t)`.
//!
//! Everything here is a pure function of the parameters and the state.

use nalgebra::{DMatrix, Matrix4, Matrix6, SMatrix, Vector4, Vector6};

use crate::error::Result;
use crate::params::PhysicalParams;
use crate::state::{diff, ph, AlgVector, DiffVector, FullState, PhVector, ReducedState};

/// Index of `θ5` (and `ω5`) inside the angle vectors.
pub const ROTOR: usize = 4;

/// How the rotor-angle dependent coupling `Γ(θ5)` / `Γ̃(θ5)` is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Coupling {
    /// `Γ` follows the actual rotor angle.
    #[default]
    Live,
    /// `Γ` is pinned at a fixed angle; its θ-derivative (and so the
    /// electrical torque) vanishes and the Hamiltonian becomes quadratic.
    Frozen { theta5: f64 },
}

/// How the injected source currents depend on time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Source {
    #[default]
    Live,
    /// Source currents held at their value at time `t`.
    Frozen { t: f64 },
}

/// Constant matrices of the full second-order model.
#[derive(Clone, Debug, PartialEq)]
pub struct FullMatrices {
    pub j: Matrix6<f64>,
    pub k: Matrix6<f64>,
    pub k_l: Matrix6<f64>,
    pub k_r: Matrix6<f64>,
    pub k_c: Matrix6<f64>,
    pub t: Vector6<f64>,
    pub d: Matrix6<f64>,
}

/// `J, K, K_L, K_R, K_C, T, D` of the full model.
pub fn assemble_full_matrices(params: &PhysicalParams) -> FullMatrices {
    let j = Matrix6::from_diagonal(&Vector6::from_column_slice(&params.inertia));

    let mut k = Matrix6::zeros();
    for (i, &ki) in params.stiffness.iter().enumerate() {
        k[(i, i)] += ki;
        k[(i + 1, i + 1)] += ki;
        k[(i, i + 1)] -= ki;
        k[(i + 1, i)] -= ki;
    }

    let inv_l = 1.0 / params.l;
    let mut k_l = Matrix6::zeros();
    for a in 0..2 {
        k_l[(a, a)] = inv_l;
        k_l[(a + 2, a + 2)] = inv_l;
        k_l[(a, a + 2)] = -inv_l;
        k_l[(a + 2, a)] = -inv_l;
    }

    let k_r = Matrix6::from_diagonal(&Vector6::new(
        1.0 / params.r,
        1.0 / params.r,
        0.0,
        0.0,
        1.0 / params.r_f,
        1.0 / params.r_q,
    ));

    let t = Vector6::new(
        params.torque[0],
        params.torque[1],
        params.torque[2],
        params.torque[3],
        0.0,
        0.0,
    );

    FullMatrices {
        j,
        k,
        k_l,
        k_r,
        k_c: Matrix6::zeros(),
        t,
        d: params.friction,
    }
}

/// Magnetic coupling matrix `Γ(θ5)` of the full model.
pub fn coupling_matrix_full(theta5: f64, params: &PhysicalParams) -> Result<Matrix6<f64>> {
    let den = params.checked_full_denominator()?;
    Ok(gamma_full(theta5, params, den))
}

/// `∂Γ/∂θ5` of the full model.
pub fn coupling_matrix_full_d5(theta5: f64, params: &PhysicalParams) -> Result<Matrix6<f64>> {
    let den = params.checked_full_denominator()?;
    Ok(gamma_full_d5(theta5, params, den))
}

/// Magnetic coupling matrix `Γ̃(θ5)` of the reduced model.
pub fn coupling_matrix_reduced(theta5: f64, params: &PhysicalParams) -> Result<Matrix4<f64>> {
    let den = params.checked_reduced_denominator()?;
    Ok(gamma_reduced(theta5, (1.5f64).sqrt() * params.m / den))
}

/// `∂Γ̃/∂θ5` of the reduced model.
pub fn coupling_matrix_reduced_d5(theta5: f64, params: &PhysicalParams) -> Result<Matrix4<f64>> {
    let den = params.checked_reduced_denominator()?;
    Ok(gamma_reduced_d5(theta5, (1.5f64).sqrt() * params.m / den))
}

/// Node-injected currents `I_s(t)` of the full model.
pub fn source_current_full(t: f64, params: &PhysicalParams) -> Vector6<f64> {
    let amp = params.u_s / params.r;
    let (s, c) = (params.omega_s * t).sin_cos();
    Vector6::new(amp * c, amp * s, 0.0, 0.0, params.exciting_current(), 0.0)
}

/// Injected currents `Ĩ_s(t)` of the reduced model.
pub fn source_current_reduced(t: f64, params: &PhysicalParams) -> Vector4<f64> {
    let amp = params.u_s / params.r;
    let (s, c) = (params.omega_s * t).sin_cos();
    Vector4::new(amp * c, amp * s, params.exciting_current(), 0.0)
}

/// Coefficients `(λ1, λ2)` expressing the node-2 fluxes through the reduced ones.
pub fn elimination_coefficients(params: &PhysicalParams) -> Result<(f64, f64)> {
    let den = params.checked_reduced_denominator()?;
    let lambda1 = params.full_denominator() / den;
    let lambda2 = (1.5f64).sqrt() * params.m * params.l / den;
    Ok((lambda1, lambda2))
}

/// `(Ψ2α, Ψ2β)` from `Ψ̃` and the rotor angle.
pub fn reconstruct_eliminated_flux(
    psi_t: &Vector4<f64>,
    theta5: f64,
    params: &PhysicalParams,
) -> Result<(f64, f64)> {
    let lambda = elimination_coefficients(params)?;
    Ok(reconstruct(psi_t, theta5, lambda))
}

fn reconstruct(psi_t: &Vector4<f64>, theta5: f64, (l1, l2): (f64, f64)) -> (f64, f64) {
    let (s, c) = theta5.sin_cos();
    let (pf, pq) = (psi_t[2], psi_t[3]);
    (
        l1 * psi_t[0] + l2 * (-pf * c + pq * s),
        l1 * psi_t[1] + l2 * (-pf * s - pq * c),
    )
}

fn gamma_full(theta5: f64, params: &PhysicalParams, den: f64) -> Matrix6<f64> {
    let c = (1.5f64).sqrt() * params.m;
    let (sn, cs) = theta5.sin_cos();
    let ls = params.l_s + params.m_s;
    let mut g = Matrix6::zeros();
    g[(2, 2)] = -params.l_r;
    g[(3, 3)] = -params.l_r;
    g[(4, 4)] = -ls;
    g[(5, 5)] = -ls;
    g[(2, 4)] = c * cs;
    g[(2, 5)] = -c * sn;
    g[(3, 4)] = c * sn;
    g[(3, 5)] = c * cs;
    g[(4, 2)] = c * cs;
    g[(4, 3)] = c * sn;
    g[(5, 2)] = -c * sn;
    g[(5, 3)] = c * cs;
    g / den
}

fn gamma_full_d5(theta5: f64, params: &PhysicalParams, den: f64) -> Matrix6<f64> {
    let c = (1.5f64).sqrt() * params.m / den;
    let (sn, cs) = theta5.sin_cos();
    let mut g = Matrix6::zeros();
    g[(2, 4)] = -c * sn;
    g[(2, 5)] = -c * cs;
    g[(3, 4)] = c * cs;
    g[(3, 5)] = -c * sn;
    g[(4, 2)] = -c * sn;
    g[(4, 3)] = c * cs;
    g[(5, 2)] = -c * cs;
    g[(5, 3)] = -c * sn;
    g
}

fn gamma_reduced(theta5: f64, pref: f64) -> Matrix4<f64> {
    let (s, c) = theta5.sin_cos();
    Matrix4::new(
        0.0, 0.0, c, -s, //
        0.0, 0.0, s, c, //
        c, s, 0.0, 0.0, //
        -s, c, 0.0, 0.0,
    ) * pref
}

fn gamma_reduced_d5(theta5: f64, pref: f64) -> Matrix4<f64> {
    let (s, c) = theta5.sin_cos();
    Matrix4::new(
        0.0, 0.0, -s, -c, //
        0.0, 0.0, c, -s, //
        -s, c, 0.0, 0.0, //
        -c, -s, 0.0, 0.0,
    ) * pref
}

/// `K v` for the shaft stiffness chain, evaluated on angle differences so that
/// the large common rotation of the shaft cancels exactly.
pub fn stiffness_apply(stiffness: &[f64; 5], v: &Vector6<f64>) -> Vector6<f64> {
    let mut out = Vector6::zeros();
    for (i, &k) in stiffness.iter().enumerate() {
        let f = k * (v[i] - v[i + 1]);
        out[i] += f;
        out[i + 1] -= f;
    }
    out
}

/// `½ vᵀ K v` on angle differences.
pub fn stiffness_energy(stiffness: &[f64; 5], v: &Vector6<f64>) -> f64 {
    stiffness
        .iter()
        .enumerate()
        .map(|(i, k)| 0.5 * k * (v[i] - v[i + 1]).powi(2))
        .sum()
}

/// Jacobian of the reduced ODE `x̃' = f̃(t, x̃, ỹ*(t, x̃))`.
pub type DiffJacobian = SMatrix<f64, 16, 16>;

/// Port-Hamiltonian structure matrices of the reduced model.
#[derive(Clone, Debug)]
pub struct StructureMatrices {
    /// Descriptor matrix `M = diag(0, K̃_L, J, K, 1)`.
    pub m_desc: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// `Ξ = [P N; −Nᵀ W]`.
    pub xi: DMatrix<f64>,
    /// `Λ = [Q V; Vᵀ S]`.
    pub lambda: DMatrix<f64>,
}

/// The generator system with parameters validated and constant matrices cached.
#[derive(Clone, Debug)]
pub struct GeneratorModel {
    params: PhysicalParams,
    full: FullMatrices,
    inv_inertia: Vector6<f64>,
    full_den: f64,
    reduced_coupling: f64,
    k_r_t: Vector4<f64>,
    k_l_t: Vector4<f64>,
    lambda: (f64, f64),
    coupling: Coupling,
    source: Source,
}

impl GeneratorModel {
    pub fn new(params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        let full_den = params.checked_full_denominator()?;
        let red_den = params.checked_reduced_denominator()?;
        let lambda = elimination_coefficients(&params)?;
        let full = assemble_full_matrices(&params);
        let inv_inertia = Vector6::from_fn(|i, _| 1.0 / params.inertia[i]);
        let ls = params.l_s + params.m_s + params.l;
        let k_l_t = Vector4::new(-params.l_r, -params.l_r, -ls, -ls) / red_den;
        let k_r_t = Vector4::new(
            1.0 / params.r,
            1.0 / params.r,
            1.0 / params.r_f,
            1.0 / params.r_q,
        );
        Ok(Self {
            reduced_coupling: (1.5f64).sqrt() * params.m / red_den,
            params,
            full,
            inv_inertia,
            full_den,
            k_r_t,
            k_l_t,
            lambda,
            coupling: Coupling::Live,
            source: Source::Live,
        })
    }

    /// The `fbm-ssr` preset with live coupling and source.
    pub fn fbm_ssr() -> Self {
        Self::new(PhysicalParams::fbm_ssr()).expect("preset parameters are valid")
    }

    pub fn with_coupling(mut self, coupling: Coupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn full_matrices(&self) -> &FullMatrices {
        &self.full
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn inv_inertia(&self) -> &Vector6<f64> {
        &self.inv_inertia
    }

    /// Diagonal of `K̃_R`.
    pub fn k_r_reduced(&self) -> &Vector4<f64> {
        &self.k_r_t
    }

    /// Diagonal of `K̃_L`.
    pub fn k_l_reduced(&self) -> &Vector4<f64> {
        &self.k_l_t
    }

    pub fn elimination_coefficients(&self) -> (f64, f64) {
        self.lambda
    }

    fn coupling_angle(&self, theta5: f64) -> f64 {
        match self.coupling {
            Coupling::Live => theta5,
            Coupling::Frozen { theta5 } => theta5,
        }
    }

    fn source_time(&self, t: f64) -> f64 {
        match self.source {
            Source::Live => t,
            Source::Frozen { t } => t,
        }
    }

    pub fn stiffness_force(&self, theta: &Vector6<f64>) -> Vector6<f64> {
        stiffness_apply(&self.params.stiffness, theta)
    }

    // ---- full model -------------------------------------------------------

    pub fn gamma_full(&self, theta5: f64) -> Matrix6<f64> {
        gamma_full(self.coupling_angle(theta5), &self.params, self.full_den)
    }

    pub fn gamma_full_d5(&self, theta5: f64) -> Matrix6<f64> {
        match self.coupling {
            Coupling::Live => gamma_full_d5(theta5, &self.params, self.full_den),
            Coupling::Frozen { .. } => Matrix6::zeros(),
        }
    }

    /// `K_L + Γ(θ5)`.
    pub fn inductance_full(&self, theta5: f64) -> Matrix6<f64> {
        self.full.k_l + self.gamma_full(theta5)
    }

    pub fn source_full(&self, t: f64) -> Vector6<f64> {
        source_current_full(self.source_time(t), &self.params)
    }

    /// `½ Ψᵀ (∂Γ/∂θ5) Ψ`, the electrical torque on mass 5.
    pub fn torque_full(&self, psi: &Vector6<f64>, theta5: f64) -> f64 {
        0.5 * psi.dot(&(self.gamma_full_d5(theta5) * psi))
    }

    /// `H = ½θ̇ᵀJθ̇ + ½Ψᵀ(K_L + Γ(θ))Ψ + ½θᵀKθ` of the full model.
    pub fn hamiltonian_full(&self, state: &FullState) -> f64 {
        let kinetic: f64 = state
            .theta_dot
            .iter()
            .zip(self.params.inertia.iter())
            .map(|(w, j)| 0.5 * j * w * w)
            .sum();
        let magnetic = 0.5 * state.psi.dot(&(self.inductance_full(state.theta[ROTOR]) * state.psi));
        kinetic + magnetic + stiffness_energy(&self.params.stiffness, &state.theta)
    }

    /// `g_M` block of the predictor-corrector splitting:
    /// `(T − ½Ψᵀ(∂Γ/∂θ)Ψ; 0)`.
    pub fn mechanical_load(&self, psi: &Vector6<f64>, theta5: f64) -> Vector6<f64> {
        let mut g = self.full.t;
        g[ROTOR] -= self.torque_full(psi, theta5);
        g
    }

    /// Residual of the full electrical equation
    /// `K_R Ψ̇ + (K_L + Γ(θ))Ψ − I_s(t)`; rows 3-4 are the eliminated node.
    pub fn full_consistency_residual(&self, state: &FullState) -> Vector6<f64> {
        self.full.k_r * state.psi_dot + self.inductance_full(state.theta[ROTOR]) * state.psi
            - self.source_full(state.t)
    }

    /// Expands a reduced state into the full coordinates, reconstructing the
    /// node-2 fluxes and their time derivatives.
    pub fn expand_state(&self, state: &ReducedState) -> FullState {
        let angle = self.coupling_angle(state.theta[ROTOR]);
        let omega = match self.coupling {
            Coupling::Live => state.theta_dot[ROTOR],
            Coupling::Frozen { .. } => 0.0,
        };
        let (l1, l2) = self.lambda;
        let (s, c) = angle.sin_cos();
        let p = &state.psi_t;
        let pd = &state.psi_t_dot;
        let node2 = reconstruct(p, angle, self.lambda);
        let node2_dot = (
            l1 * pd[0] + l2 * (-pd[2] * c + p[2] * s * omega + pd[3] * s + p[3] * c * omega),
            l1 * pd[1] + l2 * (-pd[2] * s - p[2] * c * omega - pd[3] * c + p[3] * s * omega),
        );
        FullState {
            t: state.t,
            psi_dot: crate::state::expand_flux(pd, node2_dot),
            psi: crate::state::expand_flux(p, node2),
            theta_dot: state.theta_dot,
            theta: state.theta,
        }
    }

    /// `(Ψ2α, Ψ2β)` for this model's coupling mode.
    pub fn reconstruct_eliminated_flux(&self, psi_t: &Vector4<f64>, theta5: f64) -> (f64, f64) {
        reconstruct(psi_t, self.coupling_angle(theta5), self.lambda)
    }

    // ---- reduced model ----------------------------------------------------

    pub fn gamma_reduced(&self, theta5: f64) -> Matrix4<f64> {
        gamma_reduced(self.coupling_angle(theta5), self.reduced_coupling)
    }

    pub fn gamma_reduced_d5(&self, theta5: f64) -> Matrix4<f64> {
        match self.coupling {
            Coupling::Live => gamma_reduced_d5(theta5, self.reduced_coupling),
            Coupling::Frozen { .. } => Matrix4::zeros(),
        }
    }

    /// `K̃_L + Γ̃(θ5)`.
    pub fn inductance_reduced(&self, theta5: f64) -> Matrix4<f64> {
        Matrix4::from_diagonal(&self.k_l_t) + self.gamma_reduced(theta5)
    }

    pub fn source_reduced(&self, t: f64) -> Vector4<f64> {
        source_current_reduced(self.source_time(t), &self.params)
    }

    /// `½ Ψ̃ᵀ (∂Γ̃/∂θ5) Ψ̃`.
    pub fn torque_reduced(&self, psi_t: &Vector4<f64>, theta5: f64) -> f64 {
        0.5 * psi_t.dot(&(self.gamma_reduced_d5(theta5) * psi_t))
    }

    /// `ỹ* = K̃_R⁻¹(Ĩ_s(t) − (K̃_L + Γ̃(θ))Ψ̃)`, the unique solution of `g̃ = 0`.
    pub fn consistent_ydot(&self, t: f64, x: &DiffVector) -> AlgVector {
        let psi = x.fixed_rows::<4>(diff::PSI).into_owned();
        let rhs = self.source_reduced(t) - self.inductance_reduced(x[diff::THETA + ROTOR]) * psi;
        rhs.component_div(&self.k_r_t)
    }

    /// `f̃(t, x̃, ỹ)`.
    pub fn dae_rhs(&self, _t: f64, x: &DiffVector, y: &AlgVector) -> DiffVector {
        let psi = x.fixed_rows::<4>(diff::PSI).into_owned();
        let theta_dot = x.fixed_rows::<6>(diff::THETA_DOT).into_owned();
        let theta = x.fixed_rows::<6>(diff::THETA).into_owned();
        let mut load = self.full.t - self.full.d * theta_dot - self.stiffness_force(&theta);
        load[ROTOR] -= self.torque_reduced(&psi, theta[ROTOR]);
        let accel = load.component_mul(&self.inv_inertia);
        let mut out = DiffVector::zeros();
        out.fixed_rows_mut::<4>(diff::PSI).copy_from(y);
        out.fixed_rows_mut::<6>(diff::THETA_DOT).copy_from(&accel);
        out.fixed_rows_mut::<6>(diff::THETA).copy_from(&theta_dot);
        out
    }

    /// `g̃(t, x̃, ỹ) = K̃_R ỹ + (K̃_L + Γ̃(θ))Ψ̃ − Ĩ_s(t)`.
    pub fn dae_constraint(&self, t: f64, x: &DiffVector, y: &AlgVector) -> Vector4<f64> {
        let psi = x.fixed_rows::<4>(diff::PSI).into_owned();
        self.k_r_t.component_mul(y) + self.inductance_reduced(x[diff::THETA + ROTOR]) * psi
            - self.source_reduced(t)
    }

    /// `‖g̃‖∞` divided by the magnitude of the largest term forming it.
    pub fn relative_constraint_residual(&self, state: &ReducedState) -> f64 {
        let x = state.x_tilde();
        let y = state.y_tilde();
        let g = self.dae_constraint(state.t, &x, &y);
        let scale = self
            .k_r_t
            .component_mul(&y)
            .amax()
            .max((self.inductance_reduced(state.theta[ROTOR]) * state.psi_t).amax())
            .max(self.source_reduced(state.t).amax())
            .max(1.0);
        g.amax() / scale
    }

    /// Right-hand side of the underlying ODE with the algebraic variables
    /// eliminated, `x̃' = f̃(t, x̃, ỹ*(t, x̃))`.
    pub fn reduced_ode_rhs(&self, t: f64, x: &DiffVector) -> DiffVector {
        let y = self.consistent_ydot(t, x);
        self.dae_rhs(t, x, &y)
    }

    /// Analytic Jacobian of [`Self::reduced_ode_rhs`] with respect to `x̃`.
    pub fn reduced_ode_jacobian(&self, _t: f64, x: &DiffVector) -> DiffJacobian {
        let psi = x.fixed_rows::<4>(diff::PSI).into_owned();
        let theta5 = x[diff::THETA + ROTOR];
        let mut jac = DiffJacobian::zeros();

        let inv_kr = self.k_r_t.map(|v| 1.0 / v);
        let ind = self.inductance_reduced(theta5);
        let dgamma = self.gamma_reduced_d5(theta5);
        let dgamma_psi = dgamma * psi;

        // Ψ̃' = ỹ*(t, x̃)
        for i in 0..4 {
            for j in 0..4 {
                jac[(diff::PSI + i, diff::PSI + j)] = -inv_kr[i] * ind[(i, j)];
            }
            jac[(diff::PSI + i, diff::THETA + ROTOR)] = -inv_kr[i] * dgamma_psi[i];
        }

        // θ̈ = J⁻¹(T − Dθ̇ − Kθ − τ e5)
        for i in 0..6 {
            for j in 0..6 {
                jac[(diff::THETA_DOT + i, diff::THETA_DOT + j)] =
                    -self.inv_inertia[i] * self.full.d[(i, j)];
                jac[(diff::THETA_DOT + i, diff::THETA + j)] =
                    -self.inv_inertia[i] * self.full.k[(i, j)];
            }
        }
        let row = diff::THETA_DOT + ROTOR;
        for j in 0..4 {
            jac[(row, diff::PSI + j)] -= self.inv_inertia[ROTOR] * dgamma_psi[j];
        }
        if let Coupling::Live = self.coupling {
            // ∂²Γ̃/∂θ5² = −Γ̃
            let d2 = -self.gamma_reduced(theta5);
            jac[(row, diff::THETA + ROTOR)] -=
                self.inv_inertia[ROTOR] * 0.5 * psi.dot(&(d2 * psi));
        }

        // θ' = θ̇
        for i in 0..6 {
            jac[(diff::THETA + i, diff::THETA_DOT + i)] = 1.0;
        }
        jac
    }

    /// `H = ½θ̇ᵀJθ̇ + ½Ψ̃ᵀ(K̃_L + Γ̃(θ))Ψ̃ + ½θᵀKθ`.
    pub fn hamiltonian(&self, state: &ReducedState) -> f64 {
        let kinetic: f64 = state
            .theta_dot
            .iter()
            .zip(self.params.inertia.iter())
            .map(|(w, j)| 0.5 * j * w * w)
            .sum();
        let magnetic =
            0.5 * state.psi_t.dot(&(self.inductance_reduced(state.theta[ROTOR]) * state.psi_t));
        kinetic + magnetic + stiffness_energy(&self.params.stiffness, &state.theta)
    }

    /// The effort image `Mᵀz = ∇ₓH`, assembled without inverting `K` or `K̃_L`:
    /// `(0; (K̃_L + Γ̃)Ψ̃; Jθ̇; Kθ + ½Ψ̃ᵀ(∂Γ̃/∂θ)Ψ̃; 0)`.
    pub fn effort_image(&self, state: &ReducedState) -> PhVector {
        let mut g = PhVector::zeros();
        let theta5 = state.theta[ROTOR];
        g.fixed_rows_mut::<4>(ph::PSI)
            .copy_from(&(self.inductance_reduced(theta5) * state.psi_t));
        g.fixed_rows_mut::<6>(ph::THETA_DOT)
            .copy_from(&self.full.j.diagonal().component_mul(&state.theta_dot));
        let mut k_theta = self.stiffness_force(&state.theta);
        k_theta[ROTOR] += self.torque_reduced(&state.psi_t, theta5);
        g.fixed_rows_mut::<6>(ph::THETA).copy_from(&k_theta);
        g
    }

    /// Input `u(x) = (Ĩ_s(t); 0; T; 0; 1)`.
    pub fn input(&self, t: f64) -> PhVector {
        let mut u = PhVector::zeros();
        u.fixed_rows_mut::<4>(ph::PSI_DOT).copy_from(&self.source_reduced(t));
        u.fixed_rows_mut::<6>(ph::THETA_DOT).copy_from(&self.full.t);
        u[ph::TIME] = 1.0;
        u
    }

    /// Output `y(x) = (Ψ̃̇; 0; θ̇; 0; 0)`.
    pub fn output(&self, state: &ReducedState) -> PhVector {
        let mut y = PhVector::zeros();
        y.fixed_rows_mut::<4>(ph::PSI_DOT).copy_from(&state.psi_t_dot);
        y.fixed_rows_mut::<6>(ph::THETA_DOT).copy_from(&state.theta_dot);
        y
    }

    /// `P, Q, N, V, S, W, M, Ξ, Λ` of the descriptor form.
    pub fn structure_matrices(&self) -> StructureMatrices {
        let n = ph::DIM;
        let k_l = Matrix4::from_diagonal(&self.k_l_t);
        let mut m_desc = DMatrix::zeros(n, n);
        let mut p = DMatrix::zeros(n, n);
        let mut q = DMatrix::zeros(n, n);
        let mut nn = DMatrix::zeros(n, n);

        m_desc.view_mut((ph::PSI, ph::PSI), (4, 4)).copy_from(&k_l);
        m_desc
            .view_mut((ph::THETA_DOT, ph::THETA_DOT), (6, 6))
            .copy_from(&self.full.j);
        m_desc.view_mut((ph::THETA, ph::THETA), (6, 6)).copy_from(&self.full.k);
        m_desc[(ph::TIME, ph::TIME)] = 1.0;

        p.view_mut((ph::PSI_DOT, ph::PSI), (4, 4)).copy_from(&(-k_l));
        p.view_mut((ph::PSI, ph::PSI_DOT), (4, 4)).copy_from(&k_l);
        p.view_mut((ph::THETA_DOT, ph::THETA), (6, 6))
            .copy_from(&(-self.full.k));
        p.view_mut((ph::THETA, ph::THETA_DOT), (6, 6))
            .copy_from(&self.full.k);

        q.view_mut((ph::PSI_DOT, ph::PSI_DOT), (4, 4))
            .copy_from(&Matrix4::from_diagonal(&self.k_r_t));
        q.view_mut((ph::THETA_DOT, ph::THETA_DOT), (6, 6))
            .copy_from(&self.full.d);

        for i in (ph::PSI_DOT..ph::PSI).chain(ph::THETA_DOT..ph::THETA) {
            nn[(i, i)] = 1.0;
        }
        nn[(ph::TIME, ph::TIME)] = 1.0;

        let zero = DMatrix::zeros(n, n);
        let mut xi = DMatrix::zeros(2 * n, 2 * n);
        xi.view_mut((0, 0), (n, n)).copy_from(&p);
        xi.view_mut((0, n), (n, n)).copy_from(&nn);
        xi.view_mut((n, 0), (n, n)).copy_from(&(-nn.transpose()));
        let mut lambda = DMatrix::zeros(2 * n, 2 * n);
        lambda.view_mut((0, 0), (n, n)).copy_from(&q);

        StructureMatrices {
            m_desc,
            p,
            q,
            n: nn,
            v: zero.clone(),
            s: zero.clone(),
            w: zero,
            xi,
            lambda,
        }
    }
}

/// `H` for the given parameters (live coupling).
pub fn hamiltonian(state: &ReducedState, params: &PhysicalParams) -> Result<f64> {
    Ok(GeneratorModel::new(params.clone())?.hamiltonian(state))
}

/// `f̃(t, x̃, ỹ)` for the given parameters (live coupling and source).
pub fn dae_rhs(t: f64, x: &DiffVector, y: &AlgVector, params: &PhysicalParams) -> Result<DiffVector> {
    Ok(GeneratorModel::new(params.clone())?.dae_rhs(t, x, y))
}

/// `g̃(t, x̃, ỹ)` for the given parameters (live coupling and source).
pub fn dae_constraint(
    t: f64,
    x: &DiffVector,
    y: &AlgVector,
    params: &PhysicalParams,
) -> Result<Vector4<f64>> {
    Ok(GeneratorModel::new(params.clone())?.dae_constraint(t, x, y))
}

pub fn structure_matrices(params: &PhysicalParams) -> Result<StructureMatrices> {
    Ok(GeneratorModel::new(params.clone())?.structure_matrices())
}
