//! Port-Hamiltonian structure checks: power balance, discrete dissipation
//! inequality and Dirac-structure membership at collocation points.
//!
//! Everything is evaluated without `K⁻¹` or `K̃_L⁻¹`: the effort `z` only
//! enters through `Mᵀz`, the dissipative quadratic `zᵀQz` (which involves the
//! `Ψ̃̇` and `θ̇` blocks of `z` only) and the port pairing `yᵀu`.

use std::io::Write;

use crate::collocation::{ButcherTableau, StageSample};
use crate::error::{Error, Result};
use crate::model::{GeneratorModel, ROTOR};
use crate::sim::{RunState, StepData, StepObserver, TrajectoryFrame};
use crate::state::{ph, FullState, PhVector, ReducedState};

/// Instantaneous energy, supplied power `yᵀu` and dissipated power `zᵀQz`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerTerms {
    pub hamiltonian: f64,
    pub supplied: f64,
    pub dissipated: f64,
}

impl PowerTerms {
    /// `yᵀu − zᵀQz`, the right-hand side of the power balance.
    pub fn net(&self) -> f64 {
        self.supplied - self.dissipated
    }
}

/// Power terms of a reduced state:
/// `supplied = Ψ̃̇ᵀĨ_s(t) + θ̇ᵀT`, `dissipated = Ψ̃̇ᵀK̃_RΨ̃̇ + θ̇ᵀDθ̇`.
pub fn power_terms(model: &GeneratorModel, state: &ReducedState) -> PowerTerms {
    let y = &state.psi_t_dot;
    let w = &state.theta_dot;
    let fm = model.full_matrices();
    PowerTerms {
        hamiltonian: model.hamiltonian(state),
        supplied: y.dot(&model.source_reduced(state.t)) + w.dot(&fm.t),
        dissipated: y.dot(&y.component_mul(model.k_r_reduced())) + w.dot(&(fm.d * w)),
    }
}

/// Power terms of a full-model state:
/// `supplied = Ψ̇ᵀI_s(t) + θ̇ᵀT`, `dissipated = Ψ̇ᵀK_RΨ̇ + θ̇ᵀDθ̇`.
pub fn power_terms_full(model: &GeneratorModel, state: &FullState) -> PowerTerms {
    let y = &state.psi_dot;
    let w = &state.theta_dot;
    let fm = model.full_matrices();
    PowerTerms {
        hamiltonian: model.hamiltonian_full(state),
        supplied: y.dot(&model.source_full(state.t)) + w.dot(&fm.t),
        dissipated: y.dot(&(fm.k_r * y)) + w.dot(&(fm.d * w)),
    }
}

/// Per-step tolerance of the energy inequality: `1e-8 · max(1, |H|)`.
pub fn inequality_tolerance(hamiltonian: f64) -> f64 {
    1e-8 * hamiltonian.abs().max(1.0)
}

/// One row of the energy ledger.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLedgerEntry {
    pub t: f64,
    #[doc(alias = "H")]
    pub hamiltonian: f64,
    pub supplied: f64,
    pub dissipated: f64,
    /// `H(t) − H(t₀) − ∫(yᵀu − zᵀQz)` with the integrator's own quadrature.
    pub balance_residual: f64,
}

pub const LEDGER_HEADER: &str = "t,H,supplied,dissipated,balance_residual";

pub fn write_ledger_csv<W: Write>(out: &mut W, entries: &[PowerLedgerEntry]) -> Result<()> {
    writeln!(out, "{LEDGER_HEADER}")?;
    for e in entries {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            e.t, e.hamiltonian, e.supplied, e.dissipated, e.balance_residual
        )?;
    }
    Ok(())
}

/// Residual of the discrete power balance over one collocation step,
/// `H(x_n+1) − H(x_n) − h Σ b_j (yⱼᵀuⱼ − zⱼᵀQzⱼ)`, and the quadrature of the
/// supplied power alone, `h Σ b_j yⱼᵀuⱼ`.
pub fn collocation_step_balance(
    model: &GeneratorModel,
    tableau: &ButcherTableau,
    h: f64,
    before: &ReducedState,
    after: &ReducedState,
    stages: &[StageSample],
) -> Result<(f64, f64)> {
    if stages.len() != tableau.s {
        return Err(Error::MissingStages(format!(
            "expected {} stage samples, got {}",
            tableau.s,
            stages.len()
        )));
    }
    let mut net = 0.0;
    let mut supplied = 0.0;
    for (st, b) in stages.iter().zip(tableau.b.iter()) {
        let p = power_terms(model, &st.point);
        net += b * p.net();
        supplied += b * p.supplied;
    }
    let dh = model.hamiltonian(after) - model.hamiltonian(before);
    Ok((dh - h * net, h * supplied))
}

/// Residual of the trapezoidal power balance over one predictor-corrector step,
/// `H(x_n+1) − H(x_n) − h/2 (p_n + p_n+1)` with `p = yᵀu − zᵀQz`.
pub fn trapezoidal_step_balance(model: &GeneratorModel, h: f64, before: &FullState, after: &FullState) -> f64 {
    let p0 = power_terms_full(model, before);
    let p1 = power_terms_full(model, after);
    p1.hamiltonian - p0.hamiltonian - 0.5 * h * (p0.net() + p1.net())
}

/// One accepted collocation step with its stage data.
#[derive(Clone, Debug)]
pub struct GaussStepRecord {
    pub before: ReducedState,
    pub after: ReducedState,
    pub stages: Option<Vec<StageSample>>,
}

/// Result of [`discrete_dissipation_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct DissipationReport {
    /// Per-step balance residuals.
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    /// Steps with `H(x_n+1) − H(x_n) > h Σ b_j yⱼᵀuⱼ + tol`.
    pub violations: usize,
    /// Largest `H(x_n+1) − H(x_n) − h Σ b_j yⱼᵀuⱼ − tol` (negative when none).
    pub worst_margin: f64,
}

/// Checks the discrete dissipation inequality step by step.
pub fn discrete_dissipation_check(
    trajectory: &[GaussStepRecord],
    tableau: &ButcherTableau,
    h: f64,
    model: &GeneratorModel,
) -> Result<DissipationReport> {
    let mut report = DissipationReport {
        residuals: Vec::with_capacity(trajectory.len()),
        max_abs_residual: 0.0,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
    };
    for (n, rec) in trajectory.iter().enumerate() {
        let stages = rec
            .stages
            .as_deref()
            .ok_or_else(|| Error::MissingStages(format!("step {n} has no stage samples")))?;
        let (residual, supplied) = collocation_step_balance(model, tableau, h, &rec.before, &rec.after, stages)?;
        let h0 = model.hamiltonian(&rec.before);
        let dh = model.hamiltonian(&rec.after) - h0;
        let margin = dh - supplied - inequality_tolerance(h0);
        if margin > 0.0 {
            report.violations += 1;
        }
        report.worst_margin = report.worst_margin.max(margin);
        report.max_abs_residual = report.max_abs_residual.max(residual.abs());
        report.residuals.push(residual);
    }
    Ok(report)
}

/// Blocks of the kernel-representation residual at one stage point, before
/// normalisation, in port-Hamiltonian ordering:
///
/// ```text
/// Ψ̃̇ rows:  −(K̃_R Y + (K̃_L + Γ̃)Ψ̃ − Ĩ_s)
/// Ψ̃ rows:   K̃_L (Y − k_Ψ̃)
/// θ̇ rows:   −J k_θ̇ − (Kθ + τ) − Dθ̇ + T
/// θ rows:    K (θ̇ − k_θ)
/// t row:     1 − k_t
/// ```
///
/// The output equation `v_f^p = y(x_i)` holds identically and contributes no
/// residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiracRows {
    pub rows: PhVector,
    /// Largest term magnitude in each of the five blocks.
    pub scales: [f64; 5],
}

const BLOCKS: [(usize, usize); 5] = [(ph::PSI_DOT, 4), (ph::PSI, 4), (ph::THETA_DOT, 6), (ph::THETA, 6), (ph::TIME, 1)];

pub fn dirac_membership_rows(model: &GeneratorModel, stage: &StageSample) -> DiracRows {
    let x = &stage.point;
    let k = &stage.derivative;
    let fm = model.full_matrices();
    let theta5 = x.theta[ROTOR];
    let y = x.psi_t_dot;
    let k_psi = k.fixed_rows::<4>(ph::PSI).into_owned();
    let k_omega = k.fixed_rows::<6>(ph::THETA_DOT).into_owned();
    let k_theta = k.fixed_rows::<6>(ph::THETA).into_owned();

    let resist = y.component_mul(model.k_r_reduced());
    let induct = model.inductance_reduced(theta5) * x.psi_t;
    let src = model.source_reduced(x.t);
    let r1 = -(resist + induct - src);

    let kl = model.k_l_reduced();
    let r2 = (y - k_psi).component_mul(kl);

    let inertial = fm.j.diagonal().component_mul(&k_omega);
    let mut elastic = model.stiffness_force(&x.theta);
    let tau = model.torque_reduced(&x.psi_t, theta5);
    elastic[ROTOR] += tau;
    let friction = fm.d * x.theta_dot;
    let r3 = fm.t - inertial - elastic - friction;

    let r4 = model.stiffness_force(&(x.theta_dot - k_theta));
    let r5 = 1.0 - k[ph::TIME];

    let mut rows = PhVector::zeros();
    rows.fixed_rows_mut::<4>(ph::PSI_DOT).copy_from(&r1);
    rows.fixed_rows_mut::<4>(ph::PSI).copy_from(&r2);
    rows.fixed_rows_mut::<6>(ph::THETA_DOT).copy_from(&r3);
    rows.fixed_rows_mut::<6>(ph::THETA).copy_from(&r4);
    rows[ph::TIME] = r5;

    let k_norm = model
        .params()
        .stiffness
        .windows(2)
        .map(|w| 2.0 * (w[0] + w[1]))
        .fold(2.0 * model.params().stiffness[0], f64::max);
    let max4 = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scales = [
        max4(resist.as_slice()).max(max4(induct.as_slice())).max(max4(src.as_slice())),
        max4(y.component_mul(kl).as_slice()).max(max4(k_psi.component_mul(kl).as_slice())),
        max4(inertial.as_slice())
            .max(max4(elastic.as_slice()))
            .max(max4(friction.as_slice()))
            .max(max4(fm.t.as_slice()))
            .max(k_norm * x.theta.amax()),
        k_norm * x.theta_dot.amax().max(k_theta.amax()),
        1.0,
    ];
    DiracRows { rows, scales }
}

/// `max` over the five blocks of `‖block‖∞ / max(1, block scale)`.
pub fn dirac_membership_residual(model: &GeneratorModel, stage: &StageSample) -> f64 {
    let DiracRows { rows, scales } = dirac_membership_rows(model, stage);
    BLOCKS
        .iter()
        .zip(scales)
        .map(|(&(off, len), scale)| rows.rows(off, len).amax() / scale.max(1.0))
        .fold(0.0, f64::max)
}

/// Summary statistics of per-step energy residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualStats {
    pub count: u64,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub rms: f64,
}

/// Streaming accumulator for [`ResidualStats`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ResidualAccumulator {
    count: u64,
    max_abs: f64,
    sum_abs: f64,
    sum_sq: f64,
}

impl ResidualAccumulator {
    pub fn push(&mut self, r: f64) {
        self.count += 1;
        self.max_abs = self.max_abs.max(r.abs());
        self.sum_abs += r.abs();
        self.sum_sq += r * r;
    }

    pub fn stats(&self) -> ResidualStats {
        let n = self.count.max(1) as f64;
        ResidualStats {
            count: self.count,
            max_abs: self.max_abs,
            mean_abs: self.sum_abs / n,
            rms: (self.sum_sq / n).sqrt(),
        }
    }
}

/// Result of an [`EnergyLedger`] run.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySummary {
    /// One entry per emitted frame.
    pub entries: Vec<PowerLedgerEntry>,
    /// Per-step balance residuals.
    pub step_residuals: ResidualStats,
    /// Steps at which `H(t) − H(t₀) − ∫yᵀu` exceeded the tolerance.
    pub violations: u64,
    /// Largest `H(t) − H(t₀) − ∫yᵀu − tol` seen (non-positive when the
    /// inequality held throughout).
    pub worst_margin: f64,
    pub tolerance: f64,
}

/// Observer accumulating the energy ledger of a run with the integrator's
/// own quadrature: Gauss weights at the stages for collocation, the
/// trapezoidal rule for predictor-corrector steps.
pub struct EnergyLedger<'a> {
    model: &'a GeneratorModel,
    h0: Option<f64>,
    cum_net: f64,
    cum_supplied: f64,
    entries: Vec<PowerLedgerEntry>,
    steps: ResidualAccumulator,
    violations: u64,
    worst_margin: f64,
}

impl<'a> EnergyLedger<'a> {
    pub fn new(model: &'a GeneratorModel) -> Self {
        Self {
            model,
            h0: None,
            cum_net: 0.0,
            cum_supplied: 0.0,
            entries: Vec::new(),
            steps: ResidualAccumulator::default(),
            violations: 0,
            worst_margin: f64::NEG_INFINITY,
        }
    }

    fn tolerance(&self) -> f64 {
        inequality_tolerance(self.h0.unwrap_or(0.0))
    }

    pub fn finish(self) -> EnergySummary {
        EnergySummary {
            tolerance: self.tolerance(),
            entries: self.entries,
            step_residuals: self.steps.stats(),
            violations: self.violations,
            worst_margin: self.worst_margin,
        }
    }

    fn record_step(&mut self, h_before: f64, h_after: f64, residual: f64, supplied: f64) {
        let h0 = *self.h0.get_or_insert(h_before);
        self.cum_net += h_after - h_before - residual;
        self.cum_supplied += supplied;
        self.steps.push(residual);
        let margin = h_after - h0 - self.cum_supplied - self.tolerance();
        if margin > 0.0 {
            self.violations += 1;
        }
        self.worst_margin = self.worst_margin.max(margin);
    }
}

impl StepObserver for EnergyLedger<'_> {
    fn on_step(&mut self, _step: u64, h: f64, data: StepData<'_>) -> Result<()> {
        match data {
            StepData::Gauss { tableau, before, step } => {
                let stages = step
                    .stages
                    .as_deref()
                    .ok_or_else(|| Error::MissingStages("energy ledger needs stage samples".into()))?;
                let (residual, supplied) =
                    collocation_step_balance(self.model, tableau, h, before, &step.state, stages)?;
                let (h_before, h_after) = (self.model.hamiltonian(before), self.model.hamiltonian(&step.state));
                self.record_step(h_before, h_after, residual, supplied);
            }
            StepData::Pc { before, after, .. } => {
                let p0 = power_terms_full(self.model, before);
                let p1 = power_terms_full(self.model, after);
                let residual = p1.hamiltonian - p0.hamiltonian - 0.5 * h * (p0.net() + p1.net());
                self.record_step(p0.hamiltonian, p1.hamiltonian, residual, 0.5 * h * (p0.supplied + p1.supplied));
            }
        }
        Ok(())
    }

    fn on_frame(&mut self, _frame: &TrajectoryFrame, state: &RunState) -> Result<()> {
        let p = match state {
            RunState::Reduced(s) => power_terms(self.model, s),
            RunState::Full(s) => power_terms_full(self.model, s),
        };
        let h0 = *self.h0.get_or_insert(p.hamiltonian);
        self.entries.push(PowerLedgerEntry {
            t: state.t(),
            hamiltonian: p.hamiltonian,
            supplied: p.supplied,
            dissipated: p.dissipated,
            balance_residual: p.hamiltonian - h0 - self.cum_net,
        });
        Ok(())
    }

    fn needs_stages(&self) -> bool {
        true
    }
}

/// Observer tracking the largest Dirac membership residual over all
/// collocation stage points of a run.
pub struct DiracMonitor<'a> {
    model: &'a GeneratorModel,
    max: f64,
    samples: u64,
}

impl<'a> DiracMonitor<'a> {
    pub fn new(model: &'a GeneratorModel) -> Self {
        Self { model, max: 0.0, samples: 0 }
    }

    pub fn max_residual(&self) -> f64 {
        self.max
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }
}

impl StepObserver for DiracMonitor<'_> {
    fn on_step(&mut self, _step: u64, _h: f64, data: StepData<'_>) -> Result<()> {
        if let StepData::Gauss { step, .. } = data {
            let stages = step
                .stages
                .as_deref()
                .ok_or_else(|| Error::MissingStages("Dirac monitor needs stage samples".into()))?;
            for st in stages {
                self.max = self.max.max(dirac_membership_residual(self.model, st));
                self.samples += 1;
            }
        }
        Ok(())
    }

    fn needs_stages(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{gauss_tableau, GaussOptions, GaussStepper};
    use crate::ics::paper_initial_state;
    use crate::model::{Coupling, Source};

    #[test]
    fn zero_state_has_no_power() {
        let model = GeneratorModel::fbm_ssr();
        let p = power_terms(&model, &ReducedState::zero(0.4));
        assert_eq!((p.hamiltonian, p.supplied, p.dissipated), (0.0, 0.0, 0.0));
    }

    #[test]
    fn dissipation_is_resistive_loss_without_friction() {
        let model = GeneratorModel::fbm_ssr();
        let s = paper_initial_state().reduced;
        let p = power_terms(&model, &s);
        let kr = model.k_r_reduced();
        let want: f64 = (0..4).map(|i| kr[i] * s.psi_t_dot[i].powi(2)).sum();
        assert!((p.dissipated - want).abs() <= 1e-14 * want);
        assert!(p.dissipated >= 0.0);
    }

    #[test]
    fn full_and_reduced_power_terms_agree_on_consistent_states() {
        let model = GeneratorModel::fbm_ssr();
        let mut s = paper_initial_state().reduced;
        s.psi_t_dot = model.consistent_ydot(0.0, &s.x_tilde());
        let a = power_terms(&model, &s);
        let b = power_terms_full(&model, &model.expand_state(&s));
        assert!((a.supplied - b.supplied).abs() <= 1e-12 * a.supplied.abs());
        assert!((a.dissipated - b.dissipated).abs() <= 1e-12 * a.dissipated.abs());
    }

    #[test]
    fn zero_input_zero_state_step_has_zero_residual() {
        let mut p = crate::params::PhysicalParams::fbm_ssr();
        p.torque = [0.0; 4];
        p.u_s = 0.0;
        p.u_f = 0.0;
        let model = GeneratorModel::new(p).unwrap();
        let tab = gauss_tableau(1).unwrap();
        let s0 = ReducedState::zero(0.0);
        let opts = GaussOptions { record_stages: true, ..GaussOptions::default() };
        let out = GaussStepper::new(&model, &tab, 1e-4, opts).unwrap().step(&s0).unwrap();
        let rec = GaussStepRecord { before: s0, after: out.state, stages: out.stages };
        let rep = discrete_dissipation_check(&[rec], &tab, 1e-4, &model).unwrap();
        assert_eq!(rep.residuals, vec![0.0]);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn missing_stages_are_reported() {
        let model = GeneratorModel::fbm_ssr();
        let tab = gauss_tableau(1).unwrap();
        let s = paper_initial_state().reduced;
        let rec = GaussStepRecord { before: s, after: s, stages: None };
        assert!(matches!(
            discrete_dissipation_check(&[rec], &tab, 1e-4, &model),
            Err(Error::MissingStages(_))
        ));
    }

    #[test]
    fn quadratic_hamiltonian_balance_is_exact() {
        let model = GeneratorModel::fbm_ssr()
            .with_coupling(Coupling::Frozen { theta5: -0.4143 })
            .with_source(Source::Live);
        let tab = gauss_tableau(2).unwrap();
        let mut s = paper_initial_state().reduced;
        s.psi_t_dot = model.consistent_ydot(0.0, &s.x_tilde());
        let opts = GaussOptions { record_stages: true, ..GaussOptions::default() };
        let mut st = GaussStepper::new(&model, &tab, 1e-4, opts).unwrap();
        for _ in 0..50 {
            let out = st.step(&s).unwrap();
            let (r, _) =
                collocation_step_balance(&model, &tab, 1e-4, &s, &out.state, out.stages.as_ref().unwrap()).unwrap();
            let scale = model.hamiltonian(&s).abs().max(1.0);
            assert!(r.abs() < 1e-10 * scale, "{r} vs {scale}");
            s = out.state;
        }
    }

    #[test]
    fn dirac_residual_is_zero_for_zero_data() {
        let mut p = crate::params::PhysicalParams::fbm_ssr();
        p.torque = [0.0; 4];
        p.u_s = 0.0;
        p.u_f = 0.0;
        let model = GeneratorModel::new(p).unwrap();
        let mut k = PhVector::zeros();
        k[ph::TIME] = 1.0;
        let stage = StageSample { point: ReducedState::zero(0.0), derivative: k };
        assert_eq!(dirac_membership_residual(&model, &stage), 0.0);
    }

    #[test]
    fn dirac_residual_is_small_at_converged_stages_and_linear_in_perturbations() {
        let model = GeneratorModel::fbm_ssr();
        let tab = gauss_tableau(1).unwrap();
        let s = paper_initial_state().reduced;
        let opts = GaussOptions { record_stages: true, ..GaussOptions::default() };
        let out = GaussStepper::new(&model, &tab, 1e-4, opts).unwrap().step(&s).unwrap();
        let stage = out.stages.unwrap()[0];
        let r = dirac_membership_residual(&model, &stage);
        assert!(r < 10.0 * opts.newton_tol, "{r}");

        // k_θ̇1 + δ changes the θ̇ rows by −J₁δ
        let base = dirac_membership_rows(&model, &stage);
        let mut pert = stage;
        pert.derivative[ph::THETA_DOT] += 1e-3;
        let moved = dirac_membership_rows(&model, &pert);
        let diff = (moved.rows - base.rows).amax();
        let want = model.params().inertia[0] * 1e-3;
        assert!((diff - want).abs() <= 1e-9 * want, "{diff} vs {want}");
    }

    #[test]
    fn residual_accumulator_statistics() {
        let mut acc = ResidualAccumulator::default();
        for r in [1.0, -3.0] {
            acc.push(r);
        }
        let s = acc.stats();
        assert_eq!(s.max_abs, 3.0);
        assert_eq!(s.mean_abs, 2.0);
        assert!((s.rms - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ledger_csv_has_fixed_header() {
        let e = PowerLedgerEntry { t: 0.0, hamiltonian: 1.0, supplied: 2.0, dissipated: 3.0, balance_residual: 0.0 };
        let mut buf = Vec::new();
        write_ledger_csv(&mut buf, &[e]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,H,supplied,dissipated,balance_residual\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn ledger_observer_tracks_balance_for_both_families() {
        use crate::sim::{integrate, start_state, IntegrateOptions, Method, NullSink, PcStart};
        let model = GeneratorModel::fbm_ssr();
        let ics = paper_initial_state();
        for method in [Method::Gauss(2), Method::Pc2] {
            let start = start_state(&model, &ics, method, PcStart::Reconstructed);
            let mut ledger = EnergyLedger::new(&model);
            let opts = IntegrateOptions { stride: 10, ..IntegrateOptions::default() };
            integrate(&model, &start, 1e-4, 100, method, &opts, &mut NullSink, &mut ledger).unwrap();
            let sum = ledger.finish();
            assert_eq!(sum.entries.len(), 11);
            assert_eq!(sum.entries[0].balance_residual, 0.0);
            assert_eq!(sum.step_residuals.count, 100);
            let scale = sum.entries[0].hamiltonian.abs();
            let last = sum.entries.last().unwrap();
            assert!(last.balance_residual.abs() <= 1e-6 * scale, "{method}: {}", last.balance_residual);
            assert_eq!(sum.violations, 0, "{method}: margin {}", sum.worst_margin);
        }
    }

    #[test]
    fn dirac_monitor_sees_every_stage() {
        use crate::sim::{integrate, IntegrateOptions, Method, NullSink, RunState};
        let model = GeneratorModel::fbm_ssr();
        let start = RunState::Reduced(paper_initial_state().reduced);
        let mut mon = DiracMonitor::new(&model);
        integrate(&model, &start, 1e-4, 20, Method::Gauss(3), &IntegrateOptions::default(), &mut NullSink, &mut mon)
            .unwrap();
        assert_eq!(mon.samples(), 60);
        assert!(mon.max_residual() < 1e-9, "{}", mon.max_residual());
    }

}
