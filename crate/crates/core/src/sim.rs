//! Trajectory integration, output frames, convergence studies and run
//! comparison.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{Vector4, Vector6};
use serde::Deserialize;

use crate::collocation::{gauss_tableau, ButcherTableau, GaussOptions, GaussStep, GaussStepper, MAX_STAGES};
use crate::error::{Error, Result};
use crate::ics::{load_initial_state, InitialState};
use crate::model::GeneratorModel;
use crate::params::PhysicalParams;
use crate::pc::{PcStepReport, PcVariant, PcWorkspace};
use crate::state::{FullState, ReducedState};

/// Synchronous speed `120π` rad/s, the reference of the ω-error columns.
pub const SYNC_SPEED: f64 = 120.0 * std::f64::consts::PI;

/// Horizons above this many seconds need the `long` flag.
pub const LONG_HORIZON: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Pc1,
    Pc2,
    /// `s`-stage Gauss collocation on the reduced model.
    Gauss(usize),
}

impl Method {
    pub fn is_reduced(&self) -> bool {
        matches!(self, Method::Gauss(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Pc1 => f.write_str("pc1"),
            Method::Pc2 => f.write_str("pc2"),
            Method::Gauss(s) => write!(f, "gauss:{s}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc1" => Ok(Method::Pc1),
            "pc2" => Ok(Method::Pc2),
            _ => {
                let stages = s
                    .strip_prefix("gauss:")
                    .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}` (pc1, pc2 or gauss:S)")))?
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidInput(format!("bad stage count in `{s}`")))?;
                if !(1..=MAX_STAGES).contains(&stages) {
                    return Err(Error::UnsupportedStages { stages, max: MAX_STAGES });
                }
                Ok(Method::Gauss(stages))
            }
        }
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where predictor-corrector runs start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcStart {
    /// The full initial vectors as given.
    #[default]
    Given,
    /// The reduced initial vectors expanded to full coordinates (node-2
    /// fluxes from the elimination map).
    Reconstructed,
}

/// State of a running trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunState {
    Reduced(ReducedState),
    Full(FullState),
}

impl RunState {
    pub fn t(&self) -> f64 {
        match self {
            RunState::Reduced(s) => s.t,
            RunState::Full(s) => s.t,
        }
    }

    /// The reduced coordinates (drops node-2 fluxes of full states).
    pub fn reduced(&self) -> ReducedState {
        match self {
            RunState::Reduced(s) => *s,
            RunState::Full(s) => s.to_reduced(),
        }
    }
}

/// Flux columns of a frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrameFlux {
    /// `(Ψ1α, Ψ1β, Ψf, Ψq)`.
    Reduced(Vector4<f64>),
    /// `(Ψ1α, Ψ1β, Ψ2α, Ψ2β, Ψf, Ψq)`.
    Full(Vector6<f64>),
}

impl FrameFlux {
    /// `(Ψ1α, Ψ1β, Ψf, Ψq)` for either layout.
    pub fn shared(&self) -> Vector4<f64> {
        match self {
            FrameFlux::Reduced(v) => *v,
            FrameFlux::Full(v) => crate::state::reduce_flux(v),
        }
    }
}

/// One output record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryFrame {
    pub t: f64,
    pub omega: Vector6<f64>,
    /// `ω − 120π`.
    pub omega_err: Vector6<f64>,
    /// Raw (unwrapped) angles.
    pub theta: Vector6<f64>,
    pub flux: FrameFlux,
    pub hamiltonian: f64,
    /// Relative `‖g̃‖∞` (reduced runs only).
    pub constraint_norm: Option<f64>,
}

impl TrajectoryFrame {
    pub fn from_state(model: &GeneratorModel, state: &RunState) -> Self {
        match state {
            RunState::Reduced(s) => Self {
                t: s.t,
                omega: s.theta_dot,
                omega_err: s.theta_dot.add_scalar(-SYNC_SPEED),
                theta: s.theta,
                flux: FrameFlux::Reduced(s.psi_t),
                hamiltonian: model.hamiltonian(s),
                constraint_norm: Some(model.relative_constraint_residual(s)),
            },
            RunState::Full(s) => Self {
                t: s.t,
                omega: s.theta_dot,
                omega_err: s.theta_dot.add_scalar(-SYNC_SPEED),
                theta: s.theta,
                flux: FrameFlux::Full(s.psi),
                hamiltonian: model.hamiltonian_full(s),
                constraint_norm: None,
            },
        }
    }
}

/// Column layout of a frame CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameSchema {
    Reduced,
    Full,
}

impl FrameSchema {
    pub fn of(frame: &TrajectoryFrame) -> Self {
        match frame.flux {
            FrameFlux::Reduced(_) => FrameSchema::Reduced,
            FrameFlux::Full(_) => FrameSchema::Full,
        }
    }

    pub fn header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=6).map(|i| format!("omega_{i}")));
        cols.extend((1..=6).map(|i| format!("omega_err_{i}")));
        cols.extend((1..=6).map(|i| format!("theta_{i}")));
        let flux: &[&str] = match self {
            FrameSchema::Reduced => &["psi_1a", "psi_1b", "psi_f", "psi_q"],
            FrameSchema::Full => &["psi_1a", "psi_1b", "psi_2a", "psi_2b", "psi_f", "psi_q"],
        };
        cols.extend(flux.iter().map(|s| s.to_string()));
        cols.push("H".into());
        if *self == FrameSchema::Reduced {
            cols.push("constraint_norm".into());
        }
        cols.join(",")
    }

    fn width(&self) -> usize {
        match self {
            FrameSchema::Reduced => 1 + 18 + 4 + 2,
            FrameSchema::Full => 1 + 18 + 6 + 1,
        }
    }
}

/// Receives frames as they are produced.
pub trait FrameSink {
    fn push(&mut self, frame: &TrajectoryFrame) -> Result<()>;
}

impl FrameSink for Vec<TrajectoryFrame> {
    fn push(&mut self, frame: &TrajectoryFrame) -> Result<()> {
        Vec::push(self, *frame);
        Ok(())
    }
}

/// Drops every frame.
pub struct NullSink;

impl FrameSink for NullSink {
    fn push(&mut self, _: &TrajectoryFrame) -> Result<()> {
        Ok(())
    }
}

/// Streams frames as CSV with 17 significant digits.
pub struct CsvFrameWriter<W: Write> {
    out: W,
    schema: Option<FrameSchema>,
}

impl<W: Write> CsvFrameWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, schema: None }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> FrameSink for CsvFrameWriter<W> {
    fn push(&mut self, frame: &TrajectoryFrame) -> Result<()> {
        let schema = FrameSchema::of(frame);
        match self.schema {
            None => {
                writeln!(self.out, "{}", schema.header())?;
                self.schema = Some(schema);
            }
            Some(s) if s != schema => {
                return Err(Error::SchemaMismatch("frames of different layouts in one file".into()));
            }
            Some(_) => {}
        }
        let mut line = String::with_capacity(26 * schema.width());
        let mut put = |v: f64| {
            if !line.is_empty() {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        };
        put(frame.t);
        frame.omega.iter().for_each(|&v| put(v));
        frame.omega_err.iter().for_each(|&v| put(v));
        frame.theta.iter().for_each(|&v| put(v));
        match &frame.flux {
            FrameFlux::Reduced(v) => v.iter().for_each(|&x| put(x)),
            FrameFlux::Full(v) => v.iter().for_each(|&x| put(x)),
        }
        put(frame.hamiltonian);
        if let Some(c) = frame.constraint_norm {
            put(c);
        }
        writeln!(self.out, "{line}")?;
        Ok(())
    }
}

/// Frames as a CSV string.
pub fn frames_to_csv(frames: &[TrajectoryFrame]) -> Result<String> {
    let mut w = CsvFrameWriter::new(Vec::new());
    for f in frames {
        w.push(f)?;
    }
    String::from_utf8(w.into_inner()).map_err(|e| Error::Parse(e.to_string()))
}

/// Parses a frame CSV written by [`CsvFrameWriter`].
pub fn parse_frames_csv(text: &str) -> Result<(FrameSchema, Vec<TrajectoryFrame>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty frame file".into()))?;
    let schema = [FrameSchema::Reduced, FrameSchema::Full]
        .into_iter()
        .find(|s| s.header() == header.trim_end())
        .ok_or_else(|| Error::SchemaMismatch(format!("unrecognised header `{header}`")))?;
    let mut frames = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", no + 2)))?;
        if vals.len() != schema.width() {
            return Err(Error::SchemaMismatch(format!(
                "line {}: {} columns, expected {}",
                no + 2,
                vals.len(),
                schema.width()
            )));
        }
        let v6 = |o: usize| Vector6::from_column_slice(&vals[o..o + 6]);
        let frame = match schema {
            FrameSchema::Reduced => TrajectoryFrame {
                t: vals[0],
                omega: v6(1),
                omega_err: v6(7),
                theta: v6(13),
                flux: FrameFlux::Reduced(Vector4::from_column_slice(&vals[19..23])),
                hamiltonian: vals[23],
                constraint_norm: Some(vals[24]),
            },
            FrameSchema::Full => TrajectoryFrame {
                t: vals[0],
                omega: v6(1),
                omega_err: v6(7),
                theta: v6(13),
                flux: FrameFlux::Full(v6(19)),
                hamiltonian: vals[25],
                constraint_norm: None,
            },
        };
        frames.push(frame);
    }
    Ok((schema, frames))
}

/// What one step produced, for post-hoc diagnostics.
pub enum StepData<'a> {
    Gauss {
        tableau: &'a ButcherTableau,
        before: &'a ReducedState,
        step: &'a GaussStep,
    },
    Pc {
        before: &'a FullState,
        after: &'a FullState,
        report: &'a PcStepReport,
    },
}

/// Hook called by [`integrate`] after every step and every emitted frame.
pub trait StepObserver {
    fn on_step(&mut self, _step: u64, _h: f64, _data: StepData<'_>) -> Result<()> {
        Ok(())
    }

    fn on_frame(&mut self, _frame: &TrajectoryFrame, _state: &RunState) -> Result<()> {
        Ok(())
    }

    /// Whether collocation stage samples must be retained.
    fn needs_stages(&self) -> bool {
        false
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl StepObserver for NoObserver {}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn on_step(&mut self, step: u64, h: f64, data: StepData<'_>) -> Result<()> {
        let copy = match &data {
            StepData::Gauss { tableau, before, step } => StepData::Gauss { tableau, before, step },
            StepData::Pc { before, after, report } => StepData::Pc { before, after, report },
        };
        self.0.on_step(step, h, data)?;
        self.1.on_step(step, h, copy)
    }

    fn on_frame(&mut self, frame: &TrajectoryFrame, state: &RunState) -> Result<()> {
        self.0.on_frame(frame, state)?;
        self.1.on_frame(frame, state)
    }

    fn needs_stages(&self) -> bool {
        self.0.needs_stages() || self.1.needs_stages()
    }
}

impl<T: StepObserver + ?Sized> StepObserver for &mut T {
    fn on_step(&mut self, step: u64, h: f64, data: StepData<'_>) -> Result<()> {
        (**self).on_step(step, h, data)
    }

    fn on_frame(&mut self, frame: &TrajectoryFrame, state: &RunState) -> Result<()> {
        (**self).on_frame(frame, state)
    }

    fn needs_stages(&self) -> bool {
        (**self).needs_stages()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    /// Emit a frame every `stride` steps (and after the last step).
    pub stride: u64,
    pub gauss: GaussOptions,
    pub pc_start: PcStart,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { stride: 1, gauss: GaussOptions::default(), pc_start: PcStart::Given }
    }
}

/// Aggregate solver statistics of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub method: Method,
    pub h: f64,
    pub steps: u64,
    pub frames: u64,
    pub final_state: RunState,
    /// Largest relative `‖g̃‖∞` over all reduced states (initial included).
    pub max_constraint: Option<f64>,
    pub max_newton_iterations: usize,
    pub total_newton_iterations: u64,
    pub max_stage_residual: f64,
    pub max_solve_residual: f64,
}

/// The start state a method uses.
pub fn start_state(model: &GeneratorModel, ics: &InitialState, method: Method, pc_start: PcStart) -> RunState {
    match (method, pc_start) {
        (Method::Gauss(_), _) => RunState::Reduced(ics.reduced),
        (_, PcStart::Given) => RunState::Full(ics.full),
        (_, PcStart::Reconstructed) => RunState::Full(model.expand_state(&ics.reduced)),
    }
}

/// Integrates `n_steps` fixed steps of size `h`.
///
/// Frames are emitted for the start state, every `stride` steps and the final
/// state; frame times are `t₀ + n h` exactly.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    model: &GeneratorModel,
    start: &RunState,
    h: f64,
    n_steps: u64,
    method: Method,
    opts: &IntegrateOptions,
    sink: &mut dyn FrameSink,
    observer: &mut dyn StepObserver,
) -> Result<RunSummary> {
    if n_steps < 1 {
        return Err(Error::InvalidInput("n_steps must be at least 1".into()));
    }
    if opts.stride < 1 {
        return Err(Error::InvalidInput("stride must be at least 1".into()));
    }
    let t0 = start.t();
    let mut summary = RunSummary {
        method,
        h,
        steps: 0,
        frames: 0,
        final_state: *start,
        max_constraint: None,
        max_newton_iterations: 0,
        total_newton_iterations: 0,
        max_stage_residual: 0.0,
        max_solve_residual: 0.0,
    };
    let mut emit = |state: &RunState, summary: &mut RunSummary, observer: &mut dyn StepObserver| -> Result<()> {
        let frame = TrajectoryFrame::from_state(model, state);
        sink.push(&frame)?;
        observer.on_frame(&frame, state)?;
        summary.frames += 1;
        Ok(())
    };
    let wrap = |n: u64, t: f64, e: Error| Error::Integration { step: n, t, source: Box::new(e) };

    match (method, start) {
        (Method::Gauss(s), RunState::Reduced(s0)) => {
            let tableau = gauss_tableau(s)?;
            let mut gopts = opts.gauss;
            gopts.record_stages |= observer.needs_stages();
            let mut stepper = GaussStepper::new(model, &tableau, h, gopts)?;
            let mut state = *s0;
            let mut worst = model.relative_constraint_residual(&state);
            emit(&RunState::Reduced(state), &mut summary, observer)?;
            for n in 0..n_steps {
                let out = stepper.step(&state).map_err(|e| wrap(n, state.t, e))?;
                let mut next = out.state;
                next.t = t0 + (n + 1) as f64 * h;
                if !next.is_finite() {
                    return Err(wrap(n, state.t, Error::InvalidInput("non-finite state".into())));
                }
                summary.max_newton_iterations = summary.max_newton_iterations.max(out.report.newton_iterations);
                summary.total_newton_iterations += out.report.newton_iterations as u64;
                summary.max_stage_residual = summary.max_stage_residual.max(out.report.stage_residual);
                worst = worst.max(out.report.constraint_residual);
                observer.on_step(n, h, StepData::Gauss { tableau: &tableau, before: &state, step: &out })?;
                state = next;
                if (n + 1) % opts.stride == 0 || n + 1 == n_steps {
                    emit(&RunState::Reduced(state), &mut summary, observer)?;
                }
            }
            summary.max_constraint = Some(worst);
            summary.final_state = RunState::Reduced(state);
        }
        (Method::Pc1 | Method::Pc2, RunState::Full(s0)) => {
            let variant = if method == Method::Pc1 { PcVariant::One } else { PcVariant::Two };
            let mut ws = PcWorkspace::new(model, h)?;
            let mut state = *s0;
            emit(&RunState::Full(state), &mut summary, observer)?;
            for n in 0..n_steps {
                let (mut next, report) = ws.step(&state, variant).map_err(|e| wrap(n, state.t, e))?;
                next.t = t0 + (n + 1) as f64 * h;
                summary.max_solve_residual = summary
                    .max_solve_residual
                    .max(report.electrical_residual)
                    .max(report.mechanical_residual);
                observer.on_step(n, h, StepData::Pc { before: &state, after: &next, report: &report })?;
                state = next;
                if (n + 1) % opts.stride == 0 || n + 1 == n_steps {
                    emit(&RunState::Full(state), &mut summary, observer)?;
                }
            }
            summary.final_state = RunState::Full(state);
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "method {method} needs a {} start state",
                if method.is_reduced() { "reduced" } else { "full" }
            )))
        }
    }
    summary.steps = n_steps;
    Ok(summary)
}

/// Number of steps of size `h` covering `t_end`, rejecting non-integer ratios.
pub fn step_count(t_end: f64, h: f64) -> Result<u64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {h}")));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidInput(format!("end time must be positive, got {t_end}")));
    }
    let n = (t_end / h).round();
    if n < 1.0 || (n * h - t_end).abs() > 1e-9 * t_end {
        return Err(Error::InvalidInput(format!("end time {t_end} is not a whole number of steps of {h}")));
    }
    Ok(n as u64)
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Errors at `t_end` per variable group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupErrors {
    pub psi: f64,
    pub omega: f64,
    pub theta: f64,
    pub psi_dot: f64,
}

impl GroupErrors {
    pub fn between(a: &ReducedState, b: &ReducedState) -> Self {
        Self {
            psi: (a.psi_t - b.psi_t).amax(),
            omega: (a.theta_dot - b.theta_dot).amax(),
            theta: (a.theta - b.theta).amax(),
            psi_dot: (a.psi_t_dot - b.psi_t_dot).amax(),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.psi, self.omega, self.theta, self.psi_dot]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self { psi: a[0], omega: a[1], theta: a[2], psi_dot: a[3] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSpec {
    pub method: Method,
    pub h_list: Vec<f64>,
    pub t_end: f64,
    pub ref_stages: usize,
    pub ref_h: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub method: Method,
    pub t_end: f64,
    pub ref_stages: usize,
    pub ref_h: f64,
    /// `(h, errors)` in the order of the input list.
    pub rows: Vec<(f64, GroupErrors)>,
    /// Fitted `d log(error) / d log(h)` per group.
    pub slopes: GroupErrors,
}

impl ConvergenceReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# {} vs gauss:{} at h = {:e}, t_end = {}\nh,err_psi,err_omega,err_theta,err_psi_dot\n",
            self.method, self.ref_stages, self.ref_h, self.t_end
        );
        for (h, e) in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                h, e.psi, e.omega, e.theta, e.psi_dot
            ));
        }
        let s = &self.slopes;
        out.push_str(&format!(
            "slope,{:.4},{:.4},{:.4},{:.4}\n",
            s.psi, s.omega, s.theta, s.psi_dot
        ));
        out
    }
}

fn validate_h_list(spec: &ConvergenceSpec) -> Result<()> {
    let hs = &spec.h_list;
    if hs.len() < 3 {
        return Err(Error::InvalidInput("a convergence study needs at least 3 step sizes".into()));
    }
    let mut sorted = hs.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.windows(2).any(|w| !(w[1] < w[0] * (1.0 - 1e-9))) {
        return Err(Error::InvalidInput("step sizes must be distinct".into()));
    }
    let ratio = sorted[0] / sorted[1];
    if sorted.windows(2).any(|w| ((w[0] / w[1]) / ratio - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidInput("step sizes must be geometrically spaced".into()));
    }
    let h_min = sorted[sorted.len() - 1];
    if !(spec.ref_h <= h_min / 4.0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!(
            "reference step {:e} must not exceed a quarter of the smallest step {:e}",
            spec.ref_h, h_min
        )));
    }
    if !(1..=MAX_STAGES).contains(&spec.ref_stages) {
        return Err(Error::UnsupportedStages { stages: spec.ref_stages, max: MAX_STAGES });
    }
    Ok(())
}

/// Runs `spec.method` for every step size and a Gauss reference, all from
/// `ics`, and fits observed orders. Predictor-corrector runs start from the
/// reconstructed full state so both families solve the same problem.
/// At most `threads` trajectories run at once.
pub fn convergence_study(
    model: &GeneratorModel,
    ics: &InitialState,
    spec: &ConvergenceSpec,
    threads: usize,
) -> Result<ConvergenceReport> {
    validate_h_list(spec)?;
    let mut jobs: Vec<(Method, f64)> = vec![(Method::Gauss(spec.ref_stages), spec.ref_h)];
    jobs.extend(spec.h_list.iter().map(|&h| (spec.method, h)));
    for &(_, h) in &jobs {
        step_count(spec.t_end, h)?;
    }

    let results: Mutex<Vec<Option<Result<ReducedState>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (method, h) = jobs[i];
                let res = final_state(model, ics, method, h, spec.t_end);
                results.lock().expect("result slot")[i] = Some(res);
            });
        }
    });
    let mut finals = Vec::with_capacity(jobs.len());
    for (i, r) in results.into_inner().expect("result slots").into_iter().enumerate() {
        let state = r.expect("every job ran").map_err(|e| match i {
            0 => Error::InvalidInput(format!("reference run failed: {e}")),
            _ => e,
        })?;
        finals.push(state);
    }

    let reference = finals[0];
    let rows: Vec<(f64, GroupErrors)> = spec
        .h_list
        .iter()
        .zip(&finals[1..])
        .map(|(&h, s)| (h, GroupErrors::between(s, &reference)))
        .collect();
    let log_h: Vec<f64> = rows.iter().map(|(h, _)| h.ln()).collect();
    let mut slopes = [0.0; 4];
    for (g, slope) in slopes.iter_mut().enumerate() {
        let log_e: Vec<f64> = rows.iter().map(|(_, e)| e.as_array()[g].max(f64::MIN_POSITIVE).ln()).collect();
        *slope = least_squares_slope(&log_h, &log_e);
    }
    Ok(ConvergenceReport {
        method: spec.method,
        t_end: spec.t_end,
        ref_stages: spec.ref_stages,
        ref_h: spec.ref_h,
        rows,
        slopes: GroupErrors::from_array(slopes),
    })
}

fn final_state(model: &GeneratorModel, ics: &InitialState, method: Method, h: f64, t_end: f64) -> Result<ReducedState> {
    let n = step_count(t_end, h)?;
    let start = start_state(model, ics, method, PcStart::Reconstructed);
    let opts = IntegrateOptions { stride: n, ..IntegrateOptions::default() };
    let summary = integrate(model, &start, h, n, method, &opts, &mut NullSink, &mut NoObserver)?;
    Ok(summary.final_state.reduced())
}

/// Diagnostics switched on for a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticFlags {
    pub ledger: bool,
    pub dirac: bool,
    pub constraint: bool,
}

/// One simulation run, loadable from a key-value file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub h: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub stride: u64,
    /// Preset name or parameter file path.
    #[serde(default = "default_params")]
    pub params: String,
    /// `paper-ics` or an initial-state file path.
    #[serde(default = "default_ics")]
    pub initial_state: String,
    #[serde(default)]
    pub pc_start: PcStart,
    #[serde(default)]
    pub diagnostics: DiagnosticFlags,
    /// Allows horizons beyond [`LONG_HORIZON`].
    #[serde(default)]
    pub long: bool,
}

fn one() -> u64 {
    1
}

fn default_params() -> String {
    crate::params::PRESET_FBM_SSR.to_string()
}

fn default_ics() -> String {
    crate::ics::PAPER_ICS.to_string()
}

impl RunConfig {
    pub fn new(method: Method, h: f64, t_end: f64) -> Self {
        Self {
            method,
            h,
            t_end,
            stride: 1,
            params: default_params(),
            initial_state: default_ics(),
            pc_start: PcStart::Given,
            diagnostics: DiagnosticFlags::default(),
            long: false,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride < 1 {
            return Err(Error::InvalidInput("stride must be at least 1".into()));
        }
        step_count(self.t_end, self.h)?;
        if self.t_end > LONG_HORIZON && !self.long {
            return Err(Error::InvalidInput(format!(
                "horizons above {LONG_HORIZON} s are hour-scale; pass the long flag to run them"
            )));
        }
        Ok(())
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub frames: Vec<TrajectoryFrame>,
    pub summary: RunSummary,
    pub ledger: Option<crate::diagnostics::EnergySummary>,
    /// Largest Dirac membership residual over all stage points.
    pub dirac_max: Option<f64>,
}

/// Executes a configured run, collecting frames in memory.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let mut frames = Vec::new();
    let (summary, ledger, dirac_max) = run_into(config, &mut frames)?;
    Ok(RunOutput { frames, summary, ledger, dirac_max })
}

/// Executes a configured run, streaming frames into `sink`.
pub fn run_into(
    config: &RunConfig,
    sink: &mut dyn FrameSink,
) -> Result<(RunSummary, Option<crate::diagnostics::EnergySummary>, Option<f64>)> {
    use crate::diagnostics::{DiracMonitor, EnergyLedger};
    config.validate()?;
    let model = GeneratorModel::new(PhysicalParams::from_source(&config.params)?)?;
    let ics = load_initial_state(&config.initial_state)?;
    let n = step_count(config.t_end, config.h)?;
    let start = start_state(&model, &ics, config.method, config.pc_start);
    let opts = IntegrateOptions { stride: config.stride, pc_start: config.pc_start, ..IntegrateOptions::default() };

    let mut ledger = config.diagnostics.ledger.then(|| EnergyLedger::new(&model));
    let mut dirac = (config.diagnostics.dirac && config.method.is_reduced()).then(|| DiracMonitor::new(&model));
    let summary = {
        let mut obs = (OptionalObserver(ledger.as_mut()), OptionalObserver(dirac.as_mut()));
        integrate(&model, &start, config.h, n, config.method, &opts, sink, &mut obs)?
    };
    Ok((summary, ledger.map(|l| l.finish()), dirac.map(|d| d.max_residual())))
}

struct OptionalObserver<'a, T: StepObserver>(Option<&'a mut T>);

impl<T: StepObserver> StepObserver for OptionalObserver<'_, T> {
    fn on_step(&mut self, step: u64, h: f64, data: StepData<'_>) -> Result<()> {
        match &mut self.0 {
            Some(o) => o.on_step(step, h, data),
            None => Ok(()),
        }
    }

    fn on_frame(&mut self, frame: &TrajectoryFrame, state: &RunState) -> Result<()> {
        match &mut self.0 {
            Some(o) => o.on_frame(frame, state),
            None => Ok(()),
        }
    }

    fn needs_stages(&self) -> bool {
        self.0.as_ref().is_some_and(|o| o.needs_stages())
    }
}

/// Which coordinates [`compare_runs`] measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CompareMetric {
    /// Rotor speeds only.
    #[default]
    Omega,
    /// `(θ̇, θ, Ψ1α, Ψ1β, Ψf, Ψq)`.
    Shared,
}

impl FromStr for CompareMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(Self::Omega),
            "shared" => Ok(Self::Shared),
            _ => Err(Error::InvalidInput(format!("unknown metric `{s}` (omega or shared)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// `(t, ‖a − b‖∞)` per frame.
    pub series: Vec<(f64, f64)>,
    pub max: f64,
    pub mean: f64,
}

impl Comparison {
    /// Least-squares slope of `ln(discrepancy)` against `t` over frames with
    /// `t > after` and nonzero discrepancy.
    pub fn log_trend_slope(&self, after: f64) -> Option<f64> {
        log_trend_slope(&self.series, after)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,discrepancy\n");
        for (t, d) in &self.series {
            out.push_str(&format!("{t:.16e},{d:.16e}\n"));
        }
        out
    }
}

/// Least-squares slope of `ln(v)` against `t` for samples with `t > after`
/// and `v > 0`; `None` with fewer than two such samples.
pub fn log_trend_slope(series: &[(f64, f64)], after: f64) -> Option<f64> {
    let (ts, ls): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(t, v)| *t > after && *v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    (ts.len() >= 2).then(|| least_squares_slope(&ts, &ls))
}

/// Frame-by-frame discrepancy of two runs on a common time grid.
pub fn compare_runs(a: &[TrajectoryFrame], b: &[TrajectoryFrame], metric: CompareMetric) -> Result<Comparison> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::SchemaMismatch(format!("frame counts differ: {} vs {}", a.len(), b.len())));
    }
    let mut series = Vec::with_capacity(a.len());
    for (fa, fb) in a.iter().zip(b) {
        if (fa.t - fb.t).abs() > 1e-9 * fa.t.abs().max(1.0) {
            return Err(Error::SchemaMismatch(format!("frame times differ: {} vs {}", fa.t, fb.t)));
        }
        let mut d = (fa.omega - fb.omega).amax();
        if metric == CompareMetric::Shared {
            d = d
                .max((fa.theta - fb.theta).amax())
                .max((fa.flux.shared() - fb.flux.shared()).amax());
        }
        series.push((fa.t, d));
    }
    let max = series.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let mean = series.iter().map(|(_, d)| d).sum::<f64>() / series.len() as f64;
    Ok(Comparison { series, max, mean })
}

/// Worker count from `PHDAE_THREADS` (default: available parallelism).
pub fn thread_cap() -> usize {
    std::env::var("PHDAE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}
