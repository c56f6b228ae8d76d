use thiserror::Error;

/// Errors raised by the model, the integrators and the diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coupling denominator {value:e} is numerically zero")]
    SingularDenominator { value: f64 },

    #[error("singular linear system at step {step} (t = {t}): {detail}")]
    SingularMatrix { step: u64, t: f64, detail: String },

    #[error("stage Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("inconsistent initial state: relative constraint residual {residual:e} exceeds {tolerance:e}")]
    InconsistentState { residual: f64, tolerance: f64 },

    #[error("unsupported stage count {stages} (supported: 1..={max})")]
    UnsupportedStages { stages: usize, max: usize },

    #[error("step size mismatch: workspace built for h = {expected}, called with h = {got}")]
    StepSizeMismatch { expected: f64, got: f64 },

    #[error("integration failed at step {step} (t = {t}): {source}")]
    Integration {
        step: u64,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("missing stage data: {0}")]
    MissingStages(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
