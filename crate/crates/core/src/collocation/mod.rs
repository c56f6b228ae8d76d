//! Gauss (and general) collocation applied to the reduced generator DAE.

mod legendre;
mod step;
mod tableau;

pub use legendre::{
    gauss_rule_unit, legendre, shifted_legendre, shifted_legendre_binomial,
    shifted_legendre_roots, MAX_STAGES,
};
pub use step::{gauss_dae_step, GaussOptions, GaussStep, GaussStepReport, GaussStepper, StageSample};
pub use tableau::{collocation_tableau, gauss_tableau, ButcherTableau};
