//! Simulation of the first-benchmark-model synchronous generator.
//!
//! The crate provides the full and reduced generator models ([`model`]), the
//! two predictor-corrector schemes ([`pc`]), Gauss collocation on the reduced
//! index-1 descriptor form ([`collocation`]), port-Hamiltonian diagnostics
//! ([`diagnostics`]), numerical checks of the Gauss tableau identities
//! ([`appendix`]) and the experiment drivers used by the `fbm-sim` CLI
//! ([`sim`]).

pub mod appendix;
pub mod collocation;
pub mod diagnostics;
pub mod error;
pub mod ics;
pub mod model;
pub mod params;
pub mod pc;
pub mod sim;
pub mod state;

pub use error::{Error, Result};
pub use ics::{load_initial_state, paper_initial_state, InitialState};
pub use model::GeneratorModel;
pub use params::PhysicalParams;
pub use state::{FullState, PcState, ReducedState};
