//! Initial states: the built-in `paper-ics` set and user-supplied files.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Vector4, Vector6};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::state::{FullState, ReducedState};

/// Name of the built-in initial state.
pub const PAPER_ICS: &str = "paper-ics";

/// A start point for both model formulations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialState {
    /// Start point of predictor-corrector runs.
    pub full: FullState,
    /// Start point of collocation runs.
    pub reduced: ReducedState,
}

/// The published steady-state start point (4-decimal rounded values,
/// synchronous speed on every mass).
pub fn paper_initial_state() -> InitialState {
    let sync = 120.0 * PI;
    let full = FullState {
        t: 0.0,
        psi_dot: Vector6::new(26014.5269, 1.9571, 25102.2884, 6773.1172, 0.0, 0.0),
        psi: Vector6::new(0.0052, -69.0057, 17.9663, -66.5859, 645.4103, -624.0651),
        theta_dot: Vector6::repeat(sync),
        theta: Vector6::new(-0.3629, -0.3761, -0.3897, -0.4024, -0.4143, -0.4143),
    };
    let reduced = ReducedState {
        t: 0.0,
        psi_t_dot: Vector4::new(26014.5269, 1.9571, 0.0, 0.0),
        psi_t: Vector4::new(0.0052, -69.0057, 645.4103, -624.0651),
        theta_dot: full.theta_dot,
        theta: full.theta,
    };
    InitialState { full, reduced }
}

/// Loads `paper-ics` or a key-value file.
///
/// The file gives `theta_dot`, `theta` (6 entries each) and at least one of the
/// electrical blocks: `psi_dot` + `psi` (6 entries, full model) and/or
/// `psi_t_dot` + `psi_t` (4 entries, reduced model). A missing block is
/// derived from the other one by dropping or keeping node-2 values; when only
/// the reduced block is present the node-2 entries are filled with zeros and
/// should be reconstructed with [`crate::model::GeneratorModel::expand_state`].
pub fn load_initial_state(source: &str) -> Result<InitialState> {
    if source == PAPER_ICS {
        Ok(paper_initial_state())
    } else {
        let text = std::fs::read_to_string(Path::new(source))?;
        parse_initial_state(&text)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IcFile {
    #[serde(default)]
    t: f64,
    psi_dot: Option<Vec<f64>>,
    psi: Option<Vec<f64>>,
    psi_t_dot: Option<Vec<f64>>,
    psi_t: Option<Vec<f64>>,
    theta_dot: Vec<f64>,
    theta: Vec<f64>,
}

pub fn parse_initial_state(text: &str) -> Result<InitialState> {
    let f: IcFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let theta_dot = vec6("theta_dot", &f.theta_dot)?;
    let theta = vec6("theta", &f.theta)?;

    let full_block = match (&f.psi_dot, &f.psi) {
        (Some(a), Some(b)) => Some((vec6("psi_dot", a)?, vec6("psi", b)?)),
        (None, None) => None,
        _ => return Err(Error::Parse("psi_dot and psi must be given together".into())),
    };
    let reduced_block = match (&f.psi_t_dot, &f.psi_t) {
        (Some(a), Some(b)) => Some((vec4("psi_t_dot", a)?, vec4("psi_t", b)?)),
        (None, None) => None,
        _ => return Err(Error::Parse("psi_t_dot and psi_t must be given together".into())),
    };

    let (full_e, red_e) = match (full_block, reduced_block) {
        (Some(fb), Some(rb)) => (fb, rb),
        (Some((pd, p)), None) => (
            (pd, p),
            (crate::state::reduce_flux(&pd), crate::state::reduce_flux(&p)),
        ),
        (None, Some((pd, p))) => (
            (
                crate::state::expand_flux(&pd, (0.0, 0.0)),
                crate::state::expand_flux(&p, (0.0, 0.0)),
            ),
            (pd, p),
        ),
        (None, None) => {
            return Err(Error::Parse(
                "initial state needs psi_dot/psi or psi_t_dot/psi_t".into(),
            ))
        }
    };
    let state = InitialState {
        full: FullState {
            t: f.t,
            psi_dot: full_e.0,
            psi: full_e.1,
            theta_dot,
            theta,
        },
        reduced: ReducedState {
            t: f.t,
            psi_t_dot: red_e.0,
            psi_t: red_e.1,
            theta_dot,
            theta,
        },
    };
    if !state.full.is_finite() || !state.reduced.is_finite() {
        return Err(Error::Parse("initial state has non-finite entries".into()));
    }
    Ok(state)
}

fn vec6(name: &str, v: &[f64]) -> Result<Vector6<f64>> {
    if v.len() != 6 {
        return Err(Error::Parse(format!("`{name}` needs 6 entries, got {}", v.len())));
    }
    Ok(Vector6::from_column_slice(v))
}

fn vec4(name: &str, v: &[f64]) -> Result<Vector4<f64>> {
    if v.len() != 4 {
        return Err(Error::Parse(format!("`{name}` needs 4 entries, got {}", v.len())));
    }
    Ok(Vector4::from_column_slice(v))
}
