//! State vectors of the full (P-C) and reduced (descriptor) generator models.

use nalgebra::{SVector, Vector4, Vector6};

/// Differential part `(Ψ̃; θ̇; θ)` of the reduced model.
pub type DiffVector = SVector<f64, 16>;
/// Algebraic part `Ψ̃̇` of the reduced model.
pub type AlgVector = Vector4<f64>;
/// Port-Hamiltonian state `(Ψ̃̇; Ψ̃; θ̇; θ; t)`.
pub type PhVector = SVector<f64, 21>;
/// Electrical or mechanical half-state of the full model.
pub type HalfVector = SVector<f64, 12>;

/// Block offsets inside a [`PhVector`].
pub mod ph {
    pub const PSI_DOT: usize = 0;
    pub const PSI: usize = 4;
    pub const THETA_DOT: usize = 8;
    pub const THETA: usize = 14;
    pub const TIME: usize = 20;
    pub const DIM: usize = 21;
}

/// Block offsets inside a [`DiffVector`].
pub mod diff {
    pub const PSI: usize = 0;
    pub const THETA_DOT: usize = 4;
    pub const THETA: usize = 10;
    pub const DIM: usize = 16;
}

/// `(Ψ̇; Ψ; θ̇; θ)` at time `t`.
///
/// Flux ordering is `Ψ1α, Ψ1β, Ψ2α, Ψ2β, Ψf, Ψq`; angles are mass 1..6 of the
/// shaft. Angles are never wrapped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FullState {
    pub t: f64,
    pub psi_dot: Vector6<f64>,
    pub psi: Vector6<f64>,
    pub theta_dot: Vector6<f64>,
    pub theta: Vector6<f64>,
}

/// The predictor-corrector methods work on the full state split as
/// `x_E = (Ψ̇; Ψ)` and `x_M = (θ̇; θ)`.
pub type PcState = FullState;

impl FullState {
    pub fn x_e(&self) -> HalfVector {
        stack6(&self.psi_dot, &self.psi)
    }

    pub fn x_m(&self) -> HalfVector {
        stack6(&self.theta_dot, &self.theta)
    }

    pub fn from_halves(t: f64, x_e: &HalfVector, x_m: &HalfVector) -> Self {
        Self {
            t,
            psi_dot: x_e.fixed_rows::<6>(0).into_owned(),
            psi: x_e.fixed_rows::<6>(6).into_owned(),
            theta_dot: x_m.fixed_rows::<6>(0).into_owned(),
            theta: x_m.fixed_rows::<6>(6).into_owned(),
        }
    }

    /// Drops the eliminated node-2 fluxes.
    pub fn to_reduced(&self) -> ReducedState {
        ReducedState {
            t: self.t,
            psi_t_dot: reduce_flux(&self.psi_dot),
            psi_t: reduce_flux(&self.psi),
            theta_dot: self.theta_dot,
            theta: self.theta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.psi_dot.iter().chain(self.psi.iter()).all(|v| v.is_finite())
            && self.theta_dot.iter().chain(self.theta.iter()).all(|v| v.is_finite())
            && self.t.is_finite()
    }
}

/// `(Ψ̃̇; Ψ̃; θ̇; θ)` at time `t`, with `Ψ̃ = (Ψ1α, Ψ1β, Ψf, Ψq)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedState {
    pub t: f64,
    pub psi_t_dot: Vector4<f64>,
    pub psi_t: Vector4<f64>,
    pub theta_dot: Vector6<f64>,
    pub theta: Vector6<f64>,
}

impl ReducedState {
    pub fn zero(t: f64) -> Self {
        Self {
            t,
            psi_t_dot: Vector4::zeros(),
            psi_t: Vector4::zeros(),
            theta_dot: Vector6::zeros(),
            theta: Vector6::zeros(),
        }
    }

    /// Differential variables `x̃ = (Ψ̃; θ̇; θ)`.
    pub fn x_tilde(&self) -> DiffVector {
        let mut x = DiffVector::zeros();
        x.fixed_rows_mut::<4>(diff::PSI).copy_from(&self.psi_t);
        x.fixed_rows_mut::<6>(diff::THETA_DOT).copy_from(&self.theta_dot);
        x.fixed_rows_mut::<6>(diff::THETA).copy_from(&self.theta);
        x
    }

    /// Algebraic variables `ỹ = Ψ̃̇`.
    pub fn y_tilde(&self) -> AlgVector {
        self.psi_t_dot
    }

    pub fn from_parts(t: f64, x: &DiffVector, y: &AlgVector) -> Self {
        Self {
            t,
            psi_t_dot: *y,
            psi_t: x.fixed_rows::<4>(diff::PSI).into_owned(),
            theta_dot: x.fixed_rows::<6>(diff::THETA_DOT).into_owned(),
            theta: x.fixed_rows::<6>(diff::THETA).into_owned(),
        }
    }

    pub fn to_ph_vector(&self) -> PhVector {
        let mut v = PhVector::zeros();
        v.fixed_rows_mut::<4>(ph::PSI_DOT).copy_from(&self.psi_t_dot);
        v.fixed_rows_mut::<4>(ph::PSI).copy_from(&self.psi_t);
        v.fixed_rows_mut::<6>(ph::THETA_DOT).copy_from(&self.theta_dot);
        v.fixed_rows_mut::<6>(ph::THETA).copy_from(&self.theta);
        v[ph::TIME] = self.t;
        v
    }

    pub fn from_ph_vector(v: &PhVector) -> Self {
        Self {
            t: v[ph::TIME],
            psi_t_dot: v.fixed_rows::<4>(ph::PSI_DOT).into_owned(),
            psi_t: v.fixed_rows::<4>(ph::PSI).into_owned(),
            theta_dot: v.fixed_rows::<6>(ph::THETA_DOT).into_owned(),
            theta: v.fixed_rows::<6>(ph::THETA).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_ph_vector().iter().all(|v| v.is_finite())
    }
}

/// `(Ψ1α, Ψ1β, Ψ2α, Ψ2β, Ψf, Ψq) -> (Ψ1α, Ψ1β, Ψf, Ψq)`.
pub fn reduce_flux(full: &Vector6<f64>) -> Vector4<f64> {
    Vector4::new(full[0], full[1], full[4], full[5])
}

/// Inserts node-2 components into a reduced flux vector.
pub fn expand_flux(reduced: &Vector4<f64>, node2: (f64, f64)) -> Vector6<f64> {
    Vector6::new(reduced[0], reduced[1], node2.0, node2.1, reduced[2], reduced[3])
}

fn stack6(a: &Vector6<f64>, b: &Vector6<f64>) -> HalfVector {
    let mut v = HalfVector::zeros();
    v.fixed_rows_mut::<6>(0).copy_from(a);
    v.fixed_rows_mut::<6>(6).copy_from(b);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_layouts_are_consistent() {
        let s = ReducedState {
            t: 0.25,
            psi_t_dot: Vector4::new(1.0, 2.0, 3.0, 4.0),
            psi_t: Vector4::new(5.0, 6.0, 7.0, 8.0),
            theta_dot: Vector6::from_fn(|i, _| 9.0 + i as f64),
            theta: Vector6::from_fn(|i, _| 15.0 + i as f64),
        };
        let v = s.to_ph_vector();
        assert_eq!(v[ph::TIME], 0.25);
        assert_eq!(v[ph::PSI], 5.0);
        assert_eq!(v[ph::THETA + 5], 20.0);
        assert_eq!(ReducedState::from_ph_vector(&v), s);
        let back = ReducedState::from_parts(s.t, &s.x_tilde(), &s.y_tilde());
        assert_eq!(back, s);
    }

    #[test]
    fn full_halves_round_trip() {
        let f = FullState {
            t: 1.0,
            psi_dot: Vector6::from_fn(|i, _| i as f64),
            psi: Vector6::from_fn(|i, _| 10.0 + i as f64),
            theta_dot: Vector6::from_fn(|i, _| 20.0 + i as f64),
            theta: Vector6::from_fn(|i, _| 30.0 + i as f64),
        };
        assert_eq!(FullState::from_halves(f.t, &f.x_e(), &f.x_m()), f);
        let r = f.to_reduced();
        assert_eq!(r.psi_t, Vector4::new(10.0, 11.0, 14.0, 15.0));
        assert_eq!(expand_flux(&r.psi_t, (12.0, 13.0)), f.psi);
    }
}
