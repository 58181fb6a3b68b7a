//! Vehicle dynamics: the extended single-track (EST) model, the single rigid
//! body (SRB) model, the shared sigmoid tire model, rotation kinematics and
//! fixed-step integration.
//!
//! Frames: world `W` has `z` up; body `B` has `x` forward, `y` left, `z` up.
//! Rotation matrices map body-frame components to world-frame components.

mod est;
mod integrate;
mod params;
mod rotation;
mod srb;
mod tire;

pub use est::{EstAux, EstModel, EstState};
pub use integrate::{integrate, rollout, step, steps_per_segment, OdeState, Scheme, VehicleModel};
pub use params::{Control, ControlSequence, ModelKind, TireParams, VehicleParams};
pub use rotation::{euler_321_from_matrix, euler_rates_321, rot_123, rot_321, GIMBAL_MARGIN};
pub use srb::{SrbAux, SrbModel, SrbState, WHEELS};
pub use tire::{load_transfer_coeffs, tire_lateral_force, LoadTransfer};

use crate::Real;

/// Floor applied to longitudinal velocity inside slip-angle arctangents.
pub const V_BX_FLOOR: f64 = 0.1;

/// Per-wheel tire diagnostics, ordered `[fl, fr, rl, rr]`.
///
/// For the EST model `f_y` and `alpha` hold the virtual axle values split
/// evenly between the two wheels of the axle, and `chi`/`chi_dot` are absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireOutputs<T = f64> {
    pub f_z: [T; 4],
    pub f_y: [T; 4],
    pub alpha: [T; 4],
    pub chi: Option<[T; 4]>,
    pub chi_dot: Option<[T; 4]>,
}

impl<T: Real> TireOutputs<T> {
    pub fn min_normal_force(&self) -> T {
        self.f_z.iter().copied().fold(T::infinity(), T::min)
    }
}
