//! Extended single-track model: a planar bicycle model riding the plane
//! tangent to the terrain under the CoM.

use super::integrate::{OdeState, VehicleModel};
use super::tire::{load_transfer_coeffs, tire_lateral_force, LoadTransfer};
use super::{rot_123, Control, TireOutputs, TireParams, VehicleParams, V_BX_FLOOR};
use crate::math::{mat_vec, Vec3};
use crate::terrain::Heightmap;
use crate::{Real, Result};

/// `[x, y, psi, v_by, omega_bz, delta, v_bx]`
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstState<T = f64> {
    pub x: T,
    pub y: T,
    pub psi: T,
    pub v_by: T,
    pub omega_bz: T,
    pub delta: T,
    pub v_bx: T,
}

impl<T: Real> EstState<T> {
    pub fn new(x: T, y: T, psi: T, v_bx: T) -> Self {
        Self {
            x,
            y,
            psi,
            v_bx,
            v_by: T::zero(),
            omega_bz: T::zero(),
            delta: T::zero(),
        }
    }

    pub fn to_array(&self) -> [T; 7] {
        [
            self.x,
            self.y,
            self.psi,
            self.v_by,
            self.omega_bz,
            self.delta,
            self.v_bx,
        ]
    }

    pub fn from_array(a: [T; 7]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            psi: a[2],
            v_by: a[3],
            omega_bz: a[4],
            delta: a[5],
            v_bx: a[6],
        }
    }
}

impl<T: Real> OdeState<T> for EstState<T> {
    #[inline(always)]
    fn axpy(&self, k: T, d: &Self) -> Self {
        Self {
            x: self.x + k * d.x,
            y: self.y + k * d.y,
            psi: self.psi + k * d.psi,
            v_by: self.v_by + k * d.v_by,
            omega_bz: self.omega_bz + k * d.omega_bz,
            delta: self.delta + k * d.delta,
            v_bx: self.v_bx + k * d.v_bx,
        }
    }

    fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Quantities computed alongside the EST derivative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstAux<T = f64> {
    /// Local-plane roll and pitch (1-2-3 convention).
    pub roll: T,
    pub pitch: T,
    /// Gravity resolved in the body frame.
    pub g_body: Vec3<T>,
    pub a_bx: T,
    pub a_by: T,
    /// Front and rear virtual tire normal forces before clamping.
    pub f_z_front: T,
    pub f_z_rear: T,
    pub f_y_front: T,
    pub f_y_rear: T,
    pub alpha_front: T,
    pub alpha_rear: T,
}

impl<T: Real> EstAux<T> {
    /// `a_by - g_by`, the in-plane lateral specific force.
    pub fn lateral_specific_force(&self) -> T {
        self.a_by - self.g_body[1]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EstModel<'a, T: Real = f64> {
    pub terrain: &'a Heightmap<T>,
    pub vehicle: &'a VehicleParams<T>,
    pub tire: &'a TireParams<T>,
    load: LoadTransfer<T>,
}

impl<'a, T: Real> EstModel<'a, T> {
    pub fn new(
        terrain: &'a Heightmap<T>,
        vehicle: &'a VehicleParams<T>,
        tire: &'a TireParams<T>,
    ) -> Self {
        Self {
            terrain,
            vehicle,
            tire,
            load: load_transfer_coeffs(vehicle),
        }
    }

    pub fn load_transfer(&self) -> &LoadTransfer<T> {
        &self.load
    }

    /// Local-plane roll and pitch from the terrain normal under `(x, y)`.
    #[inline]
    pub fn local_attitude(&self, x: T, y: T) -> (T, T) {
        let n = self.terrain.normal_at(x, y);
        let pitch = n[0].max(-T::one()).min(T::one()).asin();
        let roll = (-n[1]).atan2(n[2]);
        (roll, pitch)
    }

    /// Physical tire normal forces `[fl, fr, rl, rr]` from the load transfer
    /// relations, together with the virtual tire lateral forces and slips.
    pub fn tire_normals(&self, s: &EstState<T>, u: &Control<T>) -> TireOutputs<T> {
        let (_, aux) = self.eval(s, u);
        est_tire_outputs(&aux, &self.load, self.vehicle.mass)
    }

    #[inline]
    pub fn eval(&self, s: &EstState<T>, u: &Control<T>) -> (EstState<T>, EstAux<T>) {
        let vp = self.vehicle;
        let lt = &self.load;
        let (roll, pitch) = self.local_attitude(s.x, s.y);
        let r = rot_123(roll, pitch, s.psi);
        let v_world = mat_vec(&r, &[s.v_bx, s.v_by, T::zero()]);
        // Rᵀ (0, 0, -g)
        let g_body = [-vp.g * r[2][0], -vp.g * r[2][1], -vp.g * r[2][2]];

        let vx = s.v_bx.max(T::lit(V_BX_FLOOR));
        let alpha_front = ((s.v_by + s.omega_bz * vp.l_f) / vx).atan() - s.delta;
        let alpha_rear = ((s.v_by - s.omega_bz * vp.l_r) / vx).atan();

        let a_bx = u.v_bx_rate - s.omega_bz * s.v_by;
        let f_z_front = -lt.k_zz_f * g_body[2] - lt.k_zx * a_bx;
        let f_z_rear = -lt.k_zz_r * g_body[2] + lt.k_zx * a_bx;
        let f_y_front = tire_lateral_force(alpha_front, f_z_front.max(T::zero()), self.tire);
        let f_y_rear = tire_lateral_force(alpha_rear, f_z_rear.max(T::zero()), self.tire);

        let v_by_dot = (f_y_front + f_y_rear) / vp.mass + g_body[1] - s.omega_bz * s.v_bx;
        let omega_dot = (f_y_front * vp.l_f * s.delta.cos() - f_y_rear * vp.l_r) / vp.j_zz;

        let d = EstState {
            x: v_world[0],
            y: v_world[1],
            psi: s.omega_bz,
            v_by: v_by_dot,
            omega_bz: omega_dot,
            delta: u.delta_rate,
            v_bx: u.v_bx_rate,
        };
        let aux = EstAux {
            roll,
            pitch,
            g_body,
            a_bx,
            a_by: v_by_dot + s.omega_bz * s.v_bx,
            f_z_front,
            f_z_rear,
            f_y_front,
            f_y_rear,
            alpha_front,
            alpha_rear,
        };
        (d, aux)
    }
}

/// Tire normal forces for each physical tire under longitudinal and lateral
/// load transfer.
pub(crate) fn est_tire_outputs<T: Real>(
    aux: &EstAux<T>,
    lt: &LoadTransfer<T>,
    mass: T,
) -> TireOutputs<T> {
    let half = T::lit(0.5);
    let g_bz = aux.g_body[2];
    let lateral = lt.k_zy * aux.a_by / (-mass * g_bz);
    let front = -lt.k_zz_f * g_bz - lt.k_zx * aux.a_bx;
    let rear = -lt.k_zz_r * g_bz + lt.k_zx * aux.a_bx;
    TireOutputs {
        f_z: [
            front * (half - lateral),
            front * (half + lateral),
            rear * (half - lateral),
            rear * (half + lateral),
        ],
        f_y: [
            aux.f_y_front * half,
            aux.f_y_front * half,
            aux.f_y_rear * half,
            aux.f_y_rear * half,
        ],
        alpha: [
            aux.alpha_front,
            aux.alpha_front,
            aux.alpha_rear,
            aux.alpha_rear,
        ],
        chi: None,
        chi_dot: None,
    }
}

impl<T: Real> VehicleModel<T> for EstModel<'_, T> {
    type State = EstState<T>;
    type Aux = EstAux<T>;

    #[inline]
    fn derivative(&self, s: &EstState<T>, u: &Control<T>) -> Result<(EstState<T>, EstAux<T>)> {
        Ok(self.eval(s, u))
    }

    #[inline]
    fn post_step(&self, s: &mut EstState<T>) {
        s.delta = s
            .delta
            .max(-self.vehicle.delta_max)
            .min(self.vehicle.delta_max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, ControlSequence, Scheme};
    use crate::terrain::GridSpec;

    fn flat() -> Heightmap<f64> {
        Heightmap::flat(
            GridSpec::<f64>::new(-50.0, -50.0, 0.5, 201, 201).unwrap(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn straight_rolling_on_flat_ground() {
        let (t, vp, tp) = (
            flat(),
            VehicleParams::<f64>::mrzr_d4(),
            TireParams::simulated(),
        );
        let m = EstModel::new(&t, &vp, &tp);
        let s = EstState::new(1.0, 2.0, 0.0, 4.0);
        let (d, _) = m.eval(&s, &Control::zero());
        assert_eq!(d.to_array(), [4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn static_normals_sum_to_weight() {
        let (t, vp, tp) = (
            flat(),
            VehicleParams::<f64>::mrzr_d4(),
            TireParams::simulated(),
        );
        let m = EstModel::new(&t, &vp, &tp);
        let out = m.tire_normals(&EstState::new(0.0, 0.0, 0.3, 0.0), &Control::zero());
        let lt = load_transfer_coeffs(&vp);
        assert!((out.f_z[0] - 0.5 * lt.k_zz_f * 9.81).abs() < 1e-9);
        assert!((out.f_z[3] - 0.5 * lt.k_zz_r * 9.81).abs() < 1e-9);
        let total: f64 = out.f_z.iter().sum();
        assert!((total - 969.0 * 9.81).abs() < 1e-9);
    }

    #[test]
    fn inside_wheels_unload_at_critical_lateral_accel() {
        let vp = VehicleParams::<f64>::mrzr_d4();
        let lt = load_transfer_coeffs(&vp);
        let a_crit = vp.mass * vp.g / (2.0 * lt.k_zy);
        let aux = EstAux {
            g_body: [0.0, 0.0, -vp.g],
            a_by: a_crit,
            ..Default::default()
        };
        let out = est_tire_outputs(&aux, &lt, vp.mass);
        assert!(out.f_z[0].abs() < 1e-9 && out.f_z[2].abs() < 1e-9);
        let neg = est_tire_outputs(
            &EstAux {
                a_by: -a_crit,
                ..aux
            },
            &lt,
            vp.mass,
        );
        assert!((neg.f_z[0] - out.f_z[1]).abs() < 1e-9);
        assert!((neg.f_z[3] - out.f_z[2]).abs() < 1e-9);
    }

    #[test]
    fn ramp_produces_only_gravity_side_force() {
        // side slope: terrain rises toward +y
        let spec = GridSpec::<f64>::new(-20.0, -20.0, 0.5, 81, 81).unwrap();
        let t = Heightmap::from_fn(spec, |_, y| 0.2 * y).unwrap();
        let (vp, tp) = (VehicleParams::<f64>::mrzr_d4(), TireParams::simulated());
        let m = EstModel::new(&t, &vp, &tp);
        let (d, aux) = m.eval(&EstState::new(0.0, 0.0, 0.0, 3.0), &Control::zero());
        assert!(aux.g_body[1] < 0.0, "downhill is -y, i.e. to the right");
        assert!((d.v_by - aux.g_body[1]).abs() < 1e-12);
        assert_eq!(d.omega_bz, 0.0);
        let expect = -9.81 * 0.2 / (1.0f64 + 0.04).sqrt();
        assert!((aux.g_body[1] - expect).abs() < 1e-9);
    }

    #[test]
    fn steady_yaw_rate_matches_kinematic_bicycle() {
        let (t, vp, tp) = (
            flat(),
            VehicleParams::<f64>::mrzr_d4(),
            TireParams::simulated(),
        );
        let m = EstModel::new(&t, &vp, &tp);
        let mut s = EstState::new(0.0, 0.0, 0.0, 2.0);
        s.delta = 0.1;
        let seq = ControlSequence::constant(Control::zero(), 12, 0.25).unwrap();
        let tr = integrate(&m, &s, &seq, 0.005, Scheme::Rk4).unwrap();
        let w = tr.last().unwrap().omega_bz;
        let kin = 2.0 * 0.1f64.tan() / vp.wheelbase();
        assert!(((w - kin) / kin).abs() < 0.05, "w={w} kin={kin}");
    }

    #[test]
    fn steering_saturates() {
        let (t, vp, tp) = (
            flat(),
            VehicleParams::<f64>::mrzr_d4(),
            TireParams::simulated(),
        );
        let m = EstModel::new(&t, &vp, &tp);
        let seq = ControlSequence::constant(Control::steer(1.0), 4, 0.25).unwrap();
        let tr = integrate(
            &m,
            &EstState::new(0.0, 0.0, 0.0, 3.0),
            &seq,
            0.005,
            Scheme::Euler,
        )
        .unwrap();
        assert_eq!(tr.last().unwrap().delta, vp.delta_max);
    }
}
