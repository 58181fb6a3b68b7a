//! Single rigid body model: a 13-state 3D chassis on four massless wheels
//! with independent linear spring-damper suspension and liftoff.

use super::integrate::{OdeState, VehicleModel};
use super::tire::{load_transfer_coeffs, tire_lateral_force, LoadTransfer};
use super::{
    euler_rates_321, rot_321, Control, EstState, TireOutputs, TireParams, VehicleParams, V_BX_FLOOR,
};
use crate::math::{add, cross, dot, mat_t_vec, mat_vec, Vec3};
use crate::terrain::Heightmap;
use crate::{Real, Result};

/// Wheel order used by every per-wheel array.
pub const WHEELS: [&str; 4] = ["fl", "fr", "rl", "rr"];

/// `[x, y, z, psi, theta, phi, v_bx, v_by, v_bz, omega_bx, omega_by, omega_bz, delta]`
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SrbState<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub psi: T,
    pub theta: T,
    pub phi: T,
    pub v_bx: T,
    pub v_by: T,
    pub v_bz: T,
    pub omega_bx: T,
    pub omega_by: T,
    pub omega_bz: T,
    pub delta: T,
}

impl<T: Real> SrbState<T> {
    pub fn to_array(&self) -> [T; 13] {
        [
            self.x,
            self.y,
            self.z,
            self.psi,
            self.theta,
            self.phi,
            self.v_bx,
            self.v_by,
            self.v_bz,
            self.omega_bx,
            self.omega_by,
            self.omega_bz,
            self.delta,
        ]
    }

    pub fn from_array(a: [T; 13]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            z: a[2],
            psi: a[3],
            theta: a[4],
            phi: a[5],
            v_bx: a[6],
            v_by: a[7],
            v_bz: a[8],
            omega_bx: a[9],
            omega_by: a[10],
            omega_bz: a[11],
            delta: a[12],
        }
    }

    /// Chassis at rest on the local terrain plane under `(x, y)` with the
    /// given heading and forward speed, suspension at its static length.
    pub fn resting_on(
        terrain: &Heightmap<T>,
        vp: &VehicleParams<T>,
        x: T,
        y: T,
        psi: T,
        v_bx: T,
    ) -> Self {
        let n = terrain.normal_at(x, y);
        let (sp, cp) = psi.sin_cos();
        // normal expressed in the yaw-only frame
        let nx = n[0] * cp + n[1] * sp;
        let ny = -n[0] * sp + n[1] * cp;
        let phi = (-ny).max(-T::one()).min(T::one()).asin();
        let theta = nx.atan2(n[2]);
        Self {
            x,
            y,
            z: terrain.height_at(x, y) + vp.com_height() / n[2],
            psi,
            theta,
            phi,
            v_bx,
            ..Default::default()
        }
    }

    pub fn velocity_body(&self) -> Vec3<T> {
        [self.v_bx, self.v_by, self.v_bz]
    }

    pub fn omega_body(&self) -> Vec3<T> {
        [self.omega_bx, self.omega_by, self.omega_bz]
    }

    /// Projection onto the EST state (planar pose, body velocities, steering).
    pub fn to_est(&self) -> EstState<T> {
        EstState {
            x: self.x,
            y: self.y,
            psi: self.psi,
            v_by: self.v_by,
            omega_bz: self.omega_bz,
            delta: self.delta,
            v_bx: self.v_bx,
        }
    }
}

impl<T: Real> OdeState<T> for SrbState<T> {
    #[inline(always)]
    fn axpy(&self, k: T, d: &Self) -> Self {
        Self {
            x: self.x + k * d.x,
            y: self.y + k * d.y,
            z: self.z + k * d.z,
            psi: self.psi + k * d.psi,
            theta: self.theta + k * d.theta,
            phi: self.phi + k * d.phi,
            v_bx: self.v_bx + k * d.v_bx,
            v_by: self.v_by + k * d.v_by,
            v_bz: self.v_bz + k * d.v_bz,
            omega_bx: self.omega_bx + k * d.omega_bx,
            omega_by: self.omega_by + k * d.omega_by,
            omega_bz: self.omega_bz + k * d.omega_bz,
            delta: self.delta + k * d.delta,
        }
    }

    fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Per-evaluation SRB diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrbAux<T = f64> {
    pub g_body: Vec3<T>,
    /// Summed lateral and vertical tire forces, N.
    pub f_y: T,
    pub f_z: T,
    pub moments: Vec3<T>,
    pub tires: TireOutputs<T>,
    /// Nominal static load per wheel.
    pub f_static: [T; 4],
    pub mass: T,
}

impl<T: Real> SrbAux<T> {
    /// `a_by - g_by = F_y / M`.
    pub fn lateral_specific_force(&self) -> T {
        self.f_y / self.mass
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SrbModel<'a, T: Real = f64> {
    pub terrain: &'a Heightmap<T>,
    pub vehicle: &'a VehicleParams<T>,
    pub tire: &'a TireParams<T>,
    load: LoadTransfer<T>,
    /// Wheel offsets from the CoM in the body frame.
    rho: [Vec3<T>; 4],
}

impl<'a, T: Real> SrbModel<'a, T> {
    pub fn new(
        terrain: &'a Heightmap<T>,
        vehicle: &'a VehicleParams<T>,
        tire: &'a TireParams<T>,
    ) -> Self {
        let half_e = vehicle.track * T::lit(0.5);
        let down = -vehicle.com_height();
        Self {
            terrain,
            vehicle,
            tire,
            load: load_transfer_coeffs(vehicle),
            rho: [
                [vehicle.l_f, half_e, down],
                [vehicle.l_f, -half_e, down],
                [-vehicle.l_r, half_e, down],
                [-vehicle.l_r, -half_e, down],
            ],
        }
    }

    pub fn wheel_offsets(&self) -> &[Vec3<T>; 4] {
        &self.rho
    }

    pub fn load_transfer(&self) -> &LoadTransfer<T> {
        &self.load
    }

    /// Nominal static tire loads `g/2 · K_zz,i`.
    pub fn static_loads(&self) -> [T; 4] {
        let half_g = self.vehicle.g * T::lit(0.5);
        let f = half_g * self.load.k_zz_f;
        let r = half_g * self.load.k_zz_r;
        [f, f, r, r]
    }

    pub fn tire_outputs(&self, s: &SrbState<T>, u: &Control<T>) -> Result<TireOutputs<T>> {
        Ok(self.eval(s, u)?.1.tires)
    }

    #[inline]
    pub fn eval(&self, s: &SrbState<T>, u: &Control<T>) -> Result<(SrbState<T>, SrbAux<T>)> {
        let vp = self.vehicle;
        let zero = T::zero();
        let r = rot_321(s.psi, s.theta, s.phi);
        let v_b = s.velocity_body();
        let w_b = s.omega_body();
        let g_body = mat_t_vec(&r, &[zero, zero, -vp.g]);
        let pos = [s.x, s.y, s.z];
        let w_cross_bz = [s.omega_by, -s.omega_bx, zero];
        let f_static = self.static_loads();
        let springs = [vp.k_f, vp.k_f, vp.k_r, vp.k_r];
        let dampers = [vp.b_f, vp.b_f, vp.b_r, vp.b_r];
        let steer = [s.delta, s.delta, zero, zero];
        let v_floor = T::lit(V_BX_FLOOR);
        // rear-axle longitudinal force holding the prescribed speed
        let f_x_rear = vp.mass
            * T::lit(0.5)
            * (u.v_bx_rate - g_body[0] + s.omega_by * s.v_bz - s.omega_bz * s.v_by);

        let mut tires = TireOutputs {
            f_z: [zero; 4],
            f_y: [zero; 4],
            alpha: [zero; 4],
            chi: Some([zero; 4]),
            chi_dot: Some([zero; 4]),
        };
        let mut chi_all = [zero; 4];
        let mut chi_dot_all = [zero; 4];
        let (mut f_y_sum, mut f_z_sum) = (zero, zero);
        let mut moments = [zero; 3];

        for i in 0..4 {
            let rho = &self.rho[i];
            let p_w = add(&pos, &mat_vec(&r, rho));
            let v_i = add(&v_b, &cross(&w_b, rho));

            let ground = self.terrain.height_at(p_w[0], p_w[1]);
            let (fx, fy) = self.terrain.gradient_at(p_w[0], p_w[1]);
            let n_b = mat_t_vec(&r, &[-fx, -fy, T::one()]);

            let (chi, chi_dot, f_z) = if n_b[2] > T::lit(1e-6) {
                let chi = (p_w[2] - ground) / n_b[2];
                let rel = [
                    v_i[0] - chi * w_cross_bz[0],
                    v_i[1] - chi * w_cross_bz[1],
                    v_i[2],
                ];
                let chi_dot = dot(&n_b, &rel) / n_b[2];
                let f_k = (f_static[i] - springs[i] * chi).max(zero);
                let f_b = if f_k > zero {
                    (-dampers[i] * chi_dot).max(-f_k)
                } else {
                    zero
                };
                (chi, chi_dot, f_k + f_b)
            } else {
                // chassis turned away from the ground plane: no contact
                (T::infinity(), zero, zero)
            };

            let alpha = (v_i[1] / v_i[0].max(v_floor)).atan() - steer[i];
            let f_y = tire_lateral_force(alpha, f_z, self.tire);
            let f_y_eff = f_y * steer[i].cos();
            let f_x = if i >= 2 { f_x_rear } else { zero };
            let m_i = cross(rho, &[f_x, f_y_eff, f_z]);
            moments = add(&moments, &m_i);
            f_y_sum = f_y_sum + f_y_eff;
            f_z_sum = f_z_sum + f_z;

            tires.f_z[i] = f_z;
            tires.f_y[i] = f_y;
            tires.alpha[i] = alpha;
            chi_all[i] = chi;
            chi_dot_all[i] = chi_dot;
        }
        tires.chi = Some(chi_all);
        tires.chi_dot = Some(chi_dot_all);

        let v_w = mat_vec(&r, &v_b);
        let [psi_dot, theta_dot, phi_dot] = euler_rates_321(&w_b, s.theta, s.phi)?;
        let m = vp.mass;
        let [wx, wy, wz] = w_b;
        let d = SrbState {
            x: v_w[0],
            y: v_w[1],
            z: v_w[2],
            psi: psi_dot,
            theta: theta_dot,
            phi: phi_dot,
            v_bx: u.v_bx_rate,
            v_by: f_y_sum / m + g_body[1] + wx * s.v_bz - wz * s.v_bx,
            v_bz: f_z_sum / m + g_body[2] - wx * s.v_by + wy * s.v_bx,
            omega_bx: (moments[0] + (vp.j_yy - vp.j_zz) * wy * wz) / vp.j_xx,
            omega_by: (moments[1] - (vp.j_xx - vp.j_zz) * wx * wz) / vp.j_yy,
            omega_bz: (moments[2] + (vp.j_xx - vp.j_yy) * wx * wy) / vp.j_zz,
            delta: u.delta_rate,
        };
        let aux = SrbAux {
            g_body,
            f_y: f_y_sum,
            f_z: f_z_sum,
            moments,
            tires,
            f_static,
            mass: m,
        };
        Ok((d, aux))
    }
}

impl<T: Real> VehicleModel<T> for SrbModel<'_, T> {
    type State = SrbState<T>;
    type Aux = SrbAux<T>;

    #[inline]
    fn derivative(&self, s: &SrbState<T>, u: &Control<T>) -> Result<(SrbState<T>, SrbAux<T>)> {
        self.eval(s, u)
    }

    #[inline]
    fn post_step(&self, s: &mut SrbState<T>) {
        s.delta = s
            .delta
            .max(-self.vehicle.delta_max)
            .min(self.vehicle.delta_max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::GridSpec;
    use crate::Error;

    fn flat() -> Heightmap<f64> {
        Heightmap::flat(
            GridSpec::<f64>::new(-20.0, -20.0, 0.25, 161, 161).unwrap(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn static_equilibrium_on_flat_ground() {
        let (t, vp, tp) = (
            flat(),
            VehicleParams::<f64>::mrzr_d4(),
            TireParams::simulated(),
        );
        let m = SrbModel::new(&t, &vp, &tp);
        let s = SrbState::resting_on(&t, &vp, 0.0, 0.0, 0.4, 0.0);
        let (d, aux) = m.eval(&s, &Control::zero()).unwrap();
        let norm: f64 = d.to_array().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "{d:?}");
        assert!((aux.f_z - 969.0 * 9.81).abs() < 1e-9);
    }

    #[test]
    fn static_loads_sum_to_weight() {
        let (t, vp, tp) = (
            flat(),
            VehicleParams::<f64>::mrzr_d4(),
            TireParams::simulated(),
        );
        let m = SrbModel::new(&t, &vp, &tp);
        let total: f64 = m.static_loads().iter().sum();
        assert!((total - vp.mass * vp.g).abs() <= 1e-9 * vp.mass * vp.g);
    }

    #[test]
    fn airborne_wheel_carries_no_load() {
        let (t, vp, tp) = (
            flat(),
            VehicleParams::<f64>::mrzr_d4(),
            TireParams::simulated(),
        );
        let m = SrbModel::new(&t, &vp, &tp);
        let mut s = SrbState::resting_on(&t, &vp, 0.0, 0.0, 0.0, 5.0);
        s.phi = 0.3; // left side up
        s.v_by = 1.0;
        let out = m.tire_outputs(&s, &Control::zero()).unwrap();
        assert_eq!(out.f_z[0], 0.0);
        assert_eq!(out.f_y[0], 0.0);
        assert_eq!(out.f_z[2], 0.0);
        assert!(out.f_z[1] > 0.0);
    }

    #[test]
    fn gimbal_lock_is_refused() {
        let (t, vp, tp) = (
            flat(),
            VehicleParams::<f64>::mrzr_d4(),
            TireParams::simulated(),
        );
        let m = SrbModel::new(&t, &vp, &tp);
        let mut s = SrbState::resting_on(&t, &vp, 0.0, 0.0, 0.0, 5.0);
        s.theta = std::f64::consts::FRAC_PI_2;
        assert!(matches!(
            m.eval(&s, &Control::zero()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rests_on_sloped_plane_without_deflection() {
        let spec = GridSpec::<f64>::new(-20.0, -20.0, 0.25, 161, 161).unwrap();
        let t = Heightmap::from_fn(spec, |x, y| 0.15 * x - 0.1 * y).unwrap();
        let (vp, tp) = (VehicleParams::<f64>::mrzr_d4(), TireParams::simulated());
        let m = SrbModel::new(&t, &vp, &tp);
        let s = SrbState::resting_on(&t, &vp, 1.0, -2.0, 0.7, 0.0);
        let out = m.tire_outputs(&s, &Control::zero()).unwrap();
        for chi in out.chi.unwrap() {
            assert!(chi.abs() < 1e-9, "{chi}");
        }
    }
}
