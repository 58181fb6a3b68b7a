use crate::math::{Mat3, Vec3};
use crate::{Error, Real, Result};

/// Distance from ±π/2 pitch inside which 3-2-1 Euler rates are refused.
pub const GIMBAL_MARGIN: f64 = 1e-3;

/// Body-to-world rotation for 1-2-3 Euler angles: roll `phi` about `w_x`,
/// then pitch `theta` about the new `y`, then yaw `psi` about `b_z`.
#[inline]
pub fn rot_123<T: Real>(phi: T, theta: T, psi: T) -> Mat3<T> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    [
        [ct * cp, -ct * sp, st],
        [cf * sp + cp * sf * st, cf * cp - sf * st * sp, -ct * sf],
        [sf * sp - cf * cp * st, cp * sf + cf * st * sp, cf * ct],
    ]
}

/// Body-to-world rotation for 3-2-1 Euler angles: yaw `psi` about `w_z`,
/// then pitch `theta` about the new `y`, then roll `phi` about `b_x`.
#[inline]
pub fn rot_321<T: Real>(psi: T, theta: T, phi: T) -> Mat3<T> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    [
        [cp * ct, cp * sf * st - cf * sp, sf * sp + cf * cp * st],
        [ct * sp, cf * cp + sf * sp * st, cf * sp * st - cp * sf],
        [-st, ct * sf, cf * ct],
    ]
}

/// 3-2-1 Euler angle rates `(psi_dot, theta_dot, phi_dot)` from body-frame
/// angular velocity. Fails within [`GIMBAL_MARGIN`] of ±π/2 pitch.
#[inline]
pub fn euler_rates_321<T: Real>(omega: &Vec3<T>, theta: T, phi: T) -> Result<Vec3<T>> {
    if !(theta.abs() < T::FRAC_PI_2() - T::lit(GIMBAL_MARGIN)) {
        return Err(Error::Domain(format!(
            "pitch {theta} too close to gimbal lock"
        )));
    }
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let [wx, wy, wz] = *omega;
    Ok([
        (sf * wy + cf * wz) / ct,
        cf * wy - sf * wz,
        wx + (sf * st * wy + cf * st * wz) / ct,
    ])
}

/// Recovers `(psi, theta, phi)` such that `rot_321(psi, theta, phi) == m`.
pub fn euler_321_from_matrix<T: Real>(m: &Mat3<T>) -> (T, T, T) {
    let s = (-m[2][0]).max(-T::one()).min(T::one());
    (m[1][0].atan2(m[0][0]), s.asin(), m[2][1].atan2(m[2][2]))
}
