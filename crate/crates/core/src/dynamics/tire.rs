use super::{TireParams, VehicleParams};
use crate::Real;

/// Lateral tire force from the sigmoid model
/// `F_y / F_z = -C α μ / sqrt(μ² + (C α)²)`.
///
/// Odd in `alpha` and bounded strictly by `μ F_z` for finite slip.
#[inline]
pub fn tire_lateral_force<T: Real>(alpha: T, f_z: T, tp: &TireParams<T>) -> T {
    let ca = tp.c * alpha;
    f_z * (-ca * tp.mu) / (tp.mu * tp.mu + ca * ca).sqrt()
}

/// Front-vertical, rear-vertical, longitudinal and lateral load transfer
/// coefficients, all in kg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadTransfer<T = f64> {
    pub k_zz_f: T,
    pub k_zz_r: T,
    pub k_zx: T,
    pub k_zy: T,
}

pub fn load_transfer_coeffs<T: Real>(vp: &VehicleParams<T>) -> LoadTransfer<T> {
    let l = vp.wheelbase();
    LoadTransfer {
        k_zz_f: vp.mass * vp.l_r / l,
        k_zz_r: vp.mass * vp.l_f / l,
        k_zx: vp.mass * vp.com_height() / l,
        k_zy: vp.mass * vp.com_height() / vp.track,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_slip_zero_force() {
        let tp = TireParams::<f64>::simulated();
        assert_eq!(tire_lateral_force(0.0, 1234.0, &tp), 0.0);
    }

    #[test]
    fn closed_form_value() {
        // -1000 * 0.61 * 0.6 / sqrt(0.36 + 0.3721), evaluated directly
        let tp = TireParams::<f64>::simulated();
        let f = tire_lateral_force(0.1, 1000.0, &tp);
        assert!((f - (-427.755_775_431_301_5)).abs() < 1e-9, "{f}");
    }

    #[test]
    fn saturates_at_friction_limit() {
        let tp = TireParams::<f64>::simulated();
        let f = tire_lateral_force(10.0, 1000.0, &tp);
        assert!((f.abs() - 600.0).abs() / 600.0 < 0.005);
        assert!(f.abs() < 600.0);
        assert_eq!(tire_lateral_force(-10.0, 1000.0, &tp), -f);
    }

    #[test]
    fn mrzr_load_transfer() {
        let lt = load_transfer_coeffs(&VehicleParams::<f64>::mrzr_d4());
        assert!((lt.k_zz_f - 410.03).abs() < 0.01, "{}", lt.k_zz_f);
        assert!((lt.k_zy - 507.97).abs() < 0.01, "{}", lt.k_zy);
        assert!((lt.k_zz_f + lt.k_zz_r - 969.0).abs() < 1e-9);
    }
}
