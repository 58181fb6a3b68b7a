//! Rollover metrics, per-wheel distance constraints and the normalized
//! quadratic soft-constraint penalty.

use crate::dynamics::{
    euler_321_from_matrix, load_transfer_coeffs, EstAux, LoadTransfer, VehicleParams,
};
use crate::math::Mat3;
use crate::{Error, Real, Result};

/// Width and scale of a soft constraint: the penalty starts at `π = -epsilon`
/// and reaches `sigma` at `π = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftConstraintParams<T = f64> {
    pub epsilon: T,
    pub sigma: T,
}

impl<T: Real> SoftConstraintParams<T> {
    pub fn new(epsilon: T, sigma: T) -> Result<Self> {
        let p = Self { epsilon, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "constraint epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.sigma > T::zero() && self.sigma.is_finite()) {
            return Err(Error::config(format!(
                "constraint sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// `σ · max(0, 1 + π/ε)²`, in cost per second.
#[inline]
pub fn soft_cost_rate<T: Real>(pi: T, scp: &SoftConstraintParams<T>) -> T {
    let m = (T::one() + pi / scp.epsilon).max(T::zero());
    scp.sigma * m * m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintConfig<T = f64> {
    /// Critical lateral acceleration for tire liftoff, m/s².
    pub a_by_bar: T,
    /// Flat-ground ESM, J; the base of the ESM onset width.
    pub esm_nominal: T,
    pub eps_dist: T,
    pub sigma: T,
    /// Onset width of the rollover constraints as a fraction of their scale.
    pub safety_factor: T,
    pub enable_distance: bool,
    pub enable_rollover: bool,
}

impl<T: Real> ConstraintConfig<T> {
    pub const DEFAULT_A_BY_BAR: f64 = 5.0;
    pub const DEFAULT_EPS_DIST: f64 = 0.25;
    pub const DEFAULT_SIGMA: f64 = 1e6;
    pub const DEFAULT_SAFETY_FACTOR: f64 = 0.1;

    /// Defaults with the ESM normalization taken from `vp`.
    pub fn for_vehicle(vp: &VehicleParams<T>) -> Self {
        Self {
            a_by_bar: T::lit(Self::DEFAULT_A_BY_BAR),
            esm_nominal: esm_normalization(vp),
            eps_dist: T::lit(Self::DEFAULT_EPS_DIST),
            sigma: T::lit(Self::DEFAULT_SIGMA),
            safety_factor: T::lit(Self::DEFAULT_SAFETY_FACTOR),
            enable_distance: true,
            enable_rollover: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "constraints.{name} must be positive, got {v}"
                )))
            }
        };
        positive("a_by_bar", self.a_by_bar)?;
        positive("esm_nominal", self.esm_nominal)?;
        positive("eps_dist", self.eps_dist)?;
        positive("sigma", self.sigma)?;
        positive("safety_factor", self.safety_factor)
    }

    pub fn distance_params(&self) -> SoftConstraintParams<T> {
        SoftConstraintParams {
            epsilon: self.eps_dist,
            sigma: self.sigma,
        }
    }

    pub fn lateral_accel_params(&self) -> SoftConstraintParams<T> {
        SoftConstraintParams {
            epsilon: self.safety_factor * self.a_by_bar,
            sigma: self.sigma,
        }
    }

    pub fn esm_params(&self) -> SoftConstraintParams<T> {
        SoftConstraintParams {
            epsilon: self.safety_factor * self.esm_nominal,
            sigma: self.sigma,
        }
    }
}

impl Default for ConstraintConfig<f64> {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::mrzr_d4())
    }
}

/// Distance `R̄` from a wheel contact edge to the CoM and its elevation
/// angle `φ̄` at rest.
pub fn esm_geometry<T: Real>(vp: &VehicleParams<T>) -> (T, T) {
    let hr = vp.com_height();
    let half_e = vp.track * T::lit(0.5);
    ((hr * hr + half_e * half_e).sqrt(), (hr / half_e).atan())
}

/// Energy stability margin `±Mg R̄ (1 - sin(|φ| + φ̄)) cos θ` for 3-2-1 roll
/// `phi` and pitch `theta`. Negative once the CoM passes over the edge.
#[inline]
pub fn esm<T: Real>(phi: T, theta: T, vp: &VehicleParams<T>) -> T {
    let (r_bar, phi_bar) = esm_geometry(vp);
    let a = phi.abs() + phi_bar;
    let u = vp.mass * vp.g * r_bar * (T::one() - a.sin()) * theta.cos();
    if a > T::FRAC_PI_2() {
        -u
    } else {
        u
    }
}

/// ESM for a body-to-world rotation matrix.
pub fn esm_from_rotation<T: Real>(r: &Mat3<T>, vp: &VehicleParams<T>) -> T {
    let (_, theta, phi) = euler_321_from_matrix(r);
    esm(phi, theta, vp)
}

/// Flat-ground ESM.
pub fn esm_normalization<T: Real>(vp: &VehicleParams<T>) -> T {
    esm(T::zero(), T::zero(), vp)
}

/// `|a_by - g_by| - ā_by`; positive when the liftoff boundary is crossed.
#[inline]
pub fn lateral_accel_violation<T: Real>(a_by: T, g_by: T, cfg: &ConstraintConfig<T>) -> T {
    (a_by - g_by).abs() - cfg.a_by_bar
}

/// Liftoff lateral acceleration from the load transfer relations, `Mg / (2 K_zy)`.
pub fn a_by_bar_formula<T: Real>(vp: &VehicleParams<T>) -> T {
    let lt = load_transfer_coeffs(vp);
    vp.mass * vp.g / (T::lit(2.0) * lt.k_zy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalMu<T = f64> {
    /// `ā_by / g`: the least friction coefficient that can produce liftoff.
    pub threshold: T,
    /// Whether a surface with the given `μ` can violate the constraint.
    pub violable: bool,
}

pub fn critical_mu<T: Real>(cfg: &ConstraintConfig<T>, mu: T, g: T) -> CriticalMu<T> {
    let threshold = cfg.a_by_bar / g;
    CriticalMu {
        threshold,
        violable: mu >= threshold,
    }
}

/// Tire normal forces `[fl, fr, rl, rr]` with the lateral load transfer
/// driven by the gravity-corrected specific force `a_by - g_by`.
pub fn gravity_corrected_normals<T: Real>(
    aux: &EstAux<T>,
    lt: &LoadTransfer<T>,
    mass: T,
) -> [T; 4] {
    let half = T::lit(0.5);
    let g_bz = aux.g_body[2];
    let lateral = lt.k_zy * aux.lateral_specific_force() / (-mass * g_bz);
    let front = -lt.k_zz_f * g_bz - lt.k_zx * aux.a_bx;
    let rear = -lt.k_zz_r * g_bz + lt.k_zx * aux.a_bx;
    [
        front * (half - lateral),
        front * (half + lateral),
        rear * (half - lateral),
        rear * (half + lateral),
    ]
}

/// Liftoff margin in units of the formula threshold: positive while all
/// tires stay loaded (for zero longitudinal acceleration), zero at liftoff.
///
/// On level ground this is `ā_by - |a_by - g_by|` with `ā_by = Mg/(2K_zy)`;
/// on slopes both sides are scaled by `-g_bz / g`.
pub fn liftoff_margin<T: Real>(aux: &EstAux<T>, vp: &VehicleParams<T>) -> T {
    let scale = -aux.g_body[2] / vp.g;
    a_by_bar_formula(vp) - aux.lateral_specific_force().abs() / scale
}

/// World-frame wheel contact positions on the ground plane from the planar
/// footprint `(x, y, psi)`, ordered `[fl, fr, rl, rr]`.
#[inline]
pub fn wheel_footprint<T: Real>(x: T, y: T, psi: T, vp: &VehicleParams<T>) -> [[T; 2]; 4] {
    let (s, c) = psi.sin_cos();
    let half_e = vp.track * T::lit(0.5);
    let offsets = [
        (vp.l_f, half_e),
        (vp.l_f, -half_e),
        (-vp.l_r, half_e),
        (-vp.l_r, -half_e),
    ];
    offsets.map(|(ox, oy)| [x + c * ox - s * oy, y + s * ox + c * oy])
}

/// The model-specific rollover measure entering the constraint set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RolloverMeasure<T = f64> {
    LateralAccel { a_by: T, g_by: T },
    Esm(T),
}

/// Soft-constraint cost rates split by family.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintCost<T = f64> {
    pub distance: T,
    pub rollover: T,
}

impl<T: Real> ConstraintCost<T> {
    pub fn total(&self) -> T {
        self.distance + self.rollover
    }
}

/// Sum of the per-wheel distance penalties (`π = -sdist`) and the rollover
/// penalty.
pub fn constraint_set_cost<T: Real>(
    wheel_sdists: &[T],
    rollover: RolloverMeasure<T>,
    cfg: &ConstraintConfig<T>,
) -> ConstraintCost<T> {
    let mut out = ConstraintCost {
        distance: T::zero(),
        rollover: T::zero(),
    };
    if cfg.enable_distance {
        let p = cfg.distance_params();
        for &d in wheel_sdists {
            if d.is_finite() {
                out.distance = out.distance + soft_cost_rate(-d, &p);
            }
        }
    }
    if cfg.enable_rollover {
        out.rollover = match rollover {
            RolloverMeasure::LateralAccel { a_by, g_by } => soft_cost_rate(
                lateral_accel_violation(a_by, g_by, cfg),
                &cfg.lateral_accel_params(),
            ),
            RolloverMeasure::Esm(u) => soft_cost_rate(-u, &cfg.esm_params()),
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn vp() -> VehicleParams<f64> {
        VehicleParams::mrzr_d4()
    }

    #[test]
    fn flat_ground_esm() {
        let v = vp();
        let (r_bar, phi_bar) = esm_geometry(&v);
        assert!((r_bar - 0.92728).abs() < 1e-4, "{r_bar}");
        assert!((phi_bar - 0.8090).abs() < 1e-3, "{phi_bar}");
        let u = esm(0.0, 0.0, &v);
        let oracle = 969.0 * 9.81 * r_bar * (1.0 - phi_bar.sin());
        assert!((u - oracle).abs() <= 1e-12 * oracle);
        assert!((u - 2.44e3).abs() < 10.0, "{u}");
        assert_eq!(esm_normalization(&v), u);
    }

    #[test]
    fn esm_zero_at_balance_and_negative_beyond() {
        let v = vp();
        let (r_bar, phi_bar) = esm_geometry(&v);
        let u = esm(FRAC_PI_2 - phi_bar, 0.0, &v);
        assert!(u.abs() < 1e-9 * v.mass * v.g * r_bar);
        assert!(esm(FRAC_PI_2 - phi_bar + 0.05, 0.0, &v) < 0.0);
        assert!(esm(FRAC_PI_2 - phi_bar + 0.3, 0.0, &v) < esm(FRAC_PI_2 - phi_bar + 0.05, 0.0, &v));
        assert_eq!(esm(0.3, 0.1, &v), esm(-0.3, 0.1, &v));
    }

    #[test]
    fn esm_scales_with_mass() {
        let mut v = vp();
        let base = esm_normalization(&v);
        v.mass *= 2.0;
        assert!((esm_normalization(&v) - 2.0 * base).abs() < 1e-9 * base);
    }

    #[test]
    fn lateral_violation_values() {
        let cfg = ConstraintConfig::default();
        assert_eq!(lateral_accel_violation(-1.3, -1.3, &cfg), -5.0);
        assert_eq!(lateral_accel_violation(5.0, 0.0, &cfg), 0.0);
        assert_eq!(lateral_accel_violation(-5.0, 0.0, &cfg), 0.0);
        assert_eq!(lateral_accel_violation(6.0, 0.0, &cfg), 1.0);
    }

    #[test]
    fn soft_cost_shape() {
        let p = SoftConstraintParams::new(0.25, 1e6).unwrap();
        assert_eq!(soft_cost_rate(-0.25, &p), 0.0);
        assert_eq!(soft_cost_rate(-3.0, &p), 0.0);
        assert_eq!(soft_cost_rate(0.0, &p), 1e6);
        assert_eq!(soft_cost_rate(0.25, &p), 4e6);
        assert!(SoftConstraintParams::new(0.0, 1.0).is_err());
        assert!(SoftConstraintParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn distance_constraint_values() {
        let cfg = ConstraintConfig::default();
        let far = [f64::INFINITY; 4];
        let none = RolloverMeasure::LateralAccel {
            a_by: 0.0,
            g_by: 0.0,
        };
        assert_eq!(constraint_set_cost(&far, none, &cfg).total(), 0.0);
        let c = constraint_set_cost(&[0.15, 5.0, 5.0, 5.0], none, &cfg);
        assert!((c.distance - 1.6e5).abs() < 1e-6, "{}", c.distance);
        let c = constraint_set_cost(&[0.0, 5.0, 5.0, 5.0], none, &cfg);
        assert_eq!(c.distance, 1e6);
        assert_eq!(c.rollover, 0.0);
    }

    #[test]
    fn rollover_members() {
        let cfg = ConstraintConfig::default();
        let c = constraint_set_cost(
            &[],
            RolloverMeasure::LateralAccel {
                a_by: 5.0,
                g_by: 0.0,
            },
            &cfg,
        );
        assert_eq!(c.rollover, 1e6);
        let c = constraint_set_cost(&[], RolloverMeasure::Esm(cfg.esm_nominal), &cfg);
        assert_eq!(c.rollover, 0.0);
        let c = constraint_set_cost(&[], RolloverMeasure::Esm(0.0), &cfg);
        assert_eq!(c.rollover, 1e6);
        let mut off = cfg;
        off.enable_rollover = false;
        assert_eq!(
            constraint_set_cost(&[], RolloverMeasure::Esm(-1.0), &off).rollover,
            0.0
        );
    }

    #[test]
    fn critical_mu_values() {
        let cfg = ConstraintConfig::default();
        let c = critical_mu(&cfg, 0.4, 9.81);
        assert!((c.threshold - 0.51).abs() < 0.005);
        assert!(!c.violable);
        let mut at = cfg;
        at.a_by_bar = 0.4 * 9.81;
        assert!(critical_mu(&at, 0.4, 9.81).violable);
        let v = vp();
        let formula = a_by_bar_formula(&v);
        assert!((formula - 9.357).abs() < 1e-2, "{formula}");
        assert!((formula / v.g - 0.954).abs() < 1e-3);
    }

    #[test]
    fn footprint_matches_offsets() {
        let v = vp();
        let w = wheel_footprint(1.0, 2.0, FRAC_PI_2, &v);
        assert!((w[0][0] - (1.0 - v.track / 2.0)).abs() < 1e-12);
        assert!((w[0][1] - (2.0 + v.l_f)).abs() < 1e-12);
        assert!((w[3][0] - (1.0 + v.track / 2.0)).abs() < 1e-12);
        assert!((w[3][1] - (2.0 - v.l_r)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ConstraintConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.a_by_bar = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn works_in_f32() {
        let v = VehicleParams::<f32>::mrzr_d4();
        let u = esm(0.0f32, 0.0, &v);
        assert!((u - 2436.0).abs() < 5.0, "{u}");
    }
}
