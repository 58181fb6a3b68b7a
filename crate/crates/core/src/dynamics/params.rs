use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Inertial, geometric, suspension and steering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>")
)]
pub struct VehicleParams<T = f64> {
    /// Vehicle mass, kg.
    pub mass: T,
    /// Moments of inertia about the body axes, kg·m².
    pub j_xx: T,
    pub j_yy: T,
    pub j_zz: T,
    /// Longitudinal CoM-to-axle distances, m.
    pub l_f: T,
    pub l_r: T,
    /// Wheel track, m.
    pub track: T,
    /// Vertical distance from CoM to the axles, m.
    pub h: T,
    pub tire_radius: T,
    /// Suspension spring rates, N/m.
    pub k_f: T,
    pub k_r: T,
    /// Suspension damping, N·s/m.
    pub b_f: T,
    pub b_r: T,
    pub delta_max: T,
    pub delta_rate_max: T,
    pub g: T,
}

impl<T: Real> VehicleParams<T> {
    /// Polaris MRZR D4 ultra-light off-road vehicle.
    pub fn mrzr_d4() -> Self {
        Self {
            mass: T::lit(969.0),
            j_xx: T::lit(280.9),
            j_yy: T::lit(692.1),
            j_zz: T::lit(810.7),
            l_f: T::lit(1.565),
            l_r: T::lit(1.148),
            track: T::lit(1.280),
            h: T::lit(0.380),
            tire_radius: T::lit(0.291),
            k_f: T::lit(4.2e4),
            k_r: T::lit(5.8e4),
            b_f: T::lit(3.1e3),
            b_r: T::lit(4.3e3),
            delta_max: T::lit(0.639),
            delta_rate_max: T::lit(1.0),
            g: T::lit(9.81),
        }
    }

    pub fn wheelbase(&self) -> T {
        self.l_f + self.l_r
    }

    /// CoM height above the ground plane at rest, `h + R`.
    pub fn com_height(&self) -> T {
        self.h + self.tire_radius
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("mass", self.mass),
            ("j_xx", self.j_xx),
            ("j_yy", self.j_yy),
            ("j_zz", self.j_zz),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("track", self.track),
            ("h", self.h),
            ("tire_radius", self.tire_radius),
            ("k_f", self.k_f),
            ("k_r", self.k_r),
            ("b_f", self.b_f),
            ("b_r", self.b_r),
            ("delta_max", self.delta_max),
            ("delta_rate_max", self.delta_rate_max),
            ("g", self.g),
        ];
        for (name, v) in named {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::config(format!(
                    "vehicle.{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.delta_max < T::FRAC_PI_2()) {
            return Err(Error::config("vehicle.delta_max must be below pi/2"));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> VehicleParams<U> {
        let c = |v: T| U::lit(v.as_f64());
        VehicleParams {
            mass: c(self.mass),
            j_xx: c(self.j_xx),
            j_yy: c(self.j_yy),
            j_zz: c(self.j_zz),
            l_f: c(self.l_f),
            l_r: c(self.l_r),
            track: c(self.track),
            h: c(self.h),
            tire_radius: c(self.tire_radius),
            k_f: c(self.k_f),
            k_r: c(self.k_r),
            b_f: c(self.b_f),
            b_r: c(self.b_r),
            delta_max: c(self.delta_max),
            delta_rate_max: c(self.delta_rate_max),
            g: c(self.g),
        }
    }
}

impl<T: Real> Default for VehicleParams<T> {
    fn default() -> Self {
        Self::mrzr_d4()
    }
}

/// Sigmoid tire model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>")
)]
pub struct TireParams<T = f64> {
    /// Cornering stiffness in the linear region, 1/rad.
    pub c: T,
    /// Friction ceiling on `|F_y / F_z|`.
    pub mu: T,
}

impl<T: Real> TireParams<T> {
    /// Fit used for the simulated trials.
    pub fn simulated() -> Self {
        Self {
            c: T::lit(6.1),
            mu: T::lit(0.6),
        }
    }

    /// Fit used for the physical trials.
    pub fn physical() -> Self {
        Self {
            c: T::lit(1.7),
            mu: T::lit(0.4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > T::zero()) || !self.c.is_finite() {
            return Err(Error::config(format!(
                "tires.c must be positive, got {}",
                self.c
            )));
        }
        if !(self.mu > T::zero() && self.mu <= T::lit(2.0)) {
            return Err(Error::config(format!(
                "tires.mu must lie in (0, 2], got {}",
                self.mu
            )));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> TireParams<U> {
        TireParams {
            c: U::lit(self.c.as_f64()),
            mu: U::lit(self.mu.as_f64()),
        }
    }
}

impl<T: Real> Default for TireParams<T> {
    fn default() -> Self {
        Self::simulated()
    }
}

/// Control input: steering rate and longitudinal velocity rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Control<T = f64> {
    pub delta_rate: T,
    pub v_bx_rate: T,
}

impl<T: Real> Control<T> {
    pub fn new(delta_rate: T, v_bx_rate: T) -> Self {
        Self {
            delta_rate,
            v_bx_rate,
        }
    }

    pub fn steer(delta_rate: T) -> Self {
        Self::new(delta_rate, T::zero())
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }
}

/// Piecewise-constant controls, each held for `dt_zoh` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence<T = f64> {
    pub controls: Vec<Control<T>>,
    pub dt_zoh: T,
}

impl<T: Real> ControlSequence<T> {
    pub fn new(controls: Vec<Control<T>>, dt_zoh: T) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::config("control sequence needs at least one segment"));
        }
        if !(dt_zoh > T::zero()) {
            return Err(Error::config("control hold duration must be positive"));
        }
        Ok(Self { controls, dt_zoh })
    }

    /// `n` copies of one control.
    pub fn constant(u: Control<T>, n: usize, dt_zoh: T) -> Result<Self> {
        Self::new(vec![u; n], dt_zoh)
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn horizon(&self) -> T {
        self.dt_zoh * T::from_usize(self.controls.len()).unwrap()
    }

    pub fn within_bounds(&self, delta_rate_max: T) -> bool {
        self.controls.iter().all(|u| {
            u.delta_rate.abs() <= delta_rate_max
                && u.delta_rate.is_finite()
                && u.v_bx_rate.is_finite()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Est,
    Srb,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Est => "est",
            ModelKind::Srb => "srb",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "est" => Ok(ModelKind::Est),
            "srb" => Ok(ModelKind::Srb),
            other => Err(Error::config(format!(
                "unknown model kind `{other}` (expected est|srb)"
            ))),
        }
    }
}
