use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::{Control, ControlSequence};
use crate::{Error, Real, Result};

/// State vector with the linear operations fixed-step schemes need.
pub trait OdeState<T: Real>: Copy {
    /// `self + k * d`
    fn axpy(&self, k: T, d: &Self) -> Self;
    fn is_finite(&self) -> bool;
}

/// A vehicle model: `ξ̇ = A(ξ) + B ζ` plus per-evaluation diagnostics.
pub trait VehicleModel<T: Real> {
    type State: OdeState<T>;
    type Aux: Copy;

    fn derivative(&self, s: &Self::State, u: &Control<T>) -> Result<(Self::State, Self::Aux)>;

    /// Applied after every completed step (actuator saturation).
    fn post_step(&self, s: &mut Self::State);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(Error::config(format!(
                "unknown integration scheme `{other}`"
            ))),
        }
    }
}

/// Advances one step of size `dt`. The returned diagnostics belong to the
/// derivative evaluated at the start state.
#[inline]
pub fn step<T: Real, M: VehicleModel<T>>(
    model: &M,
    s: &M::State,
    u: &Control<T>,
    dt: T,
    scheme: Scheme,
) -> Result<(M::State, M::Aux)> {
    let (k1, aux) = model.derivative(s, u)?;
    let mut next = match scheme {
        Scheme::Euler => s.axpy(dt, &k1),
        Scheme::Rk4 => {
            let half = dt * T::lit(0.5);
            let (k2, _) = model.derivative(&s.axpy(half, &k1), u)?;
            let (k3, _) = model.derivative(&s.axpy(half, &k2), u)?;
            let (k4, _) = model.derivative(&s.axpy(dt, &k3), u)?;
            let sixth = dt / T::lit(6.0);
            s.axpy(sixth, &k1)
                .axpy(sixth * T::lit(2.0), &k2)
                .axpy(sixth * T::lit(2.0), &k3)
                .axpy(sixth, &k4)
        }
    };
    model.post_step(&mut next);
    Ok((next, aux))
}

/// Number of integration steps per hold segment; `dt_int` must divide `dt_zoh`.
pub fn steps_per_segment<T: Real>(dt_zoh: T, dt_int: T) -> Result<usize> {
    if !(dt_int > T::zero()) {
        return Err(Error::config("integration step must be positive"));
    }
    let ratio = (dt_zoh / dt_int).as_f64();
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 {
        return Err(Error::config(format!(
            "integration step {dt_int} does not divide hold duration {dt_zoh}"
        )));
    }
    Ok(n as usize)
}

/// Integrates under a zero-order hold, calling `visit(k, t, state, aux,
/// control)` for every grid state `k = 0..=n` (the last visit uses the last
/// control). `visit` may stop the rollout early with `Break`. Returns the
/// index of the last visited state.
pub fn rollout<T, M, F>(
    model: &M,
    s0: &M::State,
    controls: &ControlSequence<T>,
    dt_int: T,
    scheme: Scheme,
    mut visit: F,
) -> Result<usize>
where
    T: Real,
    M: VehicleModel<T>,
    F: FnMut(usize, T, &M::State, &M::Aux, &Control<T>) -> ControlFlow<()>,
{
    let per_seg = steps_per_segment(controls.dt_zoh, dt_int)?;
    let total = per_seg * controls.len();
    let mut s = *s0;
    for k in 0..total {
        let u = &controls.controls[k / per_seg];
        let t = dt_int * T::from_usize(k).unwrap();
        let (next, aux) = step(model, &s, u, dt_int, scheme)?;
        if visit(k, t, &s, &aux, u).is_break() {
            return Ok(k);
        }
        if !next.is_finite() {
            return Err(Error::Diverged { step: k + 1 });
        }
        s = next;
    }
    let u = controls.controls.last().expect("non-empty sequence");
    let (_, aux) = model.derivative(&s, u)?;
    let _ = visit(total, dt_int * T::from_usize(total).unwrap(), &s, &aux, u);
    Ok(total)
}

/// States at every integration step, starting with `s0`.
pub fn integrate<T: Real, M: VehicleModel<T>>(
    model: &M,
    s0: &M::State,
    controls: &ControlSequence<T>,
    dt_int: T,
    scheme: Scheme,
) -> Result<Vec<M::State>> {
    let per_seg = steps_per_segment(controls.dt_zoh, dt_int)?;
    let total = per_seg * controls.len();
    let mut out = Vec::with_capacity(total + 1);
    if !s0.is_finite() {
        return Err(Error::Diverged { step: 0 });
    }
    out.push(*s0);
    let mut s = *s0;
    for k in 0..total {
        let u = &controls.controls[k / per_seg];
        let (next, _) = step(model, &s, u, dt_int, scheme)?;
        if !next.is_finite() {
            return Err(Error::Diverged { step: k + 1 });
        }
        out.push(next);
        s = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Copy, Debug)]
    struct Scalar(f64);

    impl OdeState<f64> for Scalar {
        fn axpy(&self, k: f64, d: &Self) -> Self {
            Scalar(self.0 + k * d.0)
        }
        fn is_finite(&self) -> bool {
            self.0.is_finite()
        }
    }

    /// ẋ = λ x + u
    struct Linear(f64);

    impl VehicleModel<f64> for Linear {
        type State = Scalar;
        type Aux = ();
        fn derivative(&self, s: &Scalar, u: &Control<f64>) -> Result<(Scalar, ())> {
            Ok((Scalar(self.0 * s.0 + u.delta_rate), ()))
        }
        fn post_step(&self, _: &mut Scalar) {}
    }

    #[test]
    fn divisibility_is_checked() {
        assert_eq!(steps_per_segment(0.25, 0.005).unwrap(), 50);
        assert_eq!(steps_per_segment(0.04, 0.001).unwrap(), 40);
        assert!(steps_per_segment(0.25, 0.003).is_err());
        assert!(steps_per_segment(0.25, 0.0).is_err());
    }

    #[test]
    fn euler_and_rk4_orders() {
        let seq = ControlSequence::constant(Control::zero(), 4, 0.25).unwrap();
        let exact = (-1.0f64).exp();
        let err = |dt: f64, scheme| {
            let tr = integrate(&Linear(-1.0), &Scalar(1.0), &seq, dt, scheme).unwrap();
            (tr.last().unwrap().0 - exact).abs()
        };
        let e1 = err(0.01, Scheme::Euler);
        let e2 = err(0.005, Scheme::Euler);
        assert!((e1 / e2 - 2.0).abs() < 0.05);
        let r1 = err(0.05, Scheme::Rk4);
        let r2 = err(0.025, Scheme::Rk4);
        assert!((r1 / r2 - 16.0).abs() < 1.0, "{}", r1 / r2);
    }

    #[test]
    fn divergence_reports_step() {
        let seq = ControlSequence::constant(Control::zero(), 1, 1.0).unwrap();
        let r = integrate(&Linear(1e6), &Scalar(1e308), &seq, 0.5, Scheme::Euler);
        assert!(matches!(r, Err(Error::Diverged { step: 1 })));
    }

    #[test]
    fn rollout_visits_every_grid_state_and_can_stop() {
        let seq = ControlSequence::constant(Control::steer(1.0), 2, 0.1).unwrap();
        let mut seen = vec![];
        let last = rollout(
            &Linear(0.0),
            &Scalar(0.0),
            &seq,
            0.05,
            Scheme::Euler,
            |k, _, s, _, _| {
                seen.push((k, s.0));
                ControlFlow::Continue(())
            },
        )
        .unwrap();
        assert_eq!(last, 4);
        assert_eq!(seen.len(), 5);
        assert!((seen[4].1 - 0.2).abs() < 1e-12);
        let stop = rollout(
            &Linear(0.0),
            &Scalar(0.0),
            &seq,
            0.05,
            Scheme::Euler,
            |k, _, _, _, _| {
                if k == 2 {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            },
        )
        .unwrap();
        assert_eq!(stop, 2);
    }
}
