//! Plant abstraction and fixed-step time stepping.

use crate::dls::ControlJacobian;
use crate::error::{Error, Result};

/// Any state entry whose magnitude exceeds this is treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e9;

/// Positions, velocities and time of the plant at one sample instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl SystemState {
    pub fn new(x: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::config(format!(
                "state has {} positions but {} velocities",
                x.len(),
                v.len()
            )));
        }
        if !x.iter().chain(&v).chain(std::iter::once(&t)).all(|e| e.is_finite()) {
            return Err(Error::config("state has non-finite entries"));
        }
        Ok(Self { x, v, t })
    }

    pub fn dimension(&self) -> usize {
        self.x.len()
    }

    fn check_bounded(&self) -> Result<()> {
        let ok = self
            .x
            .iter()
            .chain(&self.v)
            .all(|e| e.is_finite() && e.abs() <= DIVERGENCE_BOUND);
        if ok {
            Ok(())
        } else {
            Err(Error::Divergence { step: None, time: self.t })
        }
    }
}

/// Fixed sampling interval `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StepSize(f64);

impl StepSize {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Self(h))
        } else {
            Err(Error::config(format!("step size must be positive and finite, got {h}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Second-order plant `ẍ = f(x, ẋ, t, u)`.
pub trait PlantModel {
    /// Number of position coordinates `n`.
    fn dimension(&self) -> usize;

    /// Number of control inputs `m`.
    fn control_dimension(&self) -> usize;

    /// Acceleration `f(x, v, t, u)`, length `n`.
    fn rhs(&self, state: &SystemState, u: &[f64]) -> Vec<f64>;

    /// `∂f/∂u`, `n × m`.
    fn control_jacobian(&self, state: &SystemState, u: &[f64]) -> ControlJacobian;
}

fn check_inputs<P: PlantModel + ?Sized>(state: &SystemState, model: &P, u: &[f64]) -> Result<()> {
    if state.dimension() != model.dimension() {
        return Err(Error::config(format!(
            "state dimension {} does not match plant dimension {}",
            state.dimension(),
            model.dimension()
        )));
    }
    if u.len() != model.control_dimension() {
        return Err(Error::config(format!(
            "control has {} entries, plant expects {}",
            u.len(),
            model.control_dimension()
        )));
    }
    Ok(())
}

/// Explicit Euler: `x' = x + h v`, `v' = v + h f(x, v, t, u)`, both from the old state.
pub fn euler_step<P: PlantModel + ?Sized>(
    state: &SystemState,
    model: &P,
    u: &[f64],
    h: StepSize,
) -> Result<SystemState> {
    check_inputs(state, model, u)?;
    let h = h.get();
    let f = model.rhs(state, u);
    let next = SystemState {
        x: state.x.iter().zip(&state.v).map(|(x, v)| x + h * v).collect(),
        v: state.v.iter().zip(&f).map(|(v, a)| v + h * a).collect(),
        t: state.t + h,
    };
    next.check_bounded()?;
    Ok(next)
}

/// Reference integrators for verification. Nothing on the control-loop path uses these.
pub mod oracle {
    use super::*;

    /// Classical fourth-order Runge–Kutta step with the control held fixed.
    pub fn rk4_step<P: PlantModel + ?Sized>(
        state: &SystemState,
        model: &P,
        u: &[f64],
        h: StepSize,
    ) -> Result<SystemState> {
        check_inputs(state, model, u)?;
        let h = h.get();
        let offset = |base: &SystemState, dx: &[f64], dv: &[f64], scale: f64| SystemState {
            x: base.x.iter().zip(dx).map(|(x, d)| x + scale * d).collect(),
            v: base.v.iter().zip(dv).map(|(v, d)| v + scale * d).collect(),
            t: base.t + scale,
        };

        let k1x = state.v.clone();
        let k1v = model.rhs(state, u);
        let s2 = offset(state, &k1x, &k1v, 0.5 * h);
        let k2x = s2.v.clone();
        let k2v = model.rhs(&s2, u);
        let s3 = offset(state, &k2x, &k2v, 0.5 * h);
        let k3x = s3.v.clone();
        let k3v = model.rhs(&s3, u);
        let s4 = offset(state, &k3x, &k3v, h);
        let k4x = s4.v.clone();
        let k4v = model.rhs(&s4, u);

        let combine = |y: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
            (0..y.len())
                .map(|i| y[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                .collect()
        };
        let next = SystemState {
            x: combine(&state.x, &k1x, &k2x, &k3x, &k4x),
            v: combine(&state.v, &k1v, &k2v, &k3v, &k4v),
            t: state.t + h,
        };
        next.check_bounded()?;
        Ok(next)
    }
}
