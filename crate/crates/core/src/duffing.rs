//! Two linearly coupled unit-mass Duffing oscillators with the damping ratio
//! `u` of the second oscillator as the control input:
//!
//! ```text
//! v̇₁ = −2ζΩv₁ − Ω²x₁ + ε(Ω²x₂ − αx₁³)
//! v̇₂ = −2uΩv₂ − Ω²x₂ + ε(Ω²x₁ − αx₂³)
//! ```
//!
//! The controller drives the second oscillator's acceleration toward a target
//! `ẍ₂*(t)` using the scalar damped least-squares update
//!
//! ```text
//! u_{k+1} = u_k − [(f₂ − ẍ₂*)·∂f₂/∂u + λb] / [(∂f₂/∂u)² + λ]
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::config::SimulationConfig;
use crate::dls::{compute_error, dls_solve, ControlJacobian, DlsWeights};
use crate::dynamics::{euler_step, PlantModel, SystemState, DIVERGENCE_BOUND};
use crate::error::{Error, Result};
use crate::trajectory::{Trajectory, TrajectoryRow};

/// Below this the update denominator `(∂f₂/∂u)² + λ` is treated as zero and the
/// control is held.
pub const DENOM_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuffingParams {
    /// Linear natural frequency `Ω = √(γ + K)`.
    pub omega: f64,
    /// Coupling ratio `ε = γ / (γ + K)`.
    pub epsilon: f64,
    /// Cubic stiffness.
    pub alpha: f64,
    /// Damping ratio of the first oscillator.
    pub zeta: f64,
}

impl DuffingParams {
    pub fn new(omega: f64, epsilon: f64, alpha: f64, zeta: f64) -> Result<Self> {
        let p = Self {
            omega,
            epsilon,
            alpha,
            zeta,
        };
        p.validate()?;
        Ok(p)
    }

    /// From the oscillators' linear stiffness `K` and the coupling spring stiffness `γ`.
    pub fn from_stiffness(k: f64, gamma: f64, alpha: f64, zeta: f64) -> Result<Self> {
        let total = k + gamma;
        if !(total > 0.0) {
            return Err(Error::config("K + γ must be positive"));
        }
        Self::new(total.sqrt(), gamma / total, alpha, zeta)
    }

    /// `Ω = 1`, `ε = 0.1`, `α = 1.5`, `ζ = 0.025`: the beat experiment parameters.
    pub fn reference() -> Self {
        Self {
            omega: 1.0,
            epsilon: 0.1,
            alpha: 1.5,
            zeta: 0.025,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::config(format!("Ω must be positive, got {}", self.omega)));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::config(format!("ε must lie in [0, 1), got {}", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("α must be positive, got {}", self.alpha)));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::config(format!("ζ must be nonnegative, got {}", self.zeta)));
        }
        Ok(())
    }

    /// Period `2π/Ω` of the uncoupled linear oscillators.
    pub fn linear_period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// Target acceleration `ẍ₂*(t)` for the second oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetAccel {
    Constant(f64),
    /// `amplitude · sin(frequency · t)`
    Sine { amplitude: f64, frequency: f64 },
}

impl Default for TargetAccel {
    fn default() -> Self {
        TargetAccel::Constant(0.0)
    }
}

impl TargetAccel {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TargetAccel::Constant(c) => c,
            TargetAccel::Sine {
                amplitude,
                frequency,
            } => amplitude * (frequency * t).sin(),
        }
    }
}

impl fmt::Display for TargetAccel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetAccel::Constant(c) => write!(f, "{c:?}"),
            TargetAccel::Sine {
                amplitude,
                frequency,
            } => write!(f, "sine:{amplitude:?}:{frequency:?}"),
        }
    }
}

impl FromStr for TargetAccel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid target acceleration `{s}`"));
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("sine:") {
            let (a, w) = rest.split_once(':').ok_or_else(bad)?;
            Ok(TargetAccel::Sine {
                amplitude: a.trim().parse().map_err(|_| bad())?,
                frequency: w.trim().parse().map_err(|_| bad())?,
            })
        } else {
            s.parse().map(TargetAccel::Constant).map_err(|_| bad())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuffingControlConfig {
    /// Damping constant of the least-squares update (not a physical damping).
    pub lambda: f64,
    pub b: f64,
    pub u0: f64,
    pub target: TargetAccel,
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
}

impl DuffingControlConfig {
    pub fn new(lambda: f64, u0: f64) -> Result<Self> {
        let cfg = Self {
            lambda,
            b: 0.0,
            u0,
            target: TargetAccel::default(),
            u_min: None,
            u_max: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_bias(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    pub fn with_target(mut self, target: TargetAccel) -> Self {
        self.target = target;
        self
    }

    pub fn with_bounds(mut self, u_min: Option<f64>, u_max: Option<f64>) -> Result<Self> {
        self.u_min = u_min;
        self.u_max = u_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("λ must be nonnegative, got {}", self.lambda)));
        }
        if !self.b.is_finite() || !self.u0.is_finite() {
            return Err(Error::config("b and u0 must be finite"));
        }
        if let (Some(lo), Some(hi)) = (self.u_min, self.u_max) {
            if lo > hi {
                return Err(Error::config(format!("u_min {lo} exceeds u_max {hi}")));
            }
        }
        if self.u_min.is_some_and(|lo| self.u0 < lo) || self.u_max.is_some_and(|hi| self.u0 > hi) {
            return Err(Error::config("u0 lies outside [u_min, u_max]"));
        }
        Ok(())
    }

    fn clamp(&self, u: f64) -> f64 {
        let u = self.u_min.map_or(u, |lo| u.max(lo));
        self.u_max.map_or(u, |hi| u.min(hi))
    }
}

/// What the controller saw and did at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDiagnostics {
    pub u: f64,
    /// Applied increment `u_{k+1} − u_k`, after clamping.
    pub delta_u: f64,
    pub f2: f64,
    /// `∂f₂/∂u = −2Ωv₂`.
    pub jacobian: f64,
    /// `(∂f₂/∂u)² + λ`.
    pub denominator: f64,
    /// The denominator fell below [`DENOM_FLOOR`] and the control was held.
    pub fallback: bool,
    pub clamped: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerTrace {
    pub steps: Vec<ControlDiagnostics>,
}

impl ControllerTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn fallback_count(&self) -> usize {
        self.steps.iter().filter(|d| d.fallback).count()
    }
}

/// The coupled pair as a [`PlantModel`] with one control input.
#[derive(Debug, Clone, Copy)]
pub struct DuffingPlant {
    pub params: DuffingParams,
}

impl PlantModel for DuffingPlant {
    fn dimension(&self) -> usize {
        2
    }

    fn control_dimension(&self) -> usize {
        1
    }

    fn rhs(&self, s: &SystemState, u: &[f64]) -> Vec<f64> {
        let (f1, f2) = accelerations(s.x[0], s.x[1], s.v[0], s.v[1], u[0], &self.params);
        vec![f1, f2]
    }

    fn control_jacobian(&self, s: &SystemState, _u: &[f64]) -> ControlJacobian {
        ControlJacobian::from_row_slice(2, 1, &[0.0, -2.0 * self.params.omega * s.v[1]])
            .expect("finite state gives a finite Jacobian")
    }
}

#[inline]
fn accelerations(x1: f64, x2: f64, v1: f64, v2: f64, u: f64, p: &DuffingParams) -> (f64, f64) {
    let w2 = p.omega * p.omega;
    let f1 = -2.0 * p.zeta * p.omega * v1 - w2 * x1 + p.epsilon * (w2 * x2 - p.alpha * x1 * x1 * x1);
    let f2 = -2.0 * u * p.omega * v2 - w2 * x2 + p.epsilon * (w2 * x1 - p.alpha * x2 * x2 * x2);
    (f1, f2)
}

fn check_state(state: &SystemState) -> Result<()> {
    if state.dimension() != 2 {
        return Err(Error::config(format!(
            "Duffing pair needs a 2-dimensional state, got {}",
            state.dimension()
        )));
    }
    Ok(())
}

pub fn duffing_rhs(state: &SystemState, u: f64, p: &DuffingParams) -> Result<(f64, f64)> {
    check_state(state)?;
    if !u.is_finite() {
        return Err(Error::config("control is not finite"));
    }
    Ok(accelerations(state.x[0], state.x[1], state.v[0], state.v[1], u, p))
}

/// `∂f₂/∂u = −2Ωv₂`; `f₁` does not depend on the control.
pub fn duffing_control_jacobian(state: &SystemState, p: &DuffingParams) -> Result<f64> {
    check_state(state)?;
    Ok(-2.0 * p.omega * state.v[1])
}

/// First integral of the pair with all dissipation removed (`ζ = u = 0`):
/// `½|v|² + ½Ω²|x|² − εΩ²x₁x₂ + ¼εα(x₁⁴ + x₂⁴)`.
pub fn conserved_energy(state: &SystemState, p: &DuffingParams) -> f64 {
    let (x1, x2, v1, v2) = (state.x[0], state.x[1], state.v[0], state.v[1]);
    let w2 = p.omega * p.omega;
    0.5 * (v1 * v1 + v2 * v2) + 0.5 * w2 * (x1 * x1 + x2 * x2) - p.epsilon * w2 * x1 * x2
        + 0.25 * p.epsilon * p.alpha * (x1.powi(4) + x2.powi(4))
}

/// Closed-form scalar damped least-squares update of the second oscillator's damping ratio.
pub fn control_update(
    state: &SystemState,
    u_k: f64,
    p: &DuffingParams,
    cfg: &DuffingControlConfig,
) -> Result<(f64, ControlDiagnostics)> {
    let (_, f2) = duffing_rhs(state, u_k, p)?;
    let jacobian = -2.0 * p.omega * state.v[1];
    let denominator = jacobian * jacobian + cfg.lambda;
    let target = cfg.target.eval(state.t);

    if denominator < DENOM_FLOOR {
        return Ok((
            u_k,
            ControlDiagnostics {
                u: u_k,
                delta_u: 0.0,
                f2,
                jacobian,
                denominator,
                fallback: true,
                clamped: false,
            },
        ));
    }

    let raw = u_k - ((f2 - target) * jacobian + cfg.lambda * cfg.b) / denominator;
    let u_next = cfg.clamp(raw);
    Ok((
        u_next,
        ControlDiagnostics {
            u: u_k,
            delta_u: u_next - u_k,
            f2,
            jacobian,
            denominator,
            fallback: false,
            clamped: u_next != raw,
        },
    ))
}

/// The same update routed through the general solver with `W = diag(0, 1)`,
/// `Λ = λ`, `C = 1`, `B = b`. Ignores the clamp bounds.
pub fn control_update_via_dls(
    state: &SystemState,
    u_k: f64,
    p: &DuffingParams,
    cfg: &DuffingControlConfig,
) -> Result<f64> {
    let plant = DuffingPlant { params: *p };
    check_state(state)?;
    let f = plant.rhs(state, &[u_k]);
    let target = [0.0, cfg.target.eval(state.t)];
    let e = compute_error(&target, &f)?;
    let a = plant.control_jacobian(state, &[u_k]);
    let w = DlsWeights::scalar(&[0.0, 1.0], cfg.lambda, cfg.b)?;
    let du = dls_solve(&e, &a, &w)?;
    Ok(u_k + du.as_vector()[0])
}

/// Runs the closed loop over `[t0, t_end]`, recording every step.
///
/// At step `k` both `u_{k+1}` and the next plant state are computed from the
/// step-`k` state and `u_k`; the new control first acts at step `k + 1`.
pub fn simulate(cfg: &SimulationConfig) -> Result<(Trajectory, ControllerTrace)> {
    cfg.validate()?;
    let plant = DuffingPlant { params: cfg.params };
    let steps = cfg.step_count();
    let h = cfg.h;
    let t0 = cfg.initial.t;

    let mut traj = Trajectory::with_capacity(steps + 1);
    let mut trace = ControllerTrace {
        steps: Vec::with_capacity(steps + 1),
    };
    let mut state = cfg.initial.clone();
    let mut u = cfg.control.u0;

    for k in 0..=steps {
        let (u_next, diag) = if cfg.control_enabled {
            control_update(&state, u, &cfg.params, &cfg.control)?
        } else {
            (u, held_control(&state, u, &cfg.params, &cfg.control))
        };
        traj.push(TrajectoryRow {
            t: state.t,
            x1: state.x[0],
            x2: state.x[1],
            v1: state.v[0],
            v2: state.v[1],
            u,
            f2: diag.f2,
            du: diag.delta_u,
        });
        trace.steps.push(diag);
        if k == steps {
            break;
        }

        let mut next = euler_step(&state, &plant, &[u], h).map_err(|e| e.at_step(k + 1))?;
        next.t = t0 + (k + 1) as f64 * h.get();
        if !(u_next.is_finite() && u_next.abs() <= DIVERGENCE_BOUND) {
            return Err(Error::Divergence {
                step: Some(k + 1),
                time: next.t,
            });
        }
        state = next;
        u = u_next;
    }
    Ok((traj, trace))
}

fn held_control(state: &SystemState, u: f64, p: &DuffingParams, cfg: &DuffingControlConfig) -> ControlDiagnostics {
    let (_, f2) = accelerations(state.x[0], state.x[1], state.v[0], state.v[1], u, p);
    let jacobian = -2.0 * p.omega * state.v[1];
    ControlDiagnostics {
        u,
        delta_u: 0.0,
        f2,
        jacobian,
        denominator: jacobian * jacobian + cfg.lambda,
        fallback: false,
        clamped: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::StepSize;

    fn state(x1: f64, x2: f64, v1: f64, v2: f64) -> SystemState {
        SystemState::new(vec![x1, x2], vec![v1, v2], 0.0).unwrap()
    }

    #[test]
    fn rhs_at_equilibrium_is_zero() {
        let p = DuffingParams::reference();
        for u in [-1.0, 0.0, 0.025, 3.0] {
            assert_eq!(duffing_rhs(&state(0.0, 0.0, 0.0, 0.0), u, &p).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn rhs_at_experiment_initial_condition() {
        // f₁ = −1 + 0.1(0.1 − 1.5) = −1.14,  f₂ = −0.1 + 0.1(1 − 1.5·0.001) = −0.00015
        let (f1, f2) = duffing_rhs(&state(1.0, 0.1, 0.0, 0.0), 0.025, &DuffingParams::reference()).unwrap();
        assert!((f1 + 1.14).abs() < 1e-14, "{f1}");
        assert!((f2 + 0.00015).abs() < 1e-14, "{f2}");
    }

    #[test]
    fn zero_coupling_decouples() {
        let p = DuffingParams::new(1.3, 0.0, 1.5, 0.05).unwrap();
        let (a1, a2) = duffing_rhs(&state(0.4, -0.2, 0.1, 0.3), 0.2, &p).unwrap();
        let (b1, _) = duffing_rhs(&state(0.4, 0.9, 0.1, 0.3), 0.2, &p).unwrap();
        let (_, b2) = duffing_rhs(&state(-0.7, -0.2, 0.1, 0.3), 0.2, &p).unwrap();
        assert_eq!(a1, b1);
        assert_eq!(a2, b2);
    }

    #[test]
    fn control_jacobian_examples() {
        let p = DuffingParams::reference();
        assert_eq!(duffing_control_jacobian(&state(0.3, 0.1, 0.2, 0.0), &p).unwrap(), 0.0);
        assert_eq!(duffing_control_jacobian(&state(0.0, 0.0, 0.0, 0.5), &p).unwrap(), -1.0);

        let s = state(0.8, -0.3, 0.2, 0.45);
        let d = 1e-6;
        let fd = (duffing_rhs(&s, 0.3 + d, &p).unwrap().1 - duffing_rhs(&s, 0.3 - d, &p).unwrap().1) / (2.0 * d);
        assert!((fd - duffing_control_jacobian(&s, &p).unwrap()).abs() < 1e-8);
        assert!(duffing_control_jacobian(&SystemState::new(vec![0.0], vec![0.0], 0.0).unwrap(), &p).is_err());
    }

    #[test]
    fn from_stiffness_maps_to_frequency_and_coupling() {
        let p = DuffingParams::from_stiffness(0.9, 0.1, 1.5, 0.025).unwrap();
        assert!((p.omega - 1.0).abs() < 1e-15);
        assert!((p.epsilon - 0.1).abs() < 1e-15);
        assert!(DuffingParams::new(1.0, 1.0, 1.5, 0.0).is_err());
        assert!(DuffingParams::new(0.0, 0.1, 1.5, 0.0).is_err());
        assert!(DuffingParams::new(1.0, 0.1, -1.0, 0.0).is_err());
        assert!(DuffingParams::new(1.0, 0.1, 1.5, -0.1).is_err());
    }

    #[test]
    fn zero_velocity_leaves_control_unchanged() {
        let p = DuffingParams::reference();
        let cfg = DuffingControlConfig::new(1.0, 0.025).unwrap();
        let (u, diag) = control_update(&state(1.0, 0.1, 0.3, 0.0), 0.025, &p, &cfg).unwrap();
        assert_eq!(u, 0.025);
        assert!(!diag.fallback);
    }

    #[test]
    fn degenerate_denominator_falls_back() {
        let p = DuffingParams::reference();
        let cfg = DuffingControlConfig::new(0.0, 0.025).unwrap();
        let (u, diag) = control_update(&state(1.0, 0.1, 0.3, 0.0), 0.025, &p, &cfg).unwrap();
        assert_eq!(u, 0.025);
        assert!(diag.fallback);
        assert_eq!(diag.delta_u, 0.0);
    }

    #[test]
    fn closed_form_matches_general_solver() {
        let p = DuffingParams::reference();
        let s = state(1.0, 0.1, 0.0, -0.2);
        let cfg = DuffingControlConfig::new(1.0, 0.025).unwrap();
        let (closed, _) = control_update(&s, 0.025, &p, &cfg).unwrap();
        let generic = control_update_via_dls(&s, 0.025, &p, &cfg).unwrap();
        assert!((closed - generic).abs() <= 1e-12 * closed.abs());

        // Expanded form with ẍ₂* = 0, b = 0: u + 2Ωv₂f₂ / (4Ω²v₂² + λ)
        let (_, f2) = duffing_rhs(&s, 0.025, &p).unwrap();
        let v2 = -0.2;
        let explicit = 0.025 + 2.0 * v2 * f2 / (4.0 * v2 * v2 + 1.0);
        assert!((closed - explicit).abs() < 1e-16);
    }

    #[test]
    fn clamping_bounds_the_control() {
        let p = DuffingParams::reference();
        let s = state(1.0, 0.5, 0.0, -1.0);
        let free = DuffingControlConfig::new(0.1, 0.025).unwrap();
        let (u_free, _) = control_update(&s, 0.025, &p, &free).unwrap();
        let bounded = free.with_bounds(Some(0.0), Some(0.03)).unwrap();
        let (u, diag) = control_update(&s, 0.025, &p, &bounded).unwrap();
        assert!(!(0.0..=0.03).contains(&u_free), "{u_free}");
        assert!((0.0..=0.03).contains(&u));
        assert!(diag.clamped);
        assert!(free.with_bounds(Some(0.1), Some(0.2)).is_err());
    }

    #[test]
    fn target_accel_text_round_trip() {
        for t in [TargetAccel::Constant(0.0), TargetAccel::Constant(-1.25), TargetAccel::Sine { amplitude: 0.1, frequency: 2.0 }] {
            assert_eq!(t.to_string().parse::<TargetAccel>().unwrap(), t);
        }
        assert!("sine:1".parse::<TargetAccel>().is_err());
    }

    #[test]
    fn energy_is_a_first_integral_of_the_undamped_pair() {
        // dH/dt = v·(∇ₓH) + v·f = 0 when ζ = u = 0; check by finite differences along the flow.
        let p = DuffingParams::new(1.0, 0.1, 1.5, 0.0).unwrap();
        let s = state(0.7, -0.4, 0.3, 0.9);
        let plant = DuffingPlant { params: p };
        let dt = 1e-6;
        let fwd = crate::dynamics::oracle::rk4_step(&s, &plant, &[0.0], StepSize::new(dt).unwrap()).unwrap();
        let rate = (conserved_energy(&fwd, &p) - conserved_energy(&s, &p)) / dt;
        assert!(rate.abs() < 1e-6, "{rate}");
    }
}
