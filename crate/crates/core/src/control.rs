//! Generic discrete-time acceleration controller for any [`PlantModel`].
//!
//! Each sample `k` observes `(x_k, v_k, t_k, u_k)`, solves the damped
//! least-squares problem for `δu_k`, and advances the plant with Euler using
//! the *current* control `u_k`. The adjusted control `u_k + δu_k` first acts
//! on the following step.

use crate::dls::{compute_error, dls_solve, DlsWeights};
use crate::dynamics::{euler_step, PlantModel, StepSize, SystemState};
use crate::error::{Error, Result};

/// Outcome of one controller evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlUpdate {
    pub u_next: Vec<f64>,
    pub delta_u: Vec<f64>,
    /// Set when the normal matrix was singular and the control was held.
    pub fallback: bool,
}

pub struct DlsController<F> {
    weights: DlsWeights,
    target: F,
}

impl<F> DlsController<F>
where
    F: Fn(f64) -> Vec<f64>,
{
    /// `target` maps time to the desired acceleration vector `ẍ*(t)`.
    pub fn new(weights: DlsWeights, target: F) -> Self {
        Self { weights, target }
    }

    pub fn weights(&self) -> &DlsWeights {
        &self.weights
    }

    pub fn next_control<P: PlantModel + ?Sized>(
        &self,
        plant: &P,
        state: &SystemState,
        u: &[f64],
    ) -> Result<ControlUpdate> {
        let f = plant.rhs(state, u);
        let e = compute_error(&(self.target)(state.t), &f)?;
        let a = plant.control_jacobian(state, u);
        match dls_solve(&e, &a, &self.weights) {
            Ok(du) => {
                let delta_u = du.into_vector().as_slice().to_vec();
                let u_next = u.iter().zip(&delta_u).map(|(u, d)| u + d).collect();
                Ok(ControlUpdate {
                    u_next,
                    delta_u,
                    fallback: false,
                })
            }
            Err(Error::SingularNormalMatrix { .. }) => Ok(ControlUpdate {
                u_next: u.to_vec(),
                delta_u: vec![0.0; u.len()],
                fallback: true,
            }),
            Err(other) => Err(other),
        }
    }
}

/// States and controls at every sample, initial instant included.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub states: Vec<SystemState>,
    pub controls: Vec<Vec<f64>>,
}

pub fn run_closed_loop<P, F>(
    plant: &P,
    controller: &DlsController<F>,
    initial: SystemState,
    u0: Vec<f64>,
    h: StepSize,
    steps: usize,
) -> Result<ClosedLoopRun>
where
    P: PlantModel + ?Sized,
    F: Fn(f64) -> Vec<f64>,
{
    let t0 = initial.t;
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    let mut state = initial;
    let mut u = u0;
    for k in 0..steps {
        let update = controller.next_control(plant, &state, &u)?;
        let mut next = euler_step(&state, plant, &u, h).map_err(|e| e.at_step(k + 1))?;
        next.t = t0 + (k + 1) as f64 * h.get();
        states.push(std::mem::replace(&mut state, next));
        controls.push(std::mem::replace(&mut u, update.u_next));
        if u.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence {
                step: Some(k + 1),
                time: state.t,
            });
        }
    }
    states.push(state);
    controls.push(u);
    Ok(ClosedLoopRun { states, controls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dls::ControlJacobian;

    struct Still;

    impl PlantModel for Still {
        fn dimension(&self) -> usize {
            2
        }
        fn control_dimension(&self) -> usize {
            1
        }
        fn rhs(&self, _: &SystemState, _: &[f64]) -> Vec<f64> {
            vec![0.0, 0.0]
        }
        fn control_jacobian(&self, _: &SystemState, _: &[f64]) -> ControlJacobian {
            ControlJacobian::from_row_slice(2, 1, &[0.0, 0.0]).unwrap()
        }
    }

    /// `ẍ = u`: the controller can reach any target acceleration exactly.
    struct Thruster;

    impl PlantModel for Thruster {
        fn dimension(&self) -> usize {
            1
        }
        fn control_dimension(&self) -> usize {
            1
        }
        fn rhs(&self, _: &SystemState, u: &[f64]) -> Vec<f64> {
            vec![u[0]]
        }
        fn control_jacobian(&self, _: &SystemState, _: &[f64]) -> ControlJacobian {
            ControlJacobian::from_row_slice(1, 1, &[1.0]).unwrap()
        }
    }

    #[test]
    fn zero_plant_stays_put() {
        let controller = DlsController::new(DlsWeights::scalar(&[0.0, 1.0], 1.0, 0.0).unwrap(), |_| {
            vec![0.0, 0.0]
        });
        let initial = SystemState::new(vec![0.4, -0.2], vec![0.0, 0.0], 0.0).unwrap();
        let run = run_closed_loop(&Still, &controller, initial.clone(), vec![0.025], StepSize::new(0.01).unwrap(), 50)
            .unwrap();
        assert_eq!(run.states.len(), 51);
        for (s, u) in run.states.iter().zip(&run.controls) {
            assert_eq!(s.x, initial.x);
            assert_eq!(s.v, initial.v);
            assert_eq!(u, &vec![0.025]);
        }
    }

    #[test]
    fn unregularized_controller_hits_target_after_one_step() {
        let weights = DlsWeights::new(
            nalgebra::DVector::from_element(1, 1.0),
            nalgebra::DVector::from_element(1, 0.0),
            nalgebra::DVector::zeros(1),
            nalgebra::DMatrix::identity(1, 1),
        )
        .unwrap();
        let controller = DlsController::new(weights, |_| vec![2.5]);
        let initial = SystemState::new(vec![0.0], vec![0.0], 0.0).unwrap();
        let run = run_closed_loop(&Thruster, &controller, initial, vec![0.0], StepSize::new(0.1).unwrap(), 3).unwrap();
        assert_eq!(run.controls[0], vec![0.0]);
        assert!(run.controls[1..].iter().all(|u| (u[0] - 2.5).abs() < 1e-15));
    }

    #[test]
    fn singular_solve_holds_control() {
        let weights = DlsWeights::new(
            nalgebra::DVector::from_column_slice(&[0.0, 1.0]),
            nalgebra::DVector::from_element(1, 0.0),
            nalgebra::DVector::zeros(1),
            nalgebra::DMatrix::identity(1, 1),
        )
        .unwrap();
        let controller = DlsController::new(weights, |_| vec![0.0, 1.0]);
        let s = SystemState::new(vec![0.0, 0.0], vec![0.0, 0.0], 0.0).unwrap();
        let update = controller.next_control(&Still, &s, &[0.3]).unwrap();
        assert!(update.fallback);
        assert_eq!(update.u_next, vec![0.3]);
    }
}
