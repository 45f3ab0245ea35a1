//! Discrete-time damped least-squares (DLS) acceleration control for nonlinear
//! vibrating systems.
//!
//! At every sample the controller linearizes the plant acceleration in the
//! control input and solves a regularized least-squares problem for the control
//! increment ([`dls`]). The plant is advanced with explicit Euler ([`dynamics`]).
//! [`duffing`] specializes the loop to two linearly coupled Duffing oscillators
//! whose second damping ratio is the control, used to suppress nonlinear beats.
//!
//! ```
//! use dls_control::{simulate, Preset};
//!
//! let mut cfg = Preset::Fig2.config();
//! cfg.t_end = 5.0;
//! let (traj, trace) = simulate(&cfg).unwrap();
//! assert_eq!(traj.len(), 501);
//! assert_eq!(trace.fallback_count(), 0);
//! ```
//!
//! Sweeps run cells on the rayon thread pool when the `parallel` feature (on
//! by default) is enabled and sequentially otherwise.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod control;
pub mod dls;
pub mod duffing;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod trajectory;

pub use analysis::{
    beat_metrics, char_poly_roots, compare_lambda_h, map_jacobian_spectrum, q_estimate, AttractionVerdict,
    BeatMetrics, LambdaHComparison, SpectrumReport,
};
pub use config::SimulationConfig;
pub use control::{run_closed_loop, DlsController};
pub use dls::{
    compute_error, dls_solve, dls_solve_simple, evaluate_target, ControlAdjustment, ControlJacobian, DlsWeights,
    ErrorVector,
};
pub use duffing::{
    control_update, duffing_control_jacobian, duffing_rhs, simulate, ControlDiagnostics, ControllerTrace,
    DuffingControlConfig, DuffingParams, DuffingPlant, TargetAccel,
};
pub use dynamics::{euler_step, PlantModel, StepSize, SystemState};
pub use error::{Error, Result};
pub use experiment::{run_config, run_preset, run_sweep, Execution, LambdaAxis, Preset, RunSummary, SweepSpec};
pub use trajectory::Trajectory;
