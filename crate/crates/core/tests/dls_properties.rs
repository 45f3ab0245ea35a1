use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use dls_control::dls::dls_solve_with_diagnostics;
use dls_control::{
    dls_solve, dls_solve_simple, evaluate_target, ControlAdjustment, ControlJacobian, DlsWeights, ErrorVector,
};

fn instance() -> impl Strategy<Value = (ErrorVector, ControlJacobian, f64)> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n * m),
            -3.0..3.0f64,
        )
            .prop_map(move |(e, a, log_lambda)| {
                (
                    ErrorVector::from_slice(&e).unwrap(),
                    ControlJacobian::from_row_slice(n, m, &a).unwrap(),
                    10f64.powf(log_lambda),
                )
            })
    })
}

proptest! {
    #[test]
    fn solution_is_a_minimizer((e, a, lambda) in instance(), dir in prop::collection::vec(-1.0..1.0f64, 4), scale in 1e-4..10.0f64) {
        let w = DlsWeights::damped(e.len(), a.cols(), lambda).unwrap();
        let du = dls_solve(&e, &a, &w).unwrap();
        let best = evaluate_target(&e, &a, &w, &du).unwrap();
        let p = DVector::from_iterator(a.cols(), dir.iter().take(a.cols()).map(|d| d * scale));
        let moved = ControlAdjustment::new(du.as_vector() + p).unwrap();
        let value = evaluate_target(&e, &a, &w, &moved).unwrap();
        prop_assert!(value >= best - 1e-12 * best.max(1.0));
    }

    #[test]
    fn normal_equations_hold((e, a, lambda) in instance()) {
        let w = DlsWeights::damped(e.len(), a.cols(), lambda).unwrap();
        let sol = dls_solve_with_diagnostics(&e, &a, &w).unwrap();
        prop_assert!(sol.relative_residual <= 1e-10);
    }

    #[test]
    fn generalized_solver_matches_textbook_form((e, a, lambda) in instance()) {
        let w = DlsWeights::damped(e.len(), a.cols(), lambda).unwrap();
        let general = dls_solve(&e, &a, &w).unwrap();
        let simple = dls_solve_simple(&e, &a, lambda).unwrap();
        let diff = (general.as_vector() - simple.as_vector()).norm();
        prop_assert!(diff <= 1e-9 * (1.0 + simple.as_vector().norm()));
    }

    #[test]
    fn step_norm_shrinks_as_lambda_grows((e, a, lambda) in instance(), factor in 1.5..100.0f64) {
        let small = dls_solve_simple(&e, &a, lambda).unwrap().as_vector().norm();
        let large = dls_solve_simple(&e, &a, lambda * factor).unwrap().as_vector().norm();
        prop_assert!(large <= small * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn single_input_step_opposes_the_error_slope(e in -5.0..5.0f64, j in -5.0..5.0f64, lambda in 1e-3..1e3f64) {
        prop_assume!(e * j != 0.0);
        let du = dls_solve_simple(&ErrorVector::from_slice(&[e]).unwrap(), &ControlJacobian::from_row_slice(1, 1, &[j]).unwrap(), lambda).unwrap();
        prop_assert_eq!(du.as_vector()[0].signum(), (e * j).signum());
    }
}

#[test]
fn step_norm_at_three_damping_levels() {
    let e = ErrorVector::from_slice(&[1.0, -0.5, 0.25]).unwrap();
    let a = ControlJacobian::new(DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.4, 1.0, 0.3, 0.7])).unwrap();
    let norms: Vec<f64> = [0.1, 1.0, 10.0]
        .iter()
        .map(|&l| dls_solve_simple(&e, &a, l).unwrap().as_vector().norm())
        .collect();
    assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
}

#[test]
fn bias_pulls_the_step_toward_minus_b() {
    // With W = 0 the target is ½λ|b + δu|², minimized at δu = −b.
    let e = ErrorVector::from_slice(&[2.0]).unwrap();
    let a = ControlJacobian::from_row_slice(1, 1, &[3.0]).unwrap();
    let w = DlsWeights::scalar(&[0.0], 0.7, 0.4).unwrap();
    let du = dls_solve(&e, &a, &w).unwrap();
    assert!((du.as_vector()[0] + 0.4).abs() < 1e-14);
}
