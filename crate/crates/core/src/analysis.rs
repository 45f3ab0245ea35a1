//! Convergence spectrum of the sampled control loop, beat metrics, and
//! comparison of control traces across sampling steps.
//!
//! The closed loop is the map `z_{k+1} = G(z_k)` on `z = (u, x₁, x₂, v₁, v₂)`.
//! Its Jacobian `J` decides local attraction (all eigenvalues inside the unit
//! circle). Eigenvalues are reported both for `J` itself and for the increment
//! `J − I`: at the origin the latter has one exact zero (the control row) and
//! four eigenvalues `h·pᵢ`, with `pᵢ` the roots of the linearized quartic
//!
//! ```text
//! p⁴ + 2ζΩp³ + 2Ω²p² + 2ζΩ³p + (1 − ε²)Ω⁴ = 0.
//! ```

use std::collections::VecDeque;

use nalgebra::{Complex, DMatrix};

use crate::duffing::{control_update, DuffingControlConfig, DuffingParams, DuffingPlant};
use crate::dynamics::{euler_step, StepSize, SystemState};
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Central-difference step for differentiating the loop map.
pub const MAP_FD_STEP: f64 = 1e-6;

/// Slack on the unit circle when classifying attraction.
pub const VERDICT_TOLERANCE: f64 = 1e-9;

/// Default acceptance bound on the relative RMS difference of λh-locked control traces.
pub const LAMBDA_H_TOLERANCE: f64 = 0.10;

/// Rise-then-fall factor that counts as one energy-exchange cycle of an envelope.
pub const EXCHANGE_HYSTERESIS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttractionVerdict {
    /// Every eigenvalue strictly inside the unit circle.
    Sufficient,
    /// Spectral radius exactly at 1 (within tolerance).
    NecessaryOnly,
    Fails,
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Eigenvalues of the loop map Jacobian `J`.
    pub eigenvalues: Vec<Complex<f64>>,
    /// Eigenvalues of `J − I`.
    pub increment_eigenvalues: Vec<Complex<f64>>,
    /// `max |eigenvalue|` of `J`.
    pub spectral_radius: f64,
    /// Roots `pᵢ` of the linearized characteristic quartic.
    pub char_roots: Vec<Complex<f64>>,
    pub attraction_verdict: AttractionVerdict,
    /// Row/column order `(u, x₁, x₂, v₁, v₂)`.
    pub jacobian: DMatrix<f64>,
}

/// Coefficients of the characteristic quartic, leading term first.
pub fn char_poly_coefficients(p: &DuffingParams) -> [f64; 5] {
    let w = p.omega;
    [
        1.0,
        2.0 * p.zeta * w,
        2.0 * w * w,
        2.0 * p.zeta * w.powi(3),
        (1.0 - p.epsilon * p.epsilon) * w.powi(4),
    ]
}

/// Horner evaluation of a real polynomial (leading coefficient first) at a complex point.
pub fn poly_eval(coeffs: &[f64], z: Complex<f64>) -> Complex<f64> {
    coeffs
        .iter()
        .fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// `|P(z)| / Σ|cᵢ||z|ⁱ`: back-substitution residual relative to the size of the terms.
pub fn poly_relative_residual(coeffs: &[f64], z: Complex<f64>) -> f64 {
    let scale = coeffs.iter().fold(0.0, |acc, &c| acc * z.norm() + c.abs());
    let r = poly_eval(coeffs, z).norm();
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

/// Roots of the characteristic quartic.
///
/// Computed as eigenvalues of the linearized first-order system written in the
/// scaled variable `s = p/Ω` (well conditioned even where the quartic has double
/// roots, e.g. `ζ = ε = 0`), then Newton-polished on the quartic itself when that
/// lowers the residual. Sorted by real part, then imaginary part.
pub fn char_poly_roots(p: &DuffingParams) -> Vec<Complex<f64>> {
    let e = p.epsilon;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        -1.0, e, -2.0 * p.zeta, 0.0,
        e, -1.0, 0.0, 0.0,
    ]);
    let coeffs = char_poly_coefficients(p);
    let derivative: Vec<f64> = coeffs[..4]
        .iter()
        .enumerate()
        .map(|(i, c)| c * (4 - i) as f64)
        .collect();

    let mut roots: Vec<Complex<f64>> = a
        .complex_eigenvalues()
        .iter()
        .map(|s| {
            let mut z = s * p.omega;
            for _ in 0..3 {
                let d = poly_eval(&derivative, z);
                if d.norm() == 0.0 {
                    break;
                }
                let candidate = z - poly_eval(&coeffs, z) / d;
                if poly_eval(&coeffs, candidate).norm() < poly_eval(&coeffs, z).norm() {
                    z = candidate;
                } else {
                    break;
                }
            }
            z
        })
        .collect();
    sort_complex(&mut roots);
    roots
}

/// Numerically differentiates one step of the loop at `(u, at)` and classifies the spectrum.
pub fn map_jacobian_spectrum(
    p: &DuffingParams,
    cfg: &DuffingControlConfig,
    h: StepSize,
    at: &SystemState,
    u: f64,
) -> Result<SpectrumReport> {
    if at.dimension() != 2 {
        return Err(Error::config("spectrum needs a two-dimensional state"));
    }
    let z0 = [u, at.x[0], at.x[1], at.v[0], at.v[1]];
    let map = |z: &[f64; 5]| -> Result<[f64; 5]> {
        let s = SystemState {
            x: vec![z[1], z[2]],
            v: vec![z[3], z[4]],
            t: at.t,
        };
        let (u_next, _) = control_update(&s, z[0], p, cfg)?;
        let next = euler_step(&s, &DuffingPlant { params: *p }, &[z[0]], h)?;
        Ok([u_next, next.x[0], next.x[1], next.v[0], next.v[1]])
    };

    let mut jacobian = DMatrix::<f64>::zeros(5, 5);
    for j in 0..5 {
        let mut plus = z0;
        let mut minus = z0;
        plus[j] += MAP_FD_STEP;
        minus[j] -= MAP_FD_STEP;
        let (gp, gm) = (map(&plus)?, map(&minus)?);
        for i in 0..5 {
            let d = (gp[i] - gm[i]) / (2.0 * MAP_FD_STEP);
            if !d.is_finite() {
                return Err(Error::Differentiation(format!("entry ({i}, {j}) is {d}")));
            }
            jacobian[(i, j)] = d;
        }
    }

    let mut eigenvalues: Vec<_> = jacobian.complex_eigenvalues().iter().copied().collect();
    let increment = &jacobian - DMatrix::<f64>::identity(5, 5);
    let mut increment_eigenvalues: Vec<_> = increment.complex_eigenvalues().iter().copied().collect();
    sort_complex(&mut eigenvalues);
    sort_complex(&mut increment_eigenvalues);

    let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let attraction_verdict = if spectral_radius < 1.0 - VERDICT_TOLERANCE {
        AttractionVerdict::Sufficient
    } else if spectral_radius <= 1.0 + VERDICT_TOLERANCE {
        AttractionVerdict::NecessaryOnly
    } else {
        AttractionVerdict::Fails
    };

    Ok(SpectrumReport {
        eigenvalues,
        increment_eigenvalues,
        spectral_radius,
        char_roots: char_poly_roots(p),
        attraction_verdict,
        jacobian,
    })
}

/// Estimate `q = −(1 + λ/(4Ω²v₂²))⁻¹` of the control-row increment eigenvalue for the
/// uncoupled pair. Tends to 0 as `v₂ → 0` when `λ > 0`.
pub fn q_estimate(omega: f64, v2: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::config(format!("λ must be nonnegative, got {lambda}")));
    }
    let g = 4.0 * omega * omega * v2 * v2;
    if g == 0.0 && lambda == 0.0 {
        return Err(Error::UndefinedEstimate("v₂ = 0 and λ = 0".into()));
    }
    if lambda.is_infinite() {
        return Ok(0.0);
    }
    Ok(-g / (g + lambda))
}

/// Sliding-window maxima of `|x₁|` and `|x₂|`, one value per sample whose
/// centered window of one linear period fits inside the record.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub t: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeatMetrics {
    pub envelope: Envelope,
    /// `½v₁² + ½Ω²x₁²` at every sample.
    pub energy1: Vec<f64>,
    pub energy2: Vec<f64>,
    /// Max over min of the `x₂` envelope; 1 for an identically zero record.
    pub exchange_depth: f64,
    /// Rise-and-fall cycles of the `x₂` envelope by at least [`EXCHANGE_HYSTERESIS`].
    pub exchange_cycles: usize,
    pub max_envelope: [f64; 2],
    /// `sqrt(mean(x₁² + x₂²))`
    pub rms_displacement: f64,
    /// Mean of `energy1 + energy2`.
    pub mean_energy: f64,
}

impl BeatMetrics {
    /// Largest `x₂` envelope value with its window centered in `[t0, t1]`.
    pub fn max_envelope_x2_between(&self, t0: f64, t1: f64) -> f64 {
        self.envelope
            .t
            .iter()
            .zip(&self.envelope.x2)
            .filter(|(t, _)| (t0..=t1).contains(*t))
            .map(|(_, e)| *e)
            .fold(0.0, f64::max)
    }
}

pub fn beat_metrics(traj: &Trajectory, p: &DuffingParams) -> Result<BeatMetrics> {
    traj.validate()?;
    let dt = traj
        .sample_interval()
        .ok_or_else(|| Error::InsufficientData("need at least two samples".into()))?;
    let half = (0.5 * p.linear_period() / dt).round() as usize;
    let n = traj.len();
    if n < 2 * half + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} samples cover less than one linear period ({} samples)",
            2 * half + 1
        )));
    }

    let abs1: Vec<f64> = traj.x1.iter().map(|x| x.abs()).collect();
    let abs2: Vec<f64> = traj.x2.iter().map(|x| x.abs()).collect();
    let envelope = Envelope {
        t: traj.t[half..n - half].to_vec(),
        x1: sliding_max(&abs1, 2 * half + 1),
        x2: sliding_max(&abs2, 2 * half + 1),
    };

    let w2 = p.omega * p.omega;
    let energy = |x: &[f64], v: &[f64]| -> Vec<f64> {
        x.iter().zip(v).map(|(x, v)| 0.5 * v * v + 0.5 * w2 * x * x).collect()
    };
    let energy1 = energy(&traj.x1, &traj.v1);
    let energy2 = energy(&traj.x2, &traj.v2);

    let max_of = |e: &[f64]| e.iter().copied().fold(0.0, f64::max);
    let max_envelope = [max_of(&envelope.x1), max_of(&envelope.x2)];
    let min2 = envelope.x2.iter().copied().fold(f64::INFINITY, f64::min);
    let exchange_depth = if max_envelope[1] == 0.0 {
        1.0
    } else {
        max_envelope[1] / min2
    };

    let rms_displacement = (traj
        .x1
        .iter()
        .zip(&traj.x2)
        .map(|(a, b)| a * a + b * b)
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let mean_energy = energy1.iter().zip(&energy2).map(|(a, b)| a + b).sum::<f64>() / n as f64;

    Ok(BeatMetrics {
        exchange_cycles: count_exchange_cycles(&envelope.x2, EXCHANGE_HYSTERESIS),
        envelope,
        energy1,
        energy2,
        exchange_depth,
        max_envelope,
        rms_displacement,
        mean_energy,
    })
}

/// Controlled over baseline maximum `x₂` envelope within `[t0, t1]`.
pub fn suppression_ratio(controlled: &BeatMetrics, baseline: &BeatMetrics, t0: f64, t1: f64) -> f64 {
    let base = baseline.max_envelope_x2_between(t0, t1);
    let ctrl = controlled.max_envelope_x2_between(t0, t1);
    if base == 0.0 {
        if ctrl == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        ctrl / base
    }
}

fn sliding_max(values: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1 - width);
    let mut window: VecDeque<usize> = VecDeque::new();
    for (i, &v) in values.iter().enumerate() {
        while window.back().is_some_and(|&j| values[j] <= v) {
            window.pop_back();
        }
        window.push_back(i);
        if window[0] + width <= i {
            window.pop_front();
        }
        if i + 1 >= width {
            out.push(values[window[0]]);
        }
    }
    out
}

fn count_exchange_cycles(envelope: &[f64], factor: f64) -> usize {
    let Some(&first) = envelope.first() else {
        return 0;
    };
    let mut cycles = 0;
    let mut trough = first;
    let mut peak = first;
    let mut rising = false;
    for &e in envelope {
        if rising {
            peak = peak.max(e);
            if e * factor <= peak {
                cycles += 1;
                rising = false;
                trough = e;
            }
        } else {
            trough = trough.min(e);
            if e > 0.0 && e >= factor * trough {
                rising = true;
                peak = e;
            }
        }
    }
    cycles
}

/// Difference between two control histories on the coarser run's time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaHComparison {
    pub grid_points: usize,
    pub rms_difference: f64,
    /// RMS of the coarser run's control on the grid.
    pub rms_coarse: f64,
    /// RMS of the finer run's (interpolated) control on the grid.
    pub rms_fine: f64,
    /// `rms_difference / min(rms_coarse, rms_fine)`.
    pub relative_rms: f64,
    pub max_deviation: f64,
}

impl LambdaHComparison {
    pub fn within(&self, tolerance: f64) -> bool {
        self.relative_rms <= tolerance
    }
}

pub fn compare_lambda_h(run_a: &Trajectory, run_b: &Trajectory) -> Result<LambdaHComparison> {
    compare_control_traces(run_a, run_b, None)
}

/// As [`compare_lambda_h`], optionally restricted to grid points inside `window`.
pub fn compare_control_traces(
    run_a: &Trajectory,
    run_b: &Trajectory,
    window: Option<(f64, f64)>,
) -> Result<LambdaHComparison> {
    run_a.validate()?;
    run_b.validate()?;
    let (dt_a, dt_b) = match (run_a.sample_interval(), run_b.sample_interval()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Comparison("both runs need at least two samples".into())),
    };
    let (coarse, fine) = if dt_a >= dt_b { (run_a, run_b) } else { (run_b, run_a) };

    let mut start = coarse.t[0].max(fine.t[0]);
    let mut end = coarse.t[coarse.len() - 1].min(fine.t[fine.len() - 1]);
    if let Some((w0, w1)) = window {
        start = start.max(w0);
        end = end.min(w1);
    }
    if !(end > start) {
        return Err(Error::Comparison(format!(
            "time ranges do not overlap (common span [{start}, {end}])"
        )));
    }

    let (mut sum_d, mut sum_c, mut sum_f, mut max_dev, mut count) = (0.0, 0.0, 0.0, 0.0_f64, 0usize);
    for (&t, &uc) in coarse.t.iter().zip(&coarse.u) {
        if t < start || t > end {
            continue;
        }
        let uf = interpolate(&fine.t, &fine.u, t);
        let d = uc - uf;
        sum_d += d * d;
        sum_c += uc * uc;
        sum_f += uf * uf;
        max_dev = max_dev.max(d.abs());
        count += 1;
    }
    if count == 0 {
        return Err(Error::Comparison("no grid points in the common span".into()));
    }
    let n = count as f64;
    let (rms_difference, rms_coarse, rms_fine) = ((sum_d / n).sqrt(), (sum_c / n).sqrt(), (sum_f / n).sqrt());
    let reference = rms_coarse.min(rms_fine);
    let relative_rms = if rms_difference == 0.0 {
        0.0
    } else if reference == 0.0 {
        f64::INFINITY
    } else {
        rms_difference / reference
    };
    Ok(LambdaHComparison {
        grid_points: count,
        rms_difference,
        rms_coarse,
        rms_fine,
        relative_rms,
        max_deviation: max_dev,
    })
}

/// Linear interpolation on a strictly increasing grid, clamped at the ends.
fn interpolate(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let i = ts.partition_point(|&s| s <= t);
    if i == 0 {
        return ys[0];
    }
    if i == ts.len() {
        return ys[ts.len() - 1];
    }
    let (t0, t1) = (ts[i - 1], ts[i]);
    if t == t0 {
        return ys[i - 1];
    }
    let w = (t - t0) / (t1 - t0);
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

fn sort_complex(v: &mut [Complex<f64>]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectoryRow;

    fn synthetic(dt: f64, n: usize, f: impl Fn(f64) -> (f64, f64, f64)) -> Trajectory {
        let mut tr = Trajectory::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * dt;
            let (x1, x2, u) = f(t);
            tr.push(TrajectoryRow {
                t,
                x1,
                x2,
                v1: 0.0,
                v2: 0.0,
                u,
                f2: 0.0,
                du: 0.0,
            });
        }
        tr
    }

    #[test]
    fn undamped_uncoupled_roots_are_double_imaginary() {
        for omega in [1.0, 0.3, 2.5] {
            let p = DuffingParams::new(omega, 0.0, 1.5, 0.0).unwrap();
            let roots = char_poly_roots(&p);
            assert_eq!(roots.len(), 4);
            let mut lower = 0;
            for r in &roots {
                assert!((r.norm() - omega).abs() < 1e-10);
                assert!(r.re.abs() < 1e-10);
                if r.im < 0.0 {
                    lower += 1;
                }
            }
            assert_eq!(lower, 2);
        }
    }

    #[test]
    fn roots_back_substitute() {
        let p = DuffingParams::reference();
        let coeffs = char_poly_coefficients(&p);
        let roots = char_poly_roots(&p);
        for r in roots {
            assert!(poly_eval(&coeffs, r).norm() <= 1e-8, "{r}");
            assert!(r.re < 0.0, "damped pair should have decaying modes: {r}");
        }
    }

    #[test]
    fn char_poly_ignores_lambda() {
        // λ lives in the controller config only; the quartic is a function of the plant.
        let p = DuffingParams::reference();
        let h = StepSize::new(0.01).unwrap();
        let origin = SystemState::new(vec![0.0, 0.0], vec![0.0, 0.0], 0.0).unwrap();
        let a = map_jacobian_spectrum(&p, &DuffingControlConfig::new(0.1, 0.0).unwrap(), h, &origin, 0.0).unwrap();
        let b = map_jacobian_spectrum(&p, &DuffingControlConfig::new(10.0, 0.0).unwrap(), h, &origin, 0.0).unwrap();
        assert_eq!(a.char_roots, b.char_roots);
        assert_eq!(a.jacobian, b.jacobian);
    }

    #[test]
    fn q_estimate_examples() {
        assert_eq!(q_estimate(1.0, 0.3, 0.0).unwrap(), -1.0);
        assert_eq!(q_estimate(1.0, 1.0, 4.0).unwrap(), -0.5);
        assert!(q_estimate(1.0, 1.0, 1e12).unwrap().abs() < 1e-11);
        assert_eq!(q_estimate(1.0, 1.0, f64::INFINITY).unwrap(), 0.0);
        assert_eq!(q_estimate(1.0, 0.0, 2.0).unwrap(), 0.0);
        assert!(matches!(q_estimate(1.0, 0.0, 0.0), Err(Error::UndefinedEstimate(_))));
    }

    #[test]
    fn zero_record_metrics() {
        let tr = synthetic(0.01, 2000, |_| (0.0, 0.0, 0.0));
        let m = beat_metrics(&tr, &DuffingParams::reference()).unwrap();
        assert_eq!(m.exchange_depth, 1.0);
        assert_eq!(m.exchange_cycles, 0);
        assert_eq!(m.max_envelope, [0.0, 0.0]);
        assert_eq!(m.rms_displacement, 0.0);
        assert_eq!(m.mean_energy, 0.0);
    }

    #[test]
    fn sinusoid_envelope_is_its_amplitude() {
        let tr = synthetic(0.01, 5000, |t| (0.0, t.sin(), 0.0));
        let m = beat_metrics(&tr, &DuffingParams::reference()).unwrap();
        assert!(m.envelope.x2.iter().all(|e| (e - 1.0).abs() < 0.02));
    }

    #[test]
    fn amplitude_modulated_signal_counts_cycles() {
        // Three slow beats of depth ~20 within the record.
        let tr = synthetic(0.01, 30_000, |t| {
            let env = 0.05 + (std::f64::consts::PI * t / 100.0).sin().powi(2);
            (0.0, env * (5.0 * t).sin(), 0.0)
        });
        let m = beat_metrics(&tr, &DuffingParams::reference()).unwrap();
        assert_eq!(m.exchange_cycles, 3);
        assert!(m.exchange_depth > 3.0);
    }

    #[test]
    fn short_record_is_rejected() {
        let tr = synthetic(0.01, 100, |t| (t, t, 0.0));
        assert!(matches!(beat_metrics(&tr, &DuffingParams::reference()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn sliding_max_matches_naive() {
        let v: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let w = 9;
        let fast = sliding_max(&v, w);
        let naive: Vec<f64> = v.windows(w).map(|s| s.iter().copied().fold(f64::MIN, f64::max)).collect();
        assert_eq!(fast, naive);
    }

    #[test]
    fn identical_runs_compare_equal() {
        let tr = synthetic(0.01, 1000, |t| (0.0, 0.0, 0.3 + t.sin()));
        let c = compare_lambda_h(&tr, &tr).unwrap();
        assert_eq!(c.rms_difference, 0.0);
        assert_eq!(c.relative_rms, 0.0);
        assert_eq!(c.max_deviation, 0.0);
        assert_eq!(c.grid_points, 1000);
    }

    #[test]
    fn comparison_uses_coarse_grid_and_interpolates() {
        let coarse = synthetic(0.1, 101, |t| (0.0, 0.0, 2.0 * t));
        let fine = synthetic(0.01, 1001, |t| (0.0, 0.0, 2.0 * t + 0.5));
        let c = compare_lambda_h(&fine, &coarse).unwrap();
        assert_eq!(c.grid_points, 101);
        assert!((c.rms_difference - 0.5).abs() < 1e-12);
        assert!((c.max_deviation - 0.5).abs() < 1e-12);
    }

    #[test]
    fn disjoint_runs_cannot_be_compared() {
        let a = synthetic(0.1, 10, |_| (0.0, 0.0, 1.0));
        let mut b = synthetic(0.1, 10, |_| (0.0, 0.0, 1.0));
        b.t.iter_mut().for_each(|t| *t += 100.0);
        assert!(matches!(compare_lambda_h(&a, &b), Err(Error::Comparison(_))));
    }
}
