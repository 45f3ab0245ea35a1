//! Damped least-squares control adjustment.
//!
//! At each sample instant the controller observes the acceleration error
//! `E = ẍ* − f(x, v, t, u)` and the control Jacobian `A = ∂f/∂u`, and picks the
//! adjustment `δu` minimizing
//!
//! ```text
//! P(δu) = ½ (E − A δu)ᵀ W (E − A δu) + ½ (B + C δu)ᵀ Λ (B + C δu)
//! ```
//!
//! with `W` and `Λ` diagonal and nonnegative. Setting the gradient to zero gives
//! the normal equations `(AᵀWA + CᵀΛC) δu = AᵀWE − CᵀΛB`, solved here with a
//! dense Cholesky factorization of the small `m × m` normal matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative residual bound on the normal equations for an accepted solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Normal matrices with a 1-norm condition estimate above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Acceleration error `ẍ* − f`, one entry per plant coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorVector(DVector<f64>);

impl ErrorVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        ensure_finite(values.iter(), "error vector")?;
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `∂f/∂u`: `n` rows (plant coordinates) by `m` columns (control inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlJacobian(DMatrix<f64>);

impl ControlJacobian {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        ensure_finite(values.iter(), "control Jacobian")?;
        Ok(Self(values))
    }

    /// Builds an `n × m` Jacobian from row-major data.
    pub fn from_row_slice(n: usize, m: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * m {
            return Err(Error::config(format!(
                "control Jacobian: expected {} entries for {n}x{m}, got {}",
                n * m,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, m, values))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }
}

/// Control increment `δu`, applied as `u_{k+1} = u_k + δu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAdjustment(DVector<f64>);

impl ControlAdjustment {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        ensure_finite(values.iter(), "control adjustment")?;
        Ok(Self(values))
    }

    pub fn zeros(m: usize) -> Self {
        Self(DVector::zeros(m))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Weights of the generalized target: tracking weight `W` (diagonal, `n`),
/// regularization `Λ` (diagonal, `m'`), bias `B` (`m'`) and shaping `C` (`m' × m`).
#[derive(Debug, Clone, PartialEq)]
pub struct DlsWeights {
    tracking: DVector<f64>,
    regularization: DVector<f64>,
    bias: DVector<f64>,
    shaping: DMatrix<f64>,
}

impl DlsWeights {
    pub fn new(
        tracking: DVector<f64>,
        regularization: DVector<f64>,
        bias: DVector<f64>,
        shaping: DMatrix<f64>,
    ) -> Result<Self> {
        ensure_finite(tracking.iter(), "W")?;
        ensure_finite(regularization.iter(), "Λ")?;
        ensure_finite(bias.iter(), "B")?;
        ensure_finite(shaping.iter(), "C")?;
        if tracking.iter().chain(regularization.iter()).any(|&w| w < 0.0) {
            return Err(Error::config("W and Λ must have nonnegative diagonals"));
        }
        if !tracking.iter().chain(regularization.iter()).any(|&w| w > 0.0) {
            return Err(Error::config(
                "at least one entry of W or Λ must be strictly positive",
            ));
        }
        let rows = regularization.len();
        if bias.len() != rows || shaping.nrows() != rows {
            return Err(Error::config(format!(
                "Λ has {rows} entries but B has {} and C has {} rows",
                bias.len(),
                shaping.nrows()
            )));
        }
        Ok(Self {
            tracking,
            regularization,
            bias,
            shaping,
        })
    }

    /// Accepts full `W` and `Λ` matrices, rejecting any nonzero off-diagonal entry.
    pub fn from_matrices(
        tracking: &DMatrix<f64>,
        regularization: &DMatrix<f64>,
        bias: DVector<f64>,
        shaping: DMatrix<f64>,
    ) -> Result<Self> {
        Self::new(
            diagonal_of(tracking, "W")?,
            diagonal_of(regularization, "Λ")?,
            bias,
            shaping,
        )
    }

    /// Plain Levenberg–Marquardt weights: `W = I_n`, `Λ = λ I_m`, `C = I_m`, `B = 0`.
    pub fn damped(n: usize, m: usize, lambda: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(n, 1.0),
            DVector::from_element(m, lambda),
            DVector::zeros(m),
            DMatrix::identity(m, m),
        )
    }

    /// Single-input reduction `Λ = λ`, `B = b`, `C = 1` with an arbitrary tracking diagonal.
    pub fn scalar(tracking: &[f64], lambda: f64, b: f64) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(tracking),
            DVector::from_element(1, lambda),
            DVector::from_element(1, b),
            DMatrix::identity(1, 1),
        )
    }

    pub fn tracking(&self) -> &DVector<f64> {
        &self.tracking
    }

    pub fn regularization(&self) -> &DVector<f64> {
        &self.regularization
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn shaping(&self) -> &DMatrix<f64> {
        &self.shaping
    }
}

/// Solution of one damped least-squares solve together with its diagnostics.
#[derive(Debug, Clone)]
pub struct DlsSolution {
    pub delta_u: ControlAdjustment,
    /// 1-norm condition number of the normal matrix.
    pub condition: f64,
    /// `‖M δu − r‖ / (‖M‖ ‖δu‖ + ‖r‖)`, zero when both sides vanish.
    pub relative_residual: f64,
}

pub fn compute_error(target_accel: &[f64], f_value: &[f64]) -> Result<ErrorVector> {
    if target_accel.len() != f_value.len() {
        return Err(Error::config(format!(
            "target has {} entries, plant acceleration has {}",
            target_accel.len(),
            f_value.len()
        )));
    }
    let e = target_accel.iter().zip(f_value).map(|(t, f)| t - f);
    ErrorVector::new(DVector::from_iterator(f_value.len(), e))
}

/// Value of the generalized quadratic target at a candidate adjustment.
pub fn evaluate_target(
    e: &ErrorVector,
    a: &ControlJacobian,
    w: &DlsWeights,
    delta_u: &ControlAdjustment,
) -> Result<f64> {
    check_dimensions(e, a, w)?;
    if delta_u.len() != a.cols() {
        return Err(Error::config(format!(
            "δu has {} entries, Jacobian has {} columns",
            delta_u.len(),
            a.cols()
        )));
    }
    let tracking_residual = e.as_vector() - a.as_matrix() * delta_u.as_vector();
    let shaped = w.bias() + w.shaping() * delta_u.as_vector();
    let tracking: f64 = weighted_square(&tracking_residual, w.tracking());
    let regularization: f64 = weighted_square(&shaped, w.regularization());
    Ok(0.5 * (tracking + regularization))
}

/// Minimizer of [`evaluate_target`]: solves `(AᵀWA + CᵀΛC) δu = AᵀWE − CᵀΛB`.
pub fn dls_solve(e: &ErrorVector, a: &ControlJacobian, w: &DlsWeights) -> Result<ControlAdjustment> {
    dls_solve_with_diagnostics(e, a, w).map(|s| s.delta_u)
}

pub fn dls_solve_with_diagnostics(
    e: &ErrorVector,
    a: &ControlJacobian,
    w: &DlsWeights,
) -> Result<DlsSolution> {
    check_dimensions(e, a, w)?;
    let a = a.as_matrix();
    let c = w.shaping();

    // AᵀW and CᵀΛ, scaling columns of the transposes by the diagonals.
    let mut at_w = a.transpose();
    for (mut col, &wi) in at_w.column_iter_mut().zip(w.tracking().iter()) {
        col *= wi;
    }
    let mut ct_lambda = c.transpose();
    for (mut col, &li) in ct_lambda.column_iter_mut().zip(w.regularization().iter()) {
        col *= li;
    }

    let normal = &at_w * a + &ct_lambda * c;
    let rhs = &at_w * e.as_vector() - &ct_lambda * w.bias();
    solve_normal(&normal, &rhs)
}

/// Textbook damped least squares `(AᵀA + λI)⁻¹ AᵀE`, with `I` the `m × m` identity.
pub fn dls_solve_simple(e: &ErrorVector, a: &ControlJacobian, lambda: f64) -> Result<ControlAdjustment> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config(format!("λ must be finite and nonnegative, got {lambda}")));
    }
    if e.len() != a.rows() {
        return Err(Error::config(format!(
            "E has {} entries, Jacobian has {} rows",
            e.len(),
            a.rows()
        )));
    }
    let a = a.as_matrix();
    let m = a.ncols();
    let normal = a.transpose() * a + DMatrix::identity(m, m) * lambda;
    let rhs = a.transpose() * e.as_vector();
    solve_normal(&normal, &rhs).map(|s| s.delta_u)
}

fn solve_normal(normal: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DlsSolution> {
    let factor = Cholesky::factor(normal).ok_or(Error::SingularNormalMatrix {
        condition: f64::INFINITY,
    })?;
    let condition = factor.condition_1norm(normal);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularNormalMatrix { condition });
    }
    let delta_u = factor.solve(rhs);
    let residual = (normal * &delta_u - rhs).norm();
    let scale = normal.norm() * delta_u.norm() + rhs.norm();
    let relative_residual = if scale > 0.0 { residual / scale } else { 0.0 };
    Ok(DlsSolution {
        delta_u: ControlAdjustment::new(delta_u)?,
        condition,
        relative_residual,
    })
}

/// Lower-triangular factor `L` with `M = L Lᵀ`.
struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive.
    fn factor(m: &DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Some(Self { l })
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut y = b.clone();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[(i, k)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[(k, i)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Exact `‖M‖₁ ‖M⁻¹‖₁`; the inverse is cheap at these sizes.
    fn condition_1norm(&self, m: &DMatrix<f64>) -> f64 {
        let n = m.nrows();
        let mut inv_norm = 0.0_f64;
        for j in 0..n {
            let mut unit = DVector::zeros(n);
            unit[j] = 1.0;
            inv_norm = inv_norm.max(self.solve(&unit).lp_norm(1));
        }
        let norm = m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
        norm * inv_norm
    }
}

fn check_dimensions(e: &ErrorVector, a: &ControlJacobian, w: &DlsWeights) -> Result<()> {
    if e.len() != a.rows() || w.tracking().len() != a.rows() {
        return Err(Error::config(format!(
            "E has {} entries, W has {}, Jacobian has {} rows",
            e.len(),
            w.tracking().len(),
            a.rows()
        )));
    }
    if w.shaping().ncols() != a.cols() {
        return Err(Error::config(format!(
            "C has {} columns, Jacobian has {}",
            w.shaping().ncols(),
            a.cols()
        )));
    }
    Ok(())
}

fn weighted_square(r: &DVector<f64>, weights: &DVector<f64>) -> f64 {
    r.iter().zip(weights.iter()).map(|(ri, wi)| wi * ri * ri).sum()
}

fn diagonal_of(m: &DMatrix<f64>, name: &str) -> Result<DVector<f64>> {
    if !m.is_square() {
        return Err(Error::config(format!("{name} must be square")));
    }
    let off_diagonal = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .any(|(i, j)| i != j && m[(i, j)] != 0.0);
    if off_diagonal {
        return Err(Error::config(format!("{name} must be diagonal")));
    }
    Ok(m.diagonal())
}

fn ensure_finite<'a>(mut values: impl Iterator<Item = &'a f64>, what: &str) -> Result<()> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::config(format!("{what} has non-finite entries")))
    }
}
