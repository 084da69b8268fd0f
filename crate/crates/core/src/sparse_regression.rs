//! Sequentially thresholded least squares (STLSQ) with a ridge penalty.
//!
//! Each target column `y_j` is regressed on the feature matrix `theta`
//! independently: solve a ridge problem on the active features, deactivate
//! every coefficient whose magnitude is below the threshold, and repeat until
//! the active set stops changing.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::lstsq_qr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("feature matrix has {theta_rows} rows but targets have {target_rows}")]
    RowMismatch { theta_rows: usize, target_rows: usize },
    #[error("regression problem needs at least one sample and one feature")]
    Empty,
    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite { what: &'static str, row: usize, col: usize },
    #[error("mask has no active feature")]
    EmptyMask,
    #[error("mask length {mask} does not match feature count {features}")]
    MaskLength { mask: usize, features: usize },
    #[error("masked system is rank deficient at feature {feature} (ridge_alpha = 0)")]
    RankDeficient { feature: usize },
    #[error("invalid STLSQ configuration: {0}")]
    InvalidConfig(String),
}

/// Design matrix `theta` (N x F) and regression targets (N x n).
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    theta: DMatrix<f64>,
    targets: DMatrix<f64>,
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<(), RegressionError> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(RegressionError::NonFinite { what, row: r, col: c });
            }
        }
    }
    Ok(())
}

impl RegressionProblem {
    pub fn new(theta: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self, RegressionError> {
        if theta.nrows() != targets.nrows() {
            return Err(RegressionError::RowMismatch {
                theta_rows: theta.nrows(),
                target_rows: targets.nrows(),
            });
        }
        if theta.nrows() == 0 || theta.ncols() == 0 || targets.ncols() == 0 {
            return Err(RegressionError::Empty);
        }
        check_finite(&theta, "feature matrix")?;
        check_finite(&targets, "targets")?;
        Ok(Self { theta, targets })
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn samples(&self) -> usize {
        self.theta.nrows()
    }

    pub fn features(&self) -> usize {
        self.theta.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlsqConfig {
    /// Coefficients with magnitude below this are set to zero.
    pub threshold: f64,
    /// Weight of the L2 penalty on the active coefficients.
    pub ridge_alpha: f64,
    pub max_iterations: usize,
    /// Solve in unit-norm column coordinates. Thresholding still applies to
    /// the coefficients in the original units.
    pub normalize_columns: bool,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        Self {
            threshold: 0.0009,
            ridge_alpha: 1e-6,
            max_iterations: 20,
            normalize_columns: false,
        }
    }
}

impl StlsqConfig {
    pub fn validate(&self) -> Result<(), RegressionError> {
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return Err(RegressionError::InvalidConfig(format!(
                "threshold must be finite and >= 0, got {}",
                self.threshold
            )));
        }
        if !(self.ridge_alpha >= 0.0) || !self.ridge_alpha.is_finite() {
            return Err(RegressionError::InvalidConfig(format!(
                "ridge_alpha must be finite and >= 0, got {}",
                self.ridge_alpha
            )));
        }
        if self.max_iterations == 0 {
            return Err(RegressionError::InvalidConfig(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Sparse F x n coefficient matrix (features x state dimensions).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    values: DMatrix<f64>,
    active: DMatrix<bool>,
}

impl CoefficientMatrix {
    pub fn zeros(features: usize, dims: usize) -> Self {
        Self {
            values: DMatrix::zeros(features, dims),
            active: DMatrix::from_element(features, dims, false),
        }
    }

    /// Wrap a dense matrix; the active mask is its nonzero pattern.
    pub fn from_values(values: DMatrix<f64>) -> Self {
        let active = values.map(|v| v != 0.0);
        Self { values, active }
    }

    fn set_column(&mut self, j: usize, values: &DVector<f64>, mask: &[bool]) {
        for i in 0..values.len() {
            self.values[(i, j)] = if mask[i] { values[i] } else { 0.0 };
            self.active[(i, j)] = mask[i];
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn active_mask(&self) -> &DMatrix<bool> {
        &self.active
    }

    pub fn features(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    /// P: total number of entries.
    pub fn parameter_count(&self) -> usize {
        self.values.len()
    }

    /// P': number of nonzero entries.
    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Per-target-column record of one STLSQ run.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDiagnostics {
    /// Number of ridge solves performed.
    pub iterations: usize,
    /// Active-set size before each solve; non-increasing.
    pub support_history: Vec<usize>,
    /// The active set stopped changing before the iteration cap.
    pub converged: bool,
    /// The cap was reached while the support was still shrinking; reported
    /// coefficients may then sit below the threshold.
    pub hit_iteration_cap: bool,
    /// Every coefficient was thresholded away; the column is all zero.
    pub empty_support: bool,
    /// Euclidean norm of `theta * w - y`.
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct StlsqResult {
    pub coefficients: CoefficientMatrix,
    pub diagnostics: Vec<ColumnDiagnostics>,
}

/// Minimize `|theta_m w_m - target|^2 + alpha |w_m|^2` over the features
/// selected by `mask`; masked-out entries of the result are exactly zero.
pub fn ridge_solve(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    alpha: f64,
    mask: &[bool],
) -> Result<DVector<f64>, RegressionError> {
    let features = theta.ncols();
    if mask.len() != features {
        return Err(RegressionError::MaskLength { mask: mask.len(), features });
    }
    if theta.nrows() == 0 || theta.nrows() != target.len() {
        return Err(RegressionError::RowMismatch {
            theta_rows: theta.nrows(),
            target_rows: target.len(),
        });
    }
    let active: Vec<usize> = (0..features).filter(|&i| mask[i]).collect();
    if active.is_empty() {
        return Err(RegressionError::EmptyMask);
    }
    let n = theta.nrows();
    let m = active.len();
    let extra = if alpha > 0.0 { m } else { 0 };
    // Ridge as an augmented least-squares problem [theta_m; sqrt(alpha) I],
    // which avoids squaring the condition number via normal equations.
    let mut a = DMatrix::zeros(n + extra, m);
    for (k, &col) in active.iter().enumerate() {
        a.view_mut((0, k), (n, 1)).copy_from(&theta.column(col));
        if extra > 0 {
            a[(n + k, k)] = alpha.sqrt();
        }
    }
    let mut b = DVector::zeros(n + extra);
    b.rows_mut(0, n).copy_from(target);
    let solved = lstsq_qr(a, &b).map_err(|k| RegressionError::RankDeficient {
        feature: active[k.min(m - 1)],
    })?;
    let mut w = DVector::zeros(features);
    for (k, &col) in active.iter().enumerate() {
        w[col] = solved[k];
    }
    Ok(w)
}

struct Scaled {
    theta: DMatrix<f64>,
    scale: Vec<f64>,
}

fn normalized(theta: &DMatrix<f64>) -> Scaled {
    let scale: Vec<f64> = theta
        .column_iter()
        .map(|c| {
            let norm = c.norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = theta.clone();
    for (j, s) in scale.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    Scaled { theta: scaled, scale }
}

fn solve_column(
    theta: &DMatrix<f64>,
    scaled: Option<&Scaled>,
    target: &DVector<f64>,
    config: &StlsqConfig,
) -> Result<(DVector<f64>, Vec<bool>, ColumnDiagnostics), RegressionError> {
    let features = theta.ncols();
    let solve = |mask: &[bool]| -> Result<DVector<f64>, RegressionError> {
        match scaled {
            Some(s) => {
                let mut w = ridge_solve(&s.theta, target, config.ridge_alpha, mask)?;
                for (i, sc) in s.scale.iter().enumerate() {
                    w[i] /= sc;
                }
                Ok(w)
            }
            None => ridge_solve(theta, target, config.ridge_alpha, mask),
        }
    };

    let mut mask = vec![true; features];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut empty = false;
    let mut w = DVector::zeros(features);

    while iterations < config.max_iterations {
        history.push(mask.iter().filter(|m| **m).count());
        w = solve(&mask)?;
        iterations += 1;
        let next: Vec<bool> = mask
            .iter()
            .zip(w.iter())
            .map(|(m, v)| *m && v.abs() >= config.threshold)
            .collect();
        if next == mask {
            converged = true;
            break;
        }
        if !next.iter().any(|m| *m) {
            empty = true;
            mask = next;
            w.fill(0.0);
            break;
        }
        if iterations == config.max_iterations {
            // Keep the last solve and its mask so the result is still a
            // fixed point of the inner solver.
            break;
        }
        mask = next;
    }

    let residual_norm = (theta * &w - target).norm();
    let diagnostics = ColumnDiagnostics {
        iterations,
        support_history: history,
        converged,
        hit_iteration_cap: !converged && !empty,
        empty_support: empty,
        residual_norm,
    };
    Ok((w, mask, diagnostics))
}

/// Run STLSQ on every target column.
pub fn stlsq(
    problem: &RegressionProblem,
    config: &StlsqConfig,
) -> Result<StlsqResult, RegressionError> {
    config.validate()?;
    let theta = problem.theta();
    let scaled = config.normalize_columns.then(|| normalized(theta));
    let mut coefficients = CoefficientMatrix::zeros(problem.features(), problem.targets().ncols());
    let mut diagnostics = Vec::with_capacity(problem.targets().ncols());
    for j in 0..problem.targets().ncols() {
        let target = problem.targets().column(j).into_owned();
        let (w, mask, diag) = solve_column(theta, scaled.as_ref(), &target, config)?;
        coefficients.set_column(j, &w, &mask);
        diagnostics.push(diag);
    }
    Ok(StlsqResult { coefficients, diagnostics })
}
