//! Numerical time derivatives of sampled state sequences.
//!
//! States are stored one sample per row. Every method returns an estimate of
//! the same shape together with the row range where it is fully accurate.

use std::ops::Range;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DifferentiationError {
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("dt must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("window must be odd and >= 3, got {0}")]
    InvalidWindow(usize),
    #[error("poly_order must satisfy 1 <= poly_order < window, got {order} for window {window}")]
    InvalidOrder { order: usize, window: usize },
    #[error("non-finite derivative at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    pub values: DMatrix<f64>,
    /// Rows computed with the full centred stencil.
    pub valid_range: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Differentiator {
    /// Local least-squares polynomial (Savitzky-Golay) derivative.
    Smoothed { window: usize, poly_order: usize },
    /// Second order central differences, one-sided at the ends.
    Central,
    /// `(x[t+1] - x[t]) / dt`; the last row repeats the backward difference.
    Forward,
}

impl Default for Differentiator {
    fn default() -> Self {
        Differentiator::Smoothed { window: 7, poly_order: 3 }
    }
}

impl Differentiator {
    /// Smallest sequence length the method accepts.
    pub fn min_samples(&self) -> usize {
        match self {
            Differentiator::Smoothed { window, .. } => *window,
            Differentiator::Central => 3,
            Differentiator::Forward => 2,
        }
    }

    pub fn apply(&self, states: &DMatrix<f64>, dt: f64) -> Result<DerivativeEstimate, DifferentiationError> {
        match *self {
            Differentiator::Smoothed { window, poly_order } => {
                smoothed_finite_difference(states, dt, window, poly_order)
            }
            Differentiator::Central => central_difference(states, dt),
            Differentiator::Forward => forward_difference(states, dt),
        }
    }
}

fn check_common(states: &DMatrix<f64>, dt: f64, needed: usize) -> Result<(), DifferentiationError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DifferentiationError::InvalidStep(dt));
    }
    if states.nrows() < needed {
        return Err(DifferentiationError::TooShort { needed, got: states.nrows() });
    }
    Ok(())
}

fn finite(values: DMatrix<f64>, valid_range: Range<usize>) -> Result<DerivativeEstimate, DifferentiationError> {
    for c in 0..values.ncols() {
        for r in 0..values.nrows() {
            if !values[(r, c)].is_finite() {
                return Err(DifferentiationError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(DerivativeEstimate { values, valid_range })
}

/// Weights `w` such that `sum_j w[j] * y[j]` is the slope at sample `eval`
/// of the least-squares polynomial through `window` unit-spaced samples.
fn slope_weights(window: usize, order: usize, eval: usize) -> Vec<f64> {
    let vander = DMatrix::from_fn(window, order + 1, |j, k| (j as f64 - eval as f64).powi(k as i32));
    // Well conditioned for the small windows used here.
    let pinv = vander
        .pseudo_inverse(1e-12)
        .expect("Vandermonde pseudo-inverse");
    pinv.row(1).iter().copied().collect()
}

pub fn smoothed_finite_difference(
    states: &DMatrix<f64>,
    dt: f64,
    window: usize,
    poly_order: usize,
) -> Result<DerivativeEstimate, DifferentiationError> {
    if window < 3 || window % 2 == 0 {
        return Err(DifferentiationError::InvalidWindow(window));
    }
    if poly_order == 0 || poly_order >= window {
        return Err(DifferentiationError::InvalidOrder { order: poly_order, window });
    }
    check_common(states, dt, window)?;
    let rows = states.nrows();
    let half = window / 2;
    let weights: Vec<Vec<f64>> = (0..window).map(|e| slope_weights(window, poly_order, e)).collect();

    let mut out = DMatrix::zeros(rows, states.ncols());
    for t in 0..rows {
        let (start, eval) = if t < half {
            (0, t)
        } else if t + half >= rows {
            (rows - window, t + window - rows)
        } else {
            (t - half, half)
        };
        let w = &weights[eval];
        for c in 0..states.ncols() {
            let mut acc = 0.0;
            for (j, wj) in w.iter().enumerate() {
                acc += wj * states[(start + j, c)];
            }
            out[(t, c)] = acc / dt;
        }
    }
    finite(out, half..rows - half)
}

pub fn central_difference(states: &DMatrix<f64>, dt: f64) -> Result<DerivativeEstimate, DifferentiationError> {
    check_common(states, dt, 3)?;
    let rows = states.nrows();
    let mut out = DMatrix::zeros(rows, states.ncols());
    for c in 0..states.ncols() {
        let x = states.column(c);
        out[(0, c)] = (x[1] - x[0]) / dt;
        for t in 1..rows - 1 {
            out[(t, c)] = (x[t + 1] - x[t - 1]) / (2.0 * dt);
        }
        out[(rows - 1, c)] = (x[rows - 1] - x[rows - 2]) / dt;
    }
    finite(out, 1..rows - 1)
}

pub fn forward_difference(states: &DMatrix<f64>, dt: f64) -> Result<DerivativeEstimate, DifferentiationError> {
    check_common(states, dt, 2)?;
    let rows = states.nrows();
    let mut out = DMatrix::zeros(rows, states.ncols());
    for c in 0..states.ncols() {
        let x = states.column(c);
        for t in 0..rows - 1 {
            out[(t, c)] = (x[t + 1] - x[t]) / dt;
        }
        out[(rows - 1, c)] = out[(rows - 2, c)];
    }
    finite(out, 0..rows - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sampled(n: usize, dt: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, 1, |r, _| f(r as f64 * dt))
    }

    #[test]
    fn constant_sequence_has_zero_derivative() {
        let x = DMatrix::from_element(12, 2, 5.0);
        for d in [Differentiator::default(), Differentiator::Central, Differentiator::Forward] {
            let est = d.apply(&x, 0.3).unwrap();
            assert!(est.values.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn ramp_is_exact() {
        let x = sampled(20, 0.1, |t| 2.0 * t);
        let est = smoothed_finite_difference(&x, 0.1, 7, 3).unwrap();
        assert_eq!(est.valid_range, 3..17);
        for r in est.valid_range.clone() {
            assert!((est.values[(r, 0)] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn smoothed_sine_matches_cosine() {
        let dt = 0.02;
        let x = sampled(200, dt, f64::sin);
        let est = smoothed_finite_difference(&x, dt, 7, 3).unwrap();
        let err = est
            .valid_range
            .clone()
            .map(|r| (est.values[(r, 0)] - (r as f64 * dt).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-4, "max error {err}");
    }

    #[test]
    fn central_examples() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let est = central_difference(&x, 1.0).unwrap();
        assert_eq!(est.values.as_slice(), &[1.0, 1.0, 1.0]);

        let dt = 0.5;
        let x = sampled(9, dt, |t| t * t);
        let est = central_difference(&x, dt).unwrap();
        for r in est.valid_range.clone() {
            assert!((est.values[(r, 0)] - 2.0 * r as f64 * dt).abs() < 1e-12);
        }

        let dt = 0.01;
        let x = sampled(100, dt, f64::sin);
        let est = central_difference(&x, dt).unwrap();
        for r in est.valid_range.clone() {
            assert!((est.values[(r, 0)] - (r as f64 * dt).cos()).abs() <= dt * dt);
        }
    }

    #[test]
    fn errors() {
        let x = DMatrix::zeros(5, 1);
        assert_eq!(
            smoothed_finite_difference(&x, 0.1, 7, 3),
            Err(DifferentiationError::TooShort { needed: 7, got: 5 })
        );
        assert_eq!(
            smoothed_finite_difference(&x, 0.1, 4, 2),
            Err(DifferentiationError::InvalidWindow(4))
        );
        assert!(matches!(
            smoothed_finite_difference(&x, 0.1, 5, 5),
            Err(DifferentiationError::InvalidOrder { .. })
        ));
        assert_eq!(central_difference(&x, 0.0), Err(DifferentiationError::InvalidStep(0.0)));
        assert!(matches!(
            central_difference(&DMatrix::zeros(2, 1), 1.0),
            Err(DifferentiationError::TooShort { .. })
        ));
    }

    #[test]
    fn central_difference_is_second_order() {
        let f = |t: f64| (1.3 * t).sin() + 0.2 * t * t * t;
        let df = |t: f64| 1.3 * (1.3 * t).cos() + 0.6 * t * t;
        let interior_error = |dt: f64| {
            let n = (2.0 / dt).round() as usize + 1;
            let est = central_difference(&sampled(n, dt, f), dt).unwrap();
            est.valid_range
                .clone()
                .map(|r| (est.values[(r, 0)] - df(r as f64 * dt)).abs())
                .fold(0.0, f64::max)
        };
        let coarse = interior_error(0.02);
        let fine = interior_error(0.01);
        assert!(coarse / fine >= 3.5, "ratio {}", coarse / fine);
    }

    proptest! {
        #[test]
        fn smoothed_is_exact_on_polynomials(
            coeffs in proptest::collection::vec(-3.0f64..3.0, 4),
            order in 1usize..4,
            half in 2usize..5,
            dt in 0.01f64..0.5,
        ) {
            let window = 2 * half + 1;
            let order = order.min(window - 1);
            let c = &coeffs[..=order];
            let poly = |t: f64| c.iter().enumerate().map(|(k, ck)| ck * t.powi(k as i32)).sum::<f64>();
            let dpoly = |t: f64| c.iter().enumerate().skip(1).map(|(k, ck)| k as f64 * ck * t.powi(k as i32 - 1)).sum::<f64>();
            let n = window + 6;
            let x = sampled(n, dt, poly);
            let est = smoothed_finite_difference(&x, dt, window, order).unwrap();
            // Boundary rows use shifted windows of the same order, so they are exact too.
            for r in 0..n {
                let want = dpoly(r as f64 * dt);
                prop_assert!((est.values[(r, 0)] - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn differentiation_is_linear(
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
            xs in proptest::collection::vec(-10.0f64..10.0, 12),
            ys in proptest::collection::vec(-10.0f64..10.0, 12),
        ) {
            let x = DMatrix::from_column_slice(12, 1, &xs);
            let y = DMatrix::from_column_slice(12, 1, &ys);
            let combo = &x * a + &y * b;
            for d in [Differentiator::default(), Differentiator::Central, Differentiator::Forward] {
                let lhs = d.apply(&combo, 0.1).unwrap().values;
                let rhs = d.apply(&x, 0.1).unwrap().values * a + d.apply(&y, 0.1).unwrap().values * b;
                prop_assert!((lhs - rhs).amax() < 1e-9);
            }
        }
    }
}
