use nalgebra::{DMatrix, DVector};

/// Smallest |R_ii| relative to the largest that still counts as full rank.
fn rank_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Least-squares solution of `a * x = b` through a Householder QR.
///
/// Returns `Err(column)` naming the first pivot that falls below the rank
/// tolerance when the system is (numerically) rank deficient.
pub(crate) fn lstsq_qr(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, usize> {
    let (rows, cols) = a.shape();
    if rows < cols {
        return Err(rows);
    }
    let qr = a.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = rank_tolerance(rows, cols) * scale;
    if let Some(col) = (0..cols).find(|&i| r[(i, i)].abs() <= tol) {
        return Err(col);
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb).ok_or(cols.saturating_sub(1))
}
