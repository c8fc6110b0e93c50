//! Small dense linear solves for the Newton drivers.

use nalgebra::{DMatrix, DVector};

/// Solve `J s = -r`. Falls back to an SVD least-squares step when the LU
/// factorization is singular or produces a non-finite step, which happens at
/// transcritical points where the augmented Jacobian is structurally singular.
pub fn newton_step(j: &DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let rhs = -r;
    if let Some(s) = j.clone().lu().solve(&rhs) {
        if s.iter().all(|v| v.is_finite()) {
            return Some(s);
        }
    }
    lstsq(j, &rhs)
}

/// Minimum-norm least-squares solution of `J s = rhs` via SVD.
pub fn lstsq(j: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = j.clone().svd(true, true);
    let eps = 1e-13 * svd.singular_values.max().max(1.0);
    match svd.solve(rhs, eps) {
        Ok(s) if s.iter().all(|v| v.is_finite()) => Some(s),
        _ => None,
    }
}
