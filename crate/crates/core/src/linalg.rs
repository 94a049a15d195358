//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `(A + eps * s * I) x = b` where `s` is the mean diagonal of `A`
/// (or 1 when that is zero). Falls back to an SVD least-squares solve when
/// the shifted matrix is still not positive definite.
pub fn ridge_solve(mut a: DMatrix<f64>, b: &DVector<f64>, eps: f64) -> DVector<f64> {
    let n = a.nrows();
    let scale = if n == 0 { 1.0 } else { a.trace() / n as f64 };
    let shift = eps * if scale > 0.0 { scale } else { 1.0 };
    for i in 0..n {
        a[(i, i)] += shift;
    }
    match a.clone().cholesky() {
        Some(chol) => chol.solve(b),
        None => a
            .svd(true, true)
            .solve(b, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(n)),
    }
}

/// Least-squares solution of `x * beta ~ y` via SVD.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    svd.solve(y, tol).map_err(|e| Error::Singular(e.to_string()))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(sigma: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    check_symmetric(sigma, what)?;
    sigma
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

pub fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// Largest eigenvalue modulus of a square matrix.
///
/// Uses the real Schur form; if the QR iteration stalls (it can on very
/// sparse companion matrices) falls back to [`gelfand_radius`].
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let max_niter = 1000 * m.nrows();
    match nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, max_niter) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => gelfand_radius(m),
    }
}

/// `lim ||M^n||^(1/n)` by repeated normalized squaring.
pub fn gelfand_radius(m: &DMatrix<f64>) -> f64 {
    const SQUARINGS: i32 = 48;
    let mut b = m.clone();
    let mut log_scale = 0.0;
    let mut weight = 1.0;
    for _ in 0..SQUARINGS {
        let norm = b.norm();
        if norm == 0.0 {
            return 0.0;
        }
        b /= norm;
        log_scale += weight * norm.ln();
        b = &b * &b;
        weight *= 0.5;
    }
    let norm = b.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (log_scale + weight * norm.ln()).exp()
}

/// Natural log of the determinant of a symmetric positive definite matrix.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_of_rotation_block() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
        assert!((gelfand_radius(&m) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn gelfand_on_defective_and_nilpotent() {
        let m = DMatrix::from_row_slice(3, 3, &[0.9, 5.0, 0.0, 0.0, 0.3, 1.0, 0.0, 0.0, -0.2]);
        assert!((gelfand_radius(&m) - 0.9).abs() < 1e-9);
        let jordan = DMatrix::from_row_slice(2, 2, &[0.7, 1.0, 0.0, 0.7]);
        assert!((gelfand_radius(&jordan) - 0.7).abs() < 1e-9);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(gelfand_radius(&nil), 0.0);
    }

    #[test]
    fn log_det_matches_product() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!((log_det_spd(&m).unwrap() - 1.75f64.ln()).abs() < 1e-14);
        assert!(log_det_spd(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn ridge_solve_handles_singular_systems() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let x = ridge_solve(a, &b, 1e-10);
        assert!((x[0] + x[1] - 2.0).abs() < 1e-6);
    }
}
