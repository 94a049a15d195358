//! Random sparse stable VARs with known support, for support-recovery and
//! end-to-end checks.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connectedness::matrix_rows;
use crate::error::{Error, Result};
use crate::varcore::{self, VarCoefficients};

pub const MAX_DRAW_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseVarDesign {
    pub k: usize,
    pub p: usize,
    /// Fraction of the `p K^2` lag coefficients that are nonzero.
    pub density: f64,
    /// Nonzero magnitudes are drawn uniformly from `[scale / 2, scale]`.
    pub scale: f64,
    /// Innovation standard deviation (diagonal covariance).
    pub noise_sd: f64,
}

impl SparseVarDesign {
    pub fn nonzeros(&self) -> usize {
        (self.density * (self.p * self.k * self.k) as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.p == 0 {
            return Err(Error::InvalidParameter("K and p must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::InvalidParameter(format!("density must lie in [0, 1], got {}", self.density)));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) || !(self.noise_sd > 0.0) {
            return Err(Error::InvalidParameter("scale must be >= 0 and noise_sd > 0".into()));
        }
        Ok(())
    }
}

/// Coefficients, innovation covariance and support of a synthetic draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub coeffs: VarCoefficients,
    #[serde(with = "matrix_rows")]
    pub sigma: DMatrix<f64>,
    /// `support[l][i][j]` is true when `A_{l+1}[i, j] != 0`.
    pub support: Vec<Vec<Vec<bool>>>,
    pub spectral_radius: f64,
}

/// Draws a stable sparse VAR, rejecting unstable draws.
pub fn draw_sparse_var(design: &SparseVarDesign, seed: u64) -> Result<SyntheticTruth> {
    design.validate()?;
    let (k, p) = (design.k, design.p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = p * k * k;
    let nnz = design.nonzeros();
    for _ in 0..MAX_DRAW_ATTEMPTS {
        let mut lags = vec![DMatrix::zeros(k, k); p];
        let mut picks = index::sample(&mut rng, total, nnz).into_vec();
        picks.sort_unstable();
        for pos in picks {
            let (l, rest) = (pos / (k * k), pos % (k * k));
            let magnitude = rng.random_range(0.5..=1.0) * design.scale;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            lags[l][(rest / k, rest % k)] = sign * magnitude;
        }
        let coeffs = VarCoefficients::new(DVector::zeros(k), lags)?;
        let stability = varcore::is_stable(&coeffs);
        if stability.stable {
            let support = coeffs
                .lags
                .iter()
                .map(|a| a.row_iter().map(|r| r.iter().map(|v| *v != 0.0).collect()).collect())
                .collect();
            return Ok(SyntheticTruth {
                sigma: DMatrix::identity(k, k) * design.noise_sd.powi(2),
                coeffs,
                support,
                spectral_radius: stability.spectral_radius,
            });
        }
    }
    Err(Error::InvalidParameter(format!(
        "no stable draw in {MAX_DRAW_ATTEMPTS} attempts; lower the coefficient scale (currently {})",
        design.scale
    )))
}

/// True/false positive rates of an estimated support against the truth,
/// over the `p K^2` lag coefficients.
pub fn support_rates(truth: &VarCoefficients, estimate: &VarCoefficients) -> (f64, f64) {
    let (mut tp, mut fp, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (a, b) in truth.lags.iter().zip(&estimate.lags) {
        for (t, e) in a.iter().zip(b.iter()) {
            if *t != 0.0 {
                pos += 1;
                tp += usize::from(*e != 0.0);
            } else {
                neg += 1;
                fp += usize::from(*e != 0.0);
            }
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (rate(tp, pos), rate(fp, neg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(density: f64) -> SparseVarDesign {
        SparseVarDesign {
            k: 5,
            p: 1,
            density,
            scale: 0.4,
            noise_sd: 1.0,
        }
    }

    #[test]
    fn draws_are_deterministic_and_stable() {
        let a = draw_sparse_var(&design(0.2), 7).unwrap();
        let b = draw_sparse_var(&design(0.2), 7).unwrap();
        assert_eq!(a, b);
        assert!(a.spectral_radius < 1.0);
        assert_eq!(a.coeffs.nonzero_count(), 5);
        assert_ne!(a, draw_sparse_var(&design(0.2), 8).unwrap());
    }

    #[test]
    fn zero_density_is_null_model() {
        let t = draw_sparse_var(&design(0.0), 1).unwrap();
        assert_eq!(t.coeffs.nonzero_count(), 0);
        assert!(t.support.iter().flatten().flatten().all(|s| !s));
    }

    #[test]
    fn impossible_scale_reports_error() {
        let d = SparseVarDesign {
            density: 1.0,
            scale: 5.0,
            ..design(1.0)
        };
        let err = draw_sparse_var(&d, 1).unwrap_err();
        assert!(err.to_string().contains("lower the coefficient scale"));
    }

    #[test]
    fn truth_json_round_trip() {
        let t = draw_sparse_var(&design(0.3), 3).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: SyntheticTruth = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rates() {
        let t = draw_sparse_var(&design(0.2), 4).unwrap();
        assert_eq!(support_rates(&t.coeffs, &t.coeffs), (1.0, 0.0));
        let empty = VarCoefficients::zeros(5, 1);
        assert_eq!(support_rates(&t.coeffs, &empty), (0.0, 0.0));
    }
}
