use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYM_TOL: f64 = 1e-9;

/// Gaussian with a symmetric positive-semidefinite covariance, used to
/// generate synthetic mixture data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian")]
pub struct GaussianComponent {
    mean: Vec<f64>,
    /// Row-major `d × d`.
    covariance: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

impl TryFrom<RawGaussian> for GaussianComponent {
    type Error = Error;

    fn try_from(raw: RawGaussian) -> Result<Self> {
        Self::new(raw.mean, raw.covariance)
    }
}

impl GaussianComponent {
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidConfig("gaussian mean is empty".into()));
        }
        if covariance.len() != d * d {
            return Err(Error::LengthMismatch(covariance.len(), d * d));
        }
        if mean.iter().chain(&covariance).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite gaussian parameter".into()));
        }
        for a in 0..d {
            for b in 0..a {
                if (covariance[a * d + b] - covariance[b * d + a]).abs() > SYM_TOL {
                    return Err(Error::InvalidConfig("covariance is not symmetric".into()));
                }
            }
        }
        let min_eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &covariance))
            .eigenvalues
            .min();
        if min_eig < -SYM_TOL {
            return Err(Error::InvalidConfig(format!(
                "covariance is not positive semidefinite (eigenvalue {min_eig})"
            )));
        }
        Ok(Self { mean, covariance })
    }

    /// Isotropic Gaussian `N(mean, variance · I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for a in 0..d {
            cov[a * d + a] = variance;
        }
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// A matrix `L` (row-major) with `L Lᵀ = Σ`, built from the symmetric
    /// eigendecomposition so semidefinite covariances are supported.
    pub fn factor(&self) -> Vec<f64> {
        let d = self.dim();
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &self.covariance));
        let mut l = vec![0.0; d * d];
        for a in 0..d {
            for c in 0..d {
                l[a * d + c] = eig.eigenvectors[(a, c)] * eig.eigenvalues[c].max(0.0).sqrt();
            }
        }
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_covariance() {
        assert!(GaussianComponent::new(vec![0.0, 0.0], vec![1.0, 0.5, 0.5, 1.0]).is_ok());
        assert!(GaussianComponent::new(vec![0.0, 0.0], vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(GaussianComponent::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        // semidefinite is fine
        assert!(GaussianComponent::new(vec![0.0, 0.0], vec![1.0, 1.0, 1.0, 1.0]).is_ok());
        assert!(GaussianComponent::new(vec![0.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn factor_reproduces_covariance() {
        let g = GaussianComponent::new(vec![0.0, 0.0], vec![2.0, 0.3, 0.3, 0.5]).unwrap();
        let l = g.factor();
        for a in 0..2 {
            for b in 0..2 {
                let v: f64 = (0..2).map(|c| l[a * 2 + c] * l[b * 2 + c]).sum();
                assert!((v - g.covariance()[a * 2 + b]).abs() < 1e-12);
            }
        }
    }
}
