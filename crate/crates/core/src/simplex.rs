use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for every weight/proportion validity check.
pub const WEIGHT_TOL: f64 = 1e-9;

/// A probability vector: nonnegative entries summing to one.
///
/// Construction validates and never renormalizes; use
/// [`SimplexVector::normalized`] when renormalization is explicitly wanted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidWeights("empty probability vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidWeights(format!("entry {v} is negative or non-finite")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidWeights(format!("entries sum to {sum}, expected 1")));
        }
        Ok(Self(values))
    }

    /// Uniform vector of length `k`.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidWeights("empty probability vector".into()));
        }
        Ok(Self(vec![1.0 / k as f64; k]))
    }

    /// Divides nonnegative finite values by their (positive) sum.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights("negative or non-finite entry".into()));
        }
        let sum: f64 = values.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidWeights("entries sum to zero".into()));
        }
        Self::new(values.into_iter().map(|v| v / sum).collect())
    }

    /// Clamps tiny negative round-off and rescales. Used on solver output
    /// whose entries are already a probability vector up to ~1e-12.
    pub(crate) fn from_solver(values: Vec<f64>) -> Result<Self> {
        Self::normalized(values.into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(v: SimplexVector) -> Self {
        v.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_probability_vectors() {
        assert!(SimplexVector::new(vec![0.2, 0.3, 0.5]).is_ok());
        assert!(SimplexVector::new(vec![1.0]).is_ok());
        assert!(SimplexVector::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn rejects_instead_of_normalizing() {
        assert!(SimplexVector::new(vec![1.0, 1.0]).is_err());
        assert!(SimplexVector::new(vec![0.5, 0.5 + 1e-8]).is_err());
        assert!(SimplexVector::new(vec![1.1, -0.1]).is_err());
        assert!(SimplexVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(SimplexVector::new(vec![]).is_err());
    }

    #[test]
    fn tolerance_is_absolute_1e9() {
        assert!(SimplexVector::new(vec![0.5, 0.5 + 5e-10]).is_ok());
    }

    #[test]
    fn explicit_normalization() {
        let v = SimplexVector::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.25, 0.75]);
        assert!(SimplexVector::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn deserialization_validates() {
        let ok: SimplexVector = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(ok.len(), 2);
        assert!(serde_json::from_str::<SimplexVector>("[0.3,0.3]").is_err());
    }
}
