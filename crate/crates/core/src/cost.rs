use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};

/// Ground-cost exponent `p` in `‖x − y‖^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Exponent {
    #[default]
    One,
    Two,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::One => 1.0,
            Exponent::Two => 2.0,
        }
    }

    /// `‖a − b‖^p`.
    #[inline]
    pub fn cost(self, a: &[f64], b: &[f64]) -> f64 {
        let sq = squared_distance(a, b);
        match self {
            Exponent::One => sq.sqrt(),
            Exponent::Two => sq,
        }
    }
}

impl TryFrom<f64> for Exponent {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(Exponent::One)
        } else if p == 2.0 {
            Ok(Exponent::Two)
        } else {
            Err(Error::InvalidConfig(format!("exponent must be 1 or 2, got {p}")))
        }
    }
}

impl From<Exponent> for f64 {
    fn from(p: Exponent) -> f64 {
        p.value()
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Dense `n × m` matrix of ground costs between two supports.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    exponent: Exponent,
}

impl CostMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

/// Costs `‖a_i − b_j‖^p` between every pair of support points.
pub fn cost_matrix(a: &DiscreteDistribution, b: &DiscreteDistribution, exponent: Exponent) -> Result<CostMatrix> {
    a.check_dim(b)?;
    Ok(cost_between(a.coords(), b.coords(), a.dim(), exponent))
}

pub(crate) fn cost_between(a: &[f64], b: &[f64], dim: usize, exponent: Exponent) -> CostMatrix {
    let rows = a.len() / dim;
    let cols = b.len() / dim;
    let mut entries = Vec::with_capacity(rows * cols);
    for pa in a.chunks_exact(dim) {
        entries.extend(b.chunks_exact(dim).map(|pb| exponent.cost(pa, pb)));
    }
    CostMatrix { rows, cols, entries, exponent }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(coords: Vec<f64>) -> DiscreteDistribution {
        DiscreteDistribution::from_flat_uniform(2, coords).unwrap()
    }

    #[test]
    fn single_point_self_cost_is_zero() {
        let a = pts(vec![1.0, 2.0]);
        let c = cost_matrix(&a, &a, Exponent::One).unwrap();
        assert_eq!(c.as_slice(), &[0.0]);
    }

    #[test]
    fn three_four_five() {
        let a = pts(vec![0.0, 0.0]);
        let b = pts(vec![3.0, 4.0]);
        assert_eq!(cost_matrix(&a, &b, Exponent::One).unwrap().get(0, 0), 5.0);
        assert_eq!(cost_matrix(&a, &b, Exponent::Two).unwrap().get(0, 0), 25.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = pts(vec![0.0, 0.0]);
        let b = DiscreteDistribution::from_flat_uniform(3, vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(cost_matrix(&a, &b, Exponent::One), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!(Exponent::try_from(2.0).unwrap(), Exponent::Two);
        assert!(Exponent::try_from(1.5).is_err());
    }
}
