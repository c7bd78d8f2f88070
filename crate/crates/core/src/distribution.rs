use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{SimplexVector, WEIGHT_TOL};

/// A point in R^d with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Format("point has no coordinates".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(0));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Weighted point cloud in R^d: an empirical probability measure.
///
/// Coordinates are stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct DiscreteDistribution {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistribution {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        Self::from_flat(raw.dim, raw.coords, raw.weights)
    }
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyDataset)?;
        let dim = first.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
            }
            coords.extend_from_slice(p.coords());
        }
        Self::from_flat(dim, coords, weights)
    }

    /// Uniform weights `1/n` over the given points.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("dimension must be positive".into()));
        }
        if weights.is_empty() || coords.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::LengthMismatch(coords.len() / dim, weights.len()));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i / dim));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights("negative or non-finite weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { dim, coords, weights })
    }

    pub fn from_flat_uniform(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { coords.len() / dim };
        Self::from_flat(dim, coords, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn simplex_weights(&self) -> SimplexVector {
        SimplexVector::new(self.weights.clone()).expect("validated at construction")
    }

    /// Weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.points().zip(&self.weights) {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * pi;
            }
        }
        m
    }

    /// Weighted covariance (normalized by total weight), row-major `d × d`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mean = self.mean();
        let mut cov = vec![0.0; d * d];
        for (p, w) in self.points().zip(&self.weights) {
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += w * (p[a] - mean[a]) * (p[b] - mean[b]);
                }
            }
        }
        cov
    }

    pub(crate) fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            DiscreteDistribution::from_flat(2, vec![], vec![]),
            Err(Error::EmptyDataset)
        ));
        assert!(DiscreteDistribution::from_flat(2, vec![0.0, f64::NAN], vec![1.0]).is_err());
        assert!(DiscreteDistribution::from_flat(2, vec![0.0, 1.0], vec![0.9]).is_err());
        assert!(DiscreteDistribution::from_flat(2, vec![0.0, 1.0, 2.0], vec![1.0]).is_err());
        let pts = vec![Point::new(vec![0.0]).unwrap(), Point::new(vec![0.0, 1.0]).unwrap()];
        assert!(matches!(
            DiscreteDistribution::uniform(pts),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Point::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn moments() {
        let d = DiscreteDistribution::from_flat(2, vec![0.0, 0.0, 2.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(d.mean(), vec![1.0, 0.0]);
        assert_eq!(d.covariance(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn serde_revalidates() {
        let d = DiscreteDistribution::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<DiscreteDistribution>(&s).unwrap(), d);
        let bad = s.replace("0.5,0.5", "0.5,0.6");
        assert!(serde_json::from_str::<DiscreteDistribution>(&bad).is_err());
    }
}
