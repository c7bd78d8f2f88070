use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::simplex::SimplexVector;

/// One mixture component: a weighted point cloud standing in for a
/// generator pushforward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixtureComponent(DiscreteDistribution);

impl MixtureComponent {
    pub fn new(support: DiscreteDistribution) -> Self {
        Self(support)
    }

    pub fn support(&self) -> &DiscreteDistribution {
        &self.0
    }

    pub fn weights(&self) -> SimplexVector {
        self.0.simplex_weights()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.0.mean()
    }
}

impl From<DiscreteDistribution> for MixtureComponent {
    fn from(d: DiscreteDistribution) -> Self {
        Self(d)
    }
}

/// `k` components together with their proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MixtureModel {
    components: Vec<MixtureComponent>,
    proportions: SimplexVector,
}

#[derive(Deserialize)]
struct RawModel {
    components: Vec<MixtureComponent>,
    proportions: SimplexVector,
}

impl TryFrom<RawModel> for MixtureModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        Self::new(raw.components, raw.proportions)
    }
}

impl MixtureModel {
    pub fn new(components: Vec<MixtureComponent>, proportions: SimplexVector) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::InvalidConfig("mixture needs at least one component".into()))?;
        if components.len() != proportions.len() {
            return Err(Error::LengthMismatch(components.len(), proportions.len()));
        }
        let dim = first.dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
        }
        Ok(Self { components, proportions })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn proportions(&self) -> &SimplexVector {
        &self.proportions
    }

    /// Realizes the mixture as a single empirical measure: the weight of a
    /// support point of component `i` is `proportions[i]` times its
    /// component weight.
    pub fn flatten(&self) -> DiscreteDistribution {
        let dim = self.dim();
        let total: usize = self.components.iter().map(|c| c.len()).sum();
        let mut coords = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        for (c, &pi) in self.components.iter().zip(self.proportions.as_slice()) {
            coords.extend_from_slice(c.support().coords());
            weights.extend(c.support().weights().iter().map(|w| pi * w));
        }
        DiscreteDistribution::from_flat(dim, coords, weights).expect("product of simplex weights is a simplex")
    }

    /// Index of the component owning each point of [`flatten`](Self::flatten).
    pub fn flat_owner(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .flat_map(|(i, c)| std::iter::repeat_n(i, c.len()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(coords: Vec<f64>, weights: Vec<f64>) -> MixtureComponent {
        DiscreteDistribution::from_flat(2, coords, weights).unwrap().into()
    }

    #[test]
    fn flatten_two_point_masses() {
        let m = MixtureModel::new(
            vec![comp(vec![0.0, 0.0], vec![1.0]), comp(vec![1.0, 1.0], vec![1.0])],
            SimplexVector::new(vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let f = m.flatten();
        assert_eq!(f.len(), 2);
        assert_eq!(f.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn flatten_single_component_is_identity() {
        let c = comp(vec![0.0, 0.0, 1.0, 2.0], vec![0.3, 0.7]);
        let m = MixtureModel::new(vec![c.clone()], SimplexVector::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(&m.flatten(), c.support());
    }

    #[test]
    fn flatten_three_components_block_masses() {
        let cs = (0..3)
            .map(|i| comp(vec![i as f64, 0.0, i as f64, 1.0], vec![0.5, 0.5]))
            .collect();
        let m = MixtureModel::new(cs, SimplexVector::new(vec![0.2, 0.3, 0.5]).unwrap()).unwrap();
        let f = m.flatten();
        assert_eq!(f.len(), 6);
        let total: f64 = f.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((f.weights()[0] + f.weights()[1] - 0.2).abs() < 1e-12);
        assert_eq!(m.flat_owner(), vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let c = comp(vec![0.0, 0.0], vec![1.0]);
        assert!(MixtureModel::new(vec![c], SimplexVector::uniform(2).unwrap()).is_err());
        assert!(MixtureModel::new(vec![], SimplexVector::uniform(1).unwrap()).is_err());
    }
}
