//! Seeded synthetic datasets: Gaussian mixtures and named presets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::alternate::derive_seed;
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::gaussian::GaussianComponent;
use crate::simplex::SimplexVector;

/// Every name accepted by [`preset`].
pub const PRESETS: [&str; 7] = [
    "grid9",
    "ring8_s1_d1",
    "ring8_s1_d2",
    "ring8_s2_d1",
    "ring8_s2_d2",
    "twomode_src",
    "twomode_tgt",
];

/// Radius of the ring presets.
pub const RING_RADIUS: f64 = 2.0;
const RING_VARIANCE: f64 = 0.02;
const GRID_COVARIANCE_SEED: u64 = 0x6772_6964_39;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogSpec {
    pub components: Vec<GaussianComponent>,
    pub proportions: SimplexVector,
    pub n_samples: usize,
    pub seed: u64,
}

impl MogSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidConfig("mixture needs at least one component".into()));
        }
        if self.components.len() != self.proportions.len() {
            return Err(Error::LengthMismatch(self.components.len(), self.proportions.len()));
        }
        let dim = self.components[0].dim();
        if let Some(c) = self.components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
        }
        if self.n_samples == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(())
    }
}

/// Draws `n_samples` points with uniform weights. Labels give the component
/// of every sample and are meant for evaluation only.
pub fn sample_mog(spec: &MogSpec) -> Result<(DiscreteDistribution, Vec<usize>)> {
    spec.validate()?;
    let dim = spec.components[0].dim();
    let factors: Vec<Vec<f64>> = spec.components.iter().map(|c| c.factor()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coords = Vec::with_capacity(spec.n_samples * dim);
    let mut labels = Vec::with_capacity(spec.n_samples);
    let mut z = vec![0.0; dim];
    for _ in 0..spec.n_samples {
        let label = categorical(spec.proportions.as_slice(), rng.random::<f64>());
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let c = &spec.components[label];
        let l = &factors[label];
        for r in 0..dim {
            let lz: f64 = (0..dim).map(|q| l[r * dim + q] * z[q]).sum();
            coords.push(c.mean()[r] + lz);
        }
        labels.push(label);
    }
    Ok((DiscreteDistribution::from_flat_uniform(dim, coords)?, labels))
}

fn categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// The generating mixture of a named preset.
pub fn preset_spec(name: &str, n: usize, seed: u64) -> Result<MogSpec> {
    let (components, proportions) = match name {
        "grid9" => grid9(),
        "ring8_s1_d1" | "ring8_s2_d1" => (ring(0.0)?, ring_weights(|i| i + 2.0)),
        "ring8_s1_d2" => (ring(0.0)?, ring_weights(|i| 11.0 - i)),
        "ring8_s2_d2" => (ring(PI / 8.0)?, ring_weights(|i| 11.0 - i)),
        "twomode_src" => (two_modes(0.0, 0.1)?, vec![0.8, 0.2]),
        "twomode_tgt" => (two_modes(1.0, 0.15)?, vec![0.2, 0.8]),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(MogSpec {
        components,
        proportions: SimplexVector::new(proportions)?,
        n_samples: n,
        seed: derive_seed(seed, name_hash(name)),
    })
}

/// Samples a named preset; deterministic in `(name, n, seed)`.
pub fn preset(name: &str, n: usize, seed: u64) -> Result<(DiscreteDistribution, Vec<usize>)> {
    sample_mog(&preset_spec(name, n, seed)?)
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a, stable across platforms and releases
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Means on `{−2, 0, 2}²` in row-major order with `π_i = i / 45`, and fixed
/// random covariances with eigenvalues in `[0.01, 0.05]`.
fn grid9() -> (Vec<GaussianComponent>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(GRID_COVARIANCE_SEED);
    let mut components = Vec::with_capacity(9);
    for i in 0..9 {
        let mean = vec![2.0 * (i % 3) as f64 - 2.0, 2.0 * (i / 3) as f64 - 2.0];
        let theta = rng.random_range(0.0..PI);
        let (e1, e2) = (rng.random_range(0.01..0.05), rng.random_range(0.01..0.05));
        let (c, s) = (theta.cos(), theta.sin());
        let cov = vec![
            e1 * c * c + e2 * s * s,
            (e1 - e2) * c * s,
            (e1 - e2) * c * s,
            e1 * s * s + e2 * c * c,
        ];
        components.push(GaussianComponent::new(mean, cov).expect("rotation of a positive diagonal"));
    }
    (components, (1..=9).map(|i| i as f64 / 45.0).collect())
}

/// Mode `i = 1..8` at angle `2πi/8 + offset`.
fn ring(offset: f64) -> Result<Vec<GaussianComponent>> {
    (1..=8)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / 8.0 + offset;
            GaussianComponent::isotropic(vec![RING_RADIUS * a.cos(), RING_RADIUS * a.sin()], RING_VARIANCE)
        })
        .collect()
}

fn ring_weights(f: impl Fn(f64) -> f64) -> Vec<f64> {
    (1..=8).map(|i| f(i as f64) / 52.0).collect()
}

fn two_modes(height: f64, variance: f64) -> Result<Vec<GaussianComponent>> {
    Ok(vec![
        GaussianComponent::isotropic(vec![-2.0, height], variance)?,
        GaussianComponent::isotropic(vec![2.0, height], variance)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_gaussian_mean() {
        let spec = MogSpec {
            components: vec![GaussianComponent::isotropic(vec![0.0, 0.0], 1.0).unwrap()],
            proportions: SimplexVector::new(vec![1.0]).unwrap(),
            n_samples: 1000,
            seed: 4,
        };
        let (data, labels) = sample_mog(&spec).unwrap();
        assert_eq!(data.len(), 1000);
        assert!(labels.iter().all(|&l| l == 0));
        // 3σ/√n ≈ 0.095 per coordinate
        assert!(data.mean().iter().all(|m| m.abs() < 0.15));
    }

    #[test]
    fn zero_proportion_never_drawn() {
        let spec = MogSpec {
            components: vec![
                GaussianComponent::isotropic(vec![0.0], 1.0).unwrap(),
                GaussianComponent::isotropic(vec![5.0], 1.0).unwrap(),
            ],
            proportions: SimplexVector::new(vec![1.0, 0.0]).unwrap(),
            n_samples: 500,
            seed: 1,
        };
        assert!(sample_mog(&spec).unwrap().1.iter().all(|&l| l == 0));
    }

    #[test]
    fn ring_proportions() {
        let d1 = preset_spec("ring8_s1_d1", 10, 0).unwrap();
        let d2 = preset_spec("ring8_s1_d2", 10, 0).unwrap();
        for i in 1..=8 {
            assert!((d1.proportions[i - 1] - (i as f64 + 2.0) / 52.0).abs() < 1e-15);
            assert!((d2.proportions[i - 1] - (11.0 - i as f64) / 52.0).abs() < 1e-15);
        }
        let shifted = preset_spec("ring8_s2_d2", 10, 0).unwrap();
        let a = shifted.components[7].mean();
        assert!((a[1].atan2(a[0]) - PI / 8.0).abs() < 1e-12);
    }

    #[test]
    fn presets_are_deterministic() {
        for name in PRESETS {
            assert_eq!(preset(name, 50, 3).unwrap(), preset(name, 50, 3).unwrap());
        }
        assert_ne!(preset("grid9", 50, 3).unwrap().0, preset("grid9", 50, 4).unwrap().0);
        assert!(matches!(preset("nope", 5, 0), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn grid9_frequencies() {
        let (_, labels) = preset("grid9", 5000, 7).unwrap();
        for i in 0..9 {
            let freq = labels.iter().filter(|&&l| l == i).count() as f64 / 5000.0;
            assert!((freq - (i + 1) as f64 / 45.0).abs() <= 0.03);
        }
    }
}
