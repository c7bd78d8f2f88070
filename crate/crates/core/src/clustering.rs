//! Clustering with a fitted mixture: every point goes to the component
//! with the nearest support point, and the labels are scored against a
//! reference labelling by purity, NMI and ARI.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::squared_distance;
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::fitting::{fit_mixture, FitConfig, FitResult};
use crate::mixture::MixtureModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// Squared distance from each point to the nearest support point of its
    /// component.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub purity: f64,
    /// Mutual information over the arithmetic mean of the two entropies.
    pub nmi: f64,
    pub ari: f64,
}

/// Labels every point with the component holding its nearest support point;
/// ties go to the lower component index.
pub fn assign(x: &DiscreteDistribution, model: &MixtureModel) -> Result<ClusterAssignment> {
    if x.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.dim() });
    }
    let (labels, distances) = x
        .points()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (g, c) in model.components().iter().enumerate() {
                let d = c.support().points().map(|s| squared_distance(p, s)).fold(f64::INFINITY, f64::min);
                if d < best.1 {
                    best = (g, d);
                }
            }
            best
        })
        .unzip();
    Ok(ClusterAssignment { labels, distances })
}

/// Fits a mixture to `x` and assigns every point to a component.
pub fn cluster(x: &DiscreteDistribution, cfg: &FitConfig) -> Result<(FitResult, ClusterAssignment)> {
    let fit = fit_mixture(x, cfg)?;
    let assignment = assign(x, &fit.model)?;
    Ok((fit, assignment))
}

/// Purity, NMI and ARI of `pred` against `truth`. Label values are
/// arbitrary; only the partitions matter.
pub fn score(pred: &[usize], truth: &[usize]) -> Result<ClusterScores> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = pred.len() as f64;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *table.entry((p, t)).or_default() += 1.0;
        *rows.entry(p).or_default() += 1.0;
        *cols.entry(t).or_default() += 1.0;
    }

    let mut majority: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(p, _), &c) in &table {
        let m = majority.entry(p).or_default();
        *m = m.max(c);
    }
    let purity = majority.values().sum::<f64>() / n;

    let entropy = |counts: &BTreeMap<usize, f64>| -> f64 {
        counts.values().map(|&c| -(c / n) * (c / n).ln()).sum()
    };
    let (hp, ht) = (entropy(&rows), entropy(&cols));
    let mi: f64 = table.iter().map(|(&(p, t), &c)| (c / n) * (c * n / (rows[&p] * cols[&t])).ln()).sum();
    let nmi = if hp + ht <= 0.0 { 1.0 } else { (2.0 * mi / (hp + ht)).clamp(0.0, 1.0) };

    let pairs = |c: f64| c * (c - 1.0) / 2.0;
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_rows * sum_cols / pairs(n);
    let max = 0.5 * (sum_rows + sum_cols);
    let ari = if max == expected { 1.0 } else { (index - expected) / (max - expected) };

    Ok(ClusterScores { purity, nmi, ari })
}
