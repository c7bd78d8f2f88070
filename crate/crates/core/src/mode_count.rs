//! Estimating the number of modes by sweeping NW(k) over k.
//!
//! With too few shared components some mode of `x` or `y` must be covered
//! by a component far away from it, so NW(k) stays large; once every mode
//! can have its own component NW(k) drops to the size of the overlap
//! mismatch. The selected k is the first one where the curve is small and
//! has just dropped by a large amount.

use serde::{Deserialize, Serialize};

use crate::alternate::{self, Alternator};
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::nw::{self, NwConfig};
use crate::ot::wasserstein;

/// Relative increase of NW(k+1) over NW(k) reported as a violation.
pub const MONOTONE_TOL: f64 = 0.05;

/// How the thresholds of a sweep were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `small = 0.1·W(x, y)` and `gap = 0.25·NW(k_min)`.
    Wasserstein,
    /// Used when `W(x, y)` vanishes, as in a self-sweep: `small =
    /// 1.25·NW(k_max)` and `gap = 0.15·NW(k_max)`, both relative to the
    /// sampling floor the curve levels off at.
    Floor,
    /// Both thresholds were given by the caller.
    Given,
}

/// Optional caller-provided thresholds; missing ones use the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepThresholds {
    pub small: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSweepReport {
    pub ks: Vec<usize>,
    pub nw_values: Vec<f64>,
    /// `NW(k−1) − NW(k)`; `None` for `k_min`.
    pub first_diffs: Vec<Option<f64>>,
    pub selected_k: usize,
    pub small_threshold: f64,
    pub gap_threshold: f64,
    /// Set when no k met both conditions.
    pub heuristic: bool,
    pub rule: ThresholdRule,
    pub wasserstein: f64,
    /// Every `k` with `NW(k) > (1 + MONOTONE_TOL)·NW(k−1)`.
    pub monotone_violations: Vec<usize>,
}

impl ModeSweepReport {
    pub fn validate(&self) -> Result<()> {
        let n = self.ks.len();
        if n == 0 || self.nw_values.len() != n || self.first_diffs.len() != n {
            return Err(Error::Format("sweep columns have different lengths".into()));
        }
        if !self.ks.contains(&self.selected_k) {
            return Err(Error::Format(format!("selected k = {} is not in the sweep", self.selected_k)));
        }
        if let Some(i) = self.nw_values.iter().position(|v| !v.is_finite() || *v < -1e-9) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }
}

/// Sweeps `k_min..=k_max` with the default thresholds.
pub fn nw_sweep(
    x: &DiscreteDistribution,
    y: &DiscreteDistribution,
    k_min: usize,
    k_max: usize,
    cfg: &NwConfig,
) -> Result<ModeSweepReport> {
    nw_sweep_with(x, y, k_min, k_max, cfg, SweepThresholds::default())
}

/// Sweeps `k_min..=k_max`. The total support size is held at
/// `points_per_component · k_max` for every k so that the curve reflects
/// mode structure rather than finer quantization. Every k uses the seeds of
/// `cfg` plus one extra candidate grown from the best solution at `k − 1`.
pub fn nw_sweep_with(
    x: &DiscreteDistribution,
    y: &DiscreteDistribution,
    k_min: usize,
    k_max: usize,
    cfg: &NwConfig,
    thresholds: SweepThresholds,
) -> Result<ModeSweepReport> {
    if k_min == 0 || k_min >= k_max {
        return Err(Error::InvalidConfig(format!("invalid k range {k_min}..={k_max}")));
    }
    if thresholds.small.is_some_and(|v| !(v >= 0.0)) || thresholds.gap.is_some_and(|v| !(v >= 0.0)) {
        return Err(Error::InvalidConfig("thresholds must be non-negative".into()));
    }
    x.check_dim(y)?;
    let available = alternate::pooled_count(&[x, y]);
    if available < k_max {
        return Err(Error::InvalidConfig(format!(
            "k = {k_max} exceeds the {available} support points available"
        )));
    }
    let (w, _) = wasserstein(x, y, cfg.exponent)?;

    let ks: Vec<usize> = (k_min..=k_max).collect();
    let mut nw_values = Vec::with_capacity(ks.len());
    let mut previous: Option<alternate::Outcome> = None;
    for &k in &ks {
        let m = (cfg.points_per_component * k_max + k / 2) / k;
        let kcfg = NwConfig { k, points_per_component: m, ..cfg.clone() };
        kcfg.validate()?;
        let init = match &previous {
            Some(p) => {
                let alt = Alternator::new(vec![x, y], cfg.exponent, cfg.proportion_floor)?;
                let grown = alternate::grow(&alt, &p.components, &p.transports);
                Some(alternate::resample(&grown, m, x.dim(), alternate::derive_seed(cfg.seed, k as u64)))
            }
            None => None,
        };
        let best = nw::run_restarts(x, y, &kcfg, init)?;
        nw_values.push(alternate::objective(&best.transports));
        previous = Some(best);
    }

    let first_diffs: Vec<Option<f64>> =
        (0..ks.len()).map(|i| (i > 0).then(|| nw_values[i - 1] - nw_values[i])).collect();
    let monotone_violations = (1..ks.len())
        .filter(|&i| nw_values[i] > nw_values[i - 1] * (1.0 + MONOTONE_TOL) + 1e-12)
        .map(|i| ks[i])
        .collect();

    let floor = *nw_values.last().unwrap();
    let vanishing = w <= 1e-9 * (1.0 + nw_values[0]);
    let rule = match thresholds {
        SweepThresholds { small: Some(_), gap: Some(_) } => ThresholdRule::Given,
        _ if vanishing => ThresholdRule::Floor,
        _ => ThresholdRule::Wasserstein,
    };
    let (small, gap) = if vanishing { (1.25 * floor, 0.15 * floor) } else { (0.1 * w, 0.25 * nw_values[0]) };
    let small_threshold = thresholds.small.unwrap_or(small);
    let gap_threshold = thresholds.gap.unwrap_or(gap);

    let (selected_k, heuristic) = select(&ks, &nw_values, &first_diffs, small_threshold, gap_threshold);
    let report = ModeSweepReport {
        ks,
        nw_values,
        first_diffs,
        selected_k,
        small_threshold,
        gap_threshold,
        heuristic,
        rule,
        wasserstein: w,
        monotone_violations,
    };
    Ok(report)
}

/// The first k meeting both conditions (`k_min` needs only the first);
/// otherwise the largest drop among the small values, or overall.
fn select(ks: &[usize], nw: &[f64], diffs: &[Option<f64>], small: f64, gap: f64) -> (usize, bool) {
    for i in 0..ks.len() {
        if nw[i] <= small && diffs[i].is_none_or(|d| d >= gap) {
            return (ks[i], false);
        }
    }
    let drop = |i: usize| diffs[i].unwrap_or(f64::NEG_INFINITY);
    let pick = |cands: Vec<usize>| {
        cands.into_iter().fold(None, |best: Option<usize>, i| match best {
            Some(b) if drop(b) >= drop(i) => Some(b),
            _ => Some(i),
        })
    };
    let small_ones: Vec<usize> = (0..ks.len()).filter(|&i| nw[i] <= small).collect();
    let i = pick(small_ones).or_else(|| pick((0..ks.len()).collect())).unwrap();
    (ks[i], true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_rule() {
        let ks = [1, 2, 3, 4];
        let nw = [4.0, 2.0, 0.1, 0.09];
        let diffs = [None, Some(2.0), Some(1.9), Some(0.01)];
        assert_eq!(select(&ks, &nw, &diffs, 0.2, 1.0), (3, false));
        assert_eq!(select(&ks, &nw, &diffs, 5.0, 1.0), (1, false));
        // nothing drops enough: the largest drop among the small values
        assert_eq!(select(&ks, &nw, &diffs, 0.2, 3.0), (3, true));
        // nothing small: the largest drop overall
        assert_eq!(select(&ks, &nw, &diffs, 0.01, 3.0), (2, true));
    }

    #[test]
    fn rejects_bad_ranges() {
        let x = DiscreteDistribution::from_flat_uniform(1, vec![0.0, 1.0]).unwrap();
        let cfg = NwConfig::default();
        assert!(nw_sweep(&x, &x, 0, 2, &cfg).is_err());
        assert!(nw_sweep(&x, &x, 2, 2, &cfg).is_err());
        assert!(nw_sweep(&x, &x, 1, 5, &cfg).is_err());
    }

    #[test]
    fn overlapping_point_modes() {
        // x has modes {a, b}, y has {a', c} with |a − a'| = 0.1
        let x = DiscreteDistribution::from_flat_uniform(2, vec![0.0, 0.0, 4.0, 0.0]).unwrap();
        let y = DiscreteDistribution::from_flat_uniform(2, vec![0.1, 0.0, 0.0, 4.0]).unwrap();
        let r = nw_sweep(&x, &y, 1, 4, &NwConfig::default()).unwrap();
        assert_eq!(r.selected_k, 3);
        assert!(r.nw_values[2] <= 0.1 + 1e-6);
        assert!(r.nw_values[1] >= 0.5 * 3.9 * 0.5 - 1e-6);
    }
}
