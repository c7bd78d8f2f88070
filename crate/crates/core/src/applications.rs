//! Two uses of the NW measure: a comparative two-sample test telling apart
//! proportion shifts from component shifts, and class reweighting of a
//! labeled source towards an unlabeled target.

use serde::{Deserialize, Serialize};

use crate::cost::Exponent;
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::mixture::MixtureComponent;
use crate::nw::{nw_measure, NwConfig};
use crate::ot::{mixture_transport, wasserstein, MixtureSupport, TransportPlan};
use crate::simplex::SimplexVector;

/// Default ratio below which NW counts as small relative to W.
pub const DEFAULT_LOW_RATIO: f64 = 0.2;
/// Default `low_w` as a fraction of `diameter^p` of the pooled data.
pub const DEFAULT_LOW_W_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Same,
    SameComponentsDifferentProportions,
    DifferentComponents,
}

impl Verdict {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Same => 10,
            Verdict::SameComponentsDifferentProportions => 11,
            Verdict::DifferentComponents => 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeVerdict {
    pub wasserstein: f64,
    pub nw: f64,
    /// `nw / wasserstein`, or 0 when W vanishes.
    pub ratio: f64,
    pub verdict: Verdict,
    pub low_w: f64,
    pub low_ratio: f64,
}

impl ComparativeVerdict {
    pub fn validate(&self) -> Result<()> {
        if decide(self.wasserstein, self.ratio, self.low_w, self.low_ratio) != self.verdict {
            return Err(Error::Format("verdict does not follow from the thresholds".into()));
        }
        Ok(())
    }
}

fn decide(w: f64, ratio: f64, low_w: f64, low_ratio: f64) -> Verdict {
    if w < low_w {
        Verdict::Same
    } else if ratio < low_ratio {
        Verdict::SameComponentsDifferentProportions
    } else {
        Verdict::DifferentComponents
    }
}

/// Largest pairwise distance over the pooled points of `x` and `y`.
pub fn diameter(x: &DiscreteDistribution, y: &DiscreteDistribution) -> f64 {
    let points: Vec<&[f64]> = x.points().chain(y.points()).collect();
    let mut best: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(Exponent::Two.cost(a, b));
        }
    }
    best.sqrt()
}

/// `DEFAULT_LOW_W_FRACTION · diameter^p`.
pub fn default_low_w(x: &DiscreteDistribution, y: &DiscreteDistribution, exponent: Exponent) -> f64 {
    DEFAULT_LOW_W_FRACTION * diameter(x, y).powf(exponent.value())
}

/// Small W means the same distribution; otherwise a small NW/W ratio
/// means shared components with different proportions, and a large one
/// means different components.
pub fn comparative_test(
    x: &DiscreteDistribution,
    y: &DiscreteDistribution,
    cfg: &NwConfig,
    low_w: f64,
    low_ratio: f64,
) -> Result<ComparativeVerdict> {
    if !(low_w > 0.0 && low_ratio > 0.0) {
        return Err(Error::InvalidConfig("low_w and low_ratio must be positive".into()));
    }
    let (w, _) = wasserstein(x, y, cfg.exponent)?;
    let nw = nw_measure(x, y, cfg)?.value;
    let ratio = if w > 0.0 { nw / w } else { 0.0 };
    Ok(ComparativeVerdict { wasserstein: w, nw, ratio, verdict: decide(w, ratio, low_w, low_ratio), low_w, low_ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaReport {
    pub estimated_pi: SimplexVector,
    /// `min over π of W(Σ π_c source_c, target)`.
    pub objective: f64,
    /// Plan mass joining a source class to a target point of another label.
    pub cross_mode_mass: f64,
    /// W between the pooled source and the target.
    pub baseline_objective: f64,
    pub baseline_cross_mode_mass: f64,
    pub plan: TransportPlan,
}

impl DaReport {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0 + 1e-9).contains(&self.cross_mode_mass)
            || !(0.0..=1.0 + 1e-9).contains(&self.baseline_cross_mode_mass)
        {
            return Err(Error::Format("cross-mode mass outside [0, 1]".into()));
        }
        if self.objective > self.baseline_objective + 1e-7 {
            return Err(Error::Format("reweighted objective exceeds the pooled baseline".into()));
        }
        self.plan.check_marginals()
    }
}

/// Splits a labeled dataset into one distribution per label `0..k`,
/// keeping the relative weights inside each class.
pub fn split_by_label(x: &DiscreteDistribution, labels: &[usize]) -> Result<Vec<DiscreteDistribution>> {
    if labels.len() != x.len() {
        return Err(Error::LengthMismatch(labels.len(), x.len()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut parts = vec![(Vec::new(), Vec::new()); k];
    for (i, &l) in labels.iter().enumerate() {
        parts[l].0.extend_from_slice(x.point(i));
        parts[l].1.push(x.weights()[i]);
    }
    parts
        .into_iter()
        .enumerate()
        .map(|(l, (coords, weights))| {
            let total: f64 = weights.iter().sum();
            if weights.is_empty() || total <= 0.0 {
                return Err(Error::InvalidConfig(format!("class {l} is empty")));
            }
            DiscreteDistribution::from_flat(x.dim(), coords, weights.iter().map(|w| w / total).collect())
        })
        .collect()
}

/// Reweights the source classes to best match the target: one exact LP in
/// the plan and the class proportions. The baseline pools the classes in
/// proportion to their point counts.
pub fn da_reweight(
    source_by_class: &[DiscreteDistribution],
    target: &DiscreteDistribution,
    target_labels: &[usize],
    exponent: Exponent,
) -> Result<DaReport> {
    if source_by_class.len() < 2 {
        return Err(Error::InvalidConfig("at least two source classes are needed".into()));
    }
    if target_labels.len() != target.len() {
        return Err(Error::LengthMismatch(target_labels.len(), target.len()));
    }
    let components: Vec<MixtureComponent> = source_by_class.iter().cloned().map(Into::into).collect();
    let support = MixtureSupport::from_components(&components)?;
    if support.dim != target.dim() {
        return Err(Error::DimensionMismatch { expected: support.dim, got: target.dim() });
    }
    let t = mixture_transport(target, &support, exponent, 0.0, None)?;
    let cross_mode_mass = cross_mass(&t.plan, target_labels, &support.group_of);

    let total: usize = source_by_class.iter().map(|c| c.len()).sum();
    let pooled_weights: Vec<f64> = source_by_class
        .iter()
        .flat_map(|c| {
            let share = c.len() as f64 / total as f64;
            c.weights().iter().map(move |w| w * share)
        })
        .collect();
    let pooled = DiscreteDistribution::from_flat(support.dim, support.coords.clone(), pooled_weights)?;
    let (baseline_objective, baseline_plan) = wasserstein(target, &pooled, exponent)?;
    let baseline_cross_mode_mass = cross_mass(&baseline_plan, target_labels, &support.group_of);

    Ok(DaReport {
        estimated_pi: SimplexVector::from_solver(t.proportions)?,
        objective: t.objective,
        cross_mode_mass,
        baseline_objective,
        baseline_cross_mode_mass,
        plan: t.plan,
    })
}

/// Mass of `plan` (target rows, source columns) between different labels.
fn cross_mass(plan: &TransportPlan, target_labels: &[usize], source_labels: &[usize]) -> f64 {
    plan.entries()
        .iter()
        .filter(|&&(i, j, _)| target_labels[i] != source_labels[j])
        .map(|&(_, _, f)| f)
        .sum::<f64>()
        .max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(coords: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::from_flat_uniform(1, coords.to_vec()).unwrap()
    }

    #[test]
    fn decision_table() {
        assert_eq!(decide(0.01, 0.9, 0.05, 0.2), Verdict::Same);
        assert_eq!(decide(1.0, 0.1, 0.05, 0.2), Verdict::SameComponentsDifferentProportions);
        assert_eq!(decide(1.0, 0.3, 0.05, 0.2), Verdict::DifferentComponents);
        assert_eq!(Verdict::DifferentComponents.exit_code(), 12);
    }

    #[test]
    fn identical_inputs_are_the_same() {
        let x = line(&[0.0, 1.0, 5.0, 6.0]);
        let cfg = NwConfig { restarts: 1, ..NwConfig::new(2) };
        let v = comparative_test(&x, &x, &cfg, default_low_w(&x, &x, Exponent::One), DEFAULT_LOW_RATIO).unwrap();
        assert_eq!(v.verdict, Verdict::Same);
        assert_eq!(v.wasserstein, 0.0);
        v.validate().unwrap();
    }

    #[test]
    fn diameter_of_a_line() {
        assert_eq!(diameter(&line(&[1.0, 3.0]), &line(&[-2.0])), 5.0);
    }

    #[test]
    fn reweighting_recovers_target_proportions() {
        let a = line(&[0.0, 0.1, 0.2, 0.3]);
        let b = line(&[10.0]);
        // target has 3 points near b and 1 near a
        let target = line(&[0.15, 10.0, 10.0, 10.0]);
        let r = da_reweight(&[a, b], &target, &[0, 1, 1, 1], Exponent::One).unwrap();
        assert!((r.estimated_pi[0] - 0.25).abs() < 1e-12);
        assert!(r.cross_mode_mass.abs() < 1e-12);
        // pooled source puts 0.8 on class 0, so 0.55 of it must cross
        assert!((r.baseline_cross_mode_mass - 0.55).abs() < 1e-12);
        r.validate().unwrap();
    }

    #[test]
    fn split_rejects_missing_class() {
        let x = line(&[0.0, 1.0]);
        assert!(split_by_label(&x, &[0, 2]).is_err());
        assert_eq!(split_by_label(&x, &[1, 0]).unwrap()[0].coords(), &[1.0]);
    }
}
