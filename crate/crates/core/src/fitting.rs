//! Fitting a mixture to one dataset by minimizing `W(x, P_{G,π})`,
//! optionally minus a diversity bonus `λ Σ_{i>j} π_i π_j W(G_i, G_j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alternate::{self, blend, derive_seed, Alternator, Component, ComponentModel, Outcome};
use crate::cost::{squared_distance, Exponent};
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::gaussian::GaussianComponent;
use crate::mixture::{MixtureComponent, MixtureModel};
use crate::nw::{pick_best, TRACE_TOL};
use crate::ot::{solve_ot, MixtureTransport};
use crate::simplex::SimplexVector;

const LINE_SEARCH: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub k: usize,
    pub exponent: Exponent,
    pub lambda_reg: f64,
    pub points_per_component: usize,
    pub max_outer_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
    pub proportion_floor: f64,
    pub component_model: ComponentModel,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 1,
            exponent: Exponent::One,
            lambda_reg: 0.0,
            points_per_component: 32,
            max_outer_iters: 100,
            tol: 1e-6,
            seed: 0,
            restarts: 5,
            proportion_floor: 0.0,
            component_model: ComponentModel::Affine,
        }
    }
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::InvalidConfig("lambda_reg must be a finite nonnegative number".into()));
        }
        if self.max_outer_iters == 0 || self.restarts == 0 || self.points_per_component == 0 {
            return Err(Error::InvalidConfig(
                "max_outer_iters, restarts and points_per_component must be positive".into(),
            ));
        }
        if !(self.proportion_floor >= 0.0 && self.proportion_floor * self.k as f64 <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "proportion floor {} is infeasible for k = {}",
                self.proportion_floor, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MixtureModel,
    /// `W(x, P_{G,π}) − λ R`.
    pub objective: f64,
    /// `W(x, P_{G,π})` alone.
    pub transport_cost: f64,
    /// `R = Σ_{i>j} π_i π_j W(G_i, G_j)`.
    pub regularizer_value: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl FitResult {
    pub fn validate(&self, lambda_reg: f64) -> Result<()> {
        if (self.transport_cost - lambda_reg * self.regularizer_value - self.objective).abs() > 1e-6 {
            return Err(Error::Format("objective does not match its parts".into()));
        }
        if crate::nw::max_increase(&self.trace) > TRACE_TOL {
            return Err(Error::Format("trace is not non-increasing".into()));
        }
        Ok(())
    }
}

/// `Σ_{i>j} π_i π_j W(G_i, G_j)` by exact transport between components.
pub fn regularizer_value(model: &MixtureModel, exponent: Exponent) -> Result<f64> {
    let pi = model.proportions().as_slice();
    let c = model.components();
    let mut total = 0.0;
    for i in 0..c.len() {
        for j in 0..i {
            if pi[i] * pi[j] > 0.0 {
                total += pi[i] * pi[j] * solve_ot(c[i].support(), c[j].support(), exponent)?.value;
            }
        }
    }
    Ok(total)
}

/// Fits `k` components and their proportions to `x`; the best of
/// `restarts` seeded runs is returned.
pub fn fit_mixture(x: &DiscreteDistribution, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let available = alternate::pooled_count(&[x]);
    if available < cfg.k {
        return Err(Error::InvalidConfig(format!(
            "k = {} exceeds the {available} support points available",
            cfg.k
        )));
    }
    let outcomes: Vec<Result<Outcome>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let start = alternate::seed_components(
                &[x],
                cfg.k,
                cfg.points_per_component,
                cfg.component_model,
                derive_seed(cfg.seed, r as u64),
            )?;
            let mut alt = Alternator::new(vec![x], cfg.exponent, cfg.proportion_floor)?;
            if cfg.lambda_reg > 0.0 {
                regularized(&mut alt, start, cfg)
            } else {
                alternate::alternate(&mut alt, start, cfg.max_outer_iters, cfg.tol)
            }
        })
        .collect();
    let best = pick_best(outcomes)?;
    let dim = x.dim();
    let t = best.transports.into_iter().next().expect("one dataset");
    let components: Vec<MixtureComponent> = best.components.iter().map(|c| c.to_mixture_component(dim)).collect();
    let model = MixtureModel::new(components, SimplexVector::from_solver(t.proportions)?)?;
    let regularizer = regularizer_value(&model, cfg.exponent)?;
    // the regularized run stores the penalized value in the transport
    let transport_cost = if cfg.lambda_reg > 0.0 { t.objective + cfg.lambda_reg * regularizer } else { t.objective };
    Ok(FitResult {
        objective: transport_cost - cfg.lambda_reg * regularizer,
        transport_cost,
        regularizer_value: regularizer,
        model,
        trace: best.trace,
        converged: best.converged,
    })
}

/// Outcome ranking uses the LP value stored in the transports, so the
/// regularized run stores `J = W − λR` there.
fn regularized(alt: &mut Alternator<'_>, mut components: Vec<Component>, cfg: &FitConfig) -> Result<Outcome> {
    let dim = alt.dim;
    let lambda = cfg.lambda_reg;
    let mut done = vec![false; components.len()];
    let mut transports = alt.solve(&components)?;
    let mut value = penalized(&components, &transports[0], lambda, cfg.exponent, dim)?;
    let mut trace = vec![value];
    let mut converged = false;
    for _ in 1..cfg.max_outer_iters {
        let mut reseeded = components.clone();
        if alt.reseed_empty(&mut reseeded, &transports, &mut done) {
            let t = alt.solve(&reseeded)?;
            let v = penalized(&reseeded, &t[0], lambda, cfg.exponent, dim)?;
            if v <= value {
                components = reseeded;
                transports = t;
                value = v;
                trace.push(v);
                continue;
            }
        }

        let mut targets = alt.targets(&components, &transports);
        let push = repulsion(&components, &transports[0].proportions, cfg.exponent, dim)?;
        let curvature = if cfg.exponent == Exponent::Two { 2.0 } else { 1.0 };
        for ((w, b), grad) in targets.iter_mut().zip(&push) {
            for (l, &wl) in w.iter().enumerate() {
                if wl > 0.0 {
                    for a in 0..dim {
                        b[l * dim + a] += lambda * grad[l * dim + a] / (curvature * wl);
                    }
                }
            }
        }
        let proposal = alt.propose(&components, &targets);

        let mut accepted = None;
        for alpha in LINE_SEARCH {
            let candidate: Vec<Component> =
                components.iter().zip(&proposal).map(|(c, p)| blend(c, p, alpha, dim)).collect();
            let t = alt.solve(&candidate)?;
            let v = penalized(&candidate, &t[0], lambda, cfg.exponent, dim)?;
            if v <= value {
                accepted = Some((candidate, t, v));
                break;
            }
        }
        let Some((c, t, v)) = accepted else {
            converged = true;
            break;
        };
        let previous = value;
        components = c;
        transports = t;
        value = v;
        trace.push(v);
        if previous - v <= cfg.tol * previous.abs() {
            converged = true;
            break;
        }
    }
    transports[0].objective = value;
    Ok(Outcome { components, transports, trace, converged })
}

fn penalized(
    components: &[Component],
    transport: &MixtureTransport,
    lambda: f64,
    exponent: Exponent,
    dim: usize,
) -> Result<f64> {
    let pi = &transport.proportions;
    let mut total = 0.0;
    for i in 0..components.len() {
        for j in 0..i {
            if pi[i] * pi[j] > 0.0 {
                let a = components[i].to_mixture_component(dim);
                let b = components[j].to_mixture_component(dim);
                total += pi[i] * pi[j] * solve_ot(a.support(), b.support(), exponent)?.value;
            }
        }
    }
    Ok(transport.objective - lambda * total)
}

/// Gradient of `R` with respect to every support point, per component.
fn repulsion(components: &[Component], pi: &[f64], exponent: Exponent, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut grads: Vec<Vec<f64>> = components.iter().map(|c| vec![0.0; c.support.len()]).collect();
    for i in 0..components.len() {
        for j in 0..i {
            let scale = pi[i] * pi[j];
            if scale <= 0.0 {
                continue;
            }
            let a = components[i].to_mixture_component(dim);
            let b = components[j].to_mixture_component(dim);
            let sol = solve_ot(a.support(), b.support(), exponent)?;
            for &(u, v, f) in sol.plan.entries() {
                let (p, q) = (a.support().point(u), b.support().point(v));
                let factor = match exponent {
                    Exponent::Two => 2.0,
                    Exponent::One => {
                        let d = squared_distance(p, q).sqrt();
                        if d > 0.0 { 1.0 / d } else { 0.0 }
                    }
                };
                for c in 0..dim {
                    let g = scale * f * factor * (p[c] - q[c]);
                    grads[i][u * dim + c] += g;
                    grads[j][v * dim + c] -= g;
                }
            }
        }
    }
    Ok(grads)
}

/// Normalized squared error `‖π − π̂‖² / ‖π‖²` of aligned proportion vectors.
pub fn pi_error(true_pi: &SimplexVector, est_pi: &SimplexVector) -> Result<f64> {
    if true_pi.len() != est_pi.len() {
        return Err(Error::LengthMismatch(true_pi.len(), est_pi.len()));
    }
    let num: f64 = true_pi.as_slice().iter().zip(est_pi.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = true_pi.as_slice().iter().map(|a| a * a).sum();
    Ok(num / den)
}

/// Minimum-cost one-to-one matching of true to estimated means under
/// squared distance; entry `i` is the estimated index matched to true `i`.
pub fn match_modes(true_means: &[Vec<f64>], est_means: &[Vec<f64>]) -> Result<Vec<usize>> {
    if true_means.len() != est_means.len() {
        return Err(Error::LengthMismatch(true_means.len(), est_means.len()));
    }
    let k = true_means.len();
    if k == 0 {
        return Err(Error::EmptyDataset);
    }
    let dim = true_means[0].len();
    let to_dist = |means: &[Vec<f64>]| -> Result<DiscreteDistribution> {
        DiscreteDistribution::from_flat_uniform(dim, means.iter().flatten().copied().collect())
    };
    let sol = solve_ot(&to_dist(true_means)?, &to_dist(est_means)?, Exponent::Two)?;
    let mut matching = vec![usize::MAX; k];
    let mut best = vec![0.0; k];
    for &(i, j, f) in sol.plan.entries() {
        if f > best[i] {
            best[i] = f;
            matching[i] = j;
        }
    }
    Ok(matching)
}

/// Recovery metrics of a fitted model against a ground-truth mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    /// [`pi_error`] after matching modes by their means.
    pub pi_error: f64,
    /// Mean distance between true means and the means of generated points
    /// closest to them.
    pub avg_mean_error: f64,
    /// Mean Frobenius distance between the corresponding covariances.
    pub avg_covariance_error: f64,
    /// Estimated component matched to every true mode.
    pub matching: Vec<usize>,
}

/// Compares a fitted model with the true modes and proportions. Generated
/// points (the weighted support of the model) are assigned to the closest
/// true mean for the mean and covariance errors.
pub fn evaluate_fit(model: &MixtureModel, truth: &[GaussianComponent], true_pi: &SimplexVector) -> Result<FitMetrics> {
    if truth.len() != true_pi.len() {
        return Err(Error::LengthMismatch(truth.len(), true_pi.len()));
    }
    let true_means: Vec<Vec<f64>> = truth.iter().map(|g| g.mean().to_vec()).collect();
    let est_means: Vec<Vec<f64>> = model.components().iter().map(|c| c.mean()).collect();
    let matching = match_modes(&true_means, &est_means)?;
    let est = SimplexVector::from_solver(matching.iter().map(|&j| model.proportions()[j]).collect())?;
    let pi_err = pi_error(true_pi, &est)?;

    let flat = model.flatten();
    let dim = model.dim();
    let k = truth.len();
    let mut mass = vec![0.0; k];
    let mut sums = vec![vec![0.0; dim]; k];
    let mut owner = Vec::with_capacity(flat.len());
    for (p, &w) in flat.points().zip(flat.weights()) {
        let t = nearest(p, &true_means);
        owner.push(t);
        mass[t] += w;
        for (s, x) in sums[t].iter_mut().zip(p) {
            *s += w * x;
        }
    }
    let mut cov = vec![vec![0.0; dim * dim]; k];
    let means: Vec<Vec<f64>> = (0..k)
        .map(|t| if mass[t] > 0.0 { sums[t].iter().map(|s| s / mass[t]).collect() } else { est_means[matching[t]].clone() })
        .collect();
    for ((p, &w), &t) in flat.points().zip(flat.weights()).zip(&owner) {
        for a in 0..dim {
            for b in 0..dim {
                cov[t][a * dim + b] += w * (p[a] - means[t][a]) * (p[b] - means[t][b]);
            }
        }
    }
    let mut mean_err = 0.0;
    let mut cov_err = 0.0;
    for t in 0..k {
        if mass[t] > 0.0 {
            cov[t].iter_mut().for_each(|c| *c /= mass[t]);
        } else {
            cov[t] = model.components()[matching[t]].support().covariance();
        }
        mean_err += squared_distance(&means[t], truth[t].mean()).sqrt();
        cov_err += squared_distance(&cov[t], truth[t].covariance()).sqrt();
    }
    Ok(FitMetrics {
        pi_error: pi_err,
        avg_mean_error: mean_err / k as f64,
        avg_covariance_error: cov_err / k as f64,
        matching,
    })
}

/// Ground-truth mixture implied by labeled data: label frequencies and
/// the weighted mean and covariance of every label `0..=max`.
pub fn empirical_truth(x: &DiscreteDistribution, labels: &[usize]) -> Result<(Vec<GaussianComponent>, SimplexVector)> {
    if labels.len() != x.len() {
        return Err(Error::LengthMismatch(labels.len(), x.len()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let dim = x.dim();
    let mut parts = Vec::with_capacity(k);
    let mut freq = Vec::with_capacity(k);
    for c in 0..k {
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            if l == c && x.weights()[i] > 0.0 {
                coords.extend_from_slice(x.point(i));
                weights.push(x.weights()[i]);
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidConfig(format!("label {c} has no mass")));
        }
        freq.push(total);
        let d = DiscreteDistribution::from_flat(dim, coords, weights.iter().map(|w| w / total).collect())?;
        let cov = d.covariance();
        let sym: Vec<f64> = (0..dim * dim).map(|i| 0.5 * (cov[i] + cov[(i % dim) * dim + i / dim])).collect();
        parts.push(GaussianComponent::new(d.mean(), sym)?);
    }
    Ok((parts, SimplexVector::normalized(freq)?))
}

fn nearest(p: &[f64], means: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (t, m) in means.iter().enumerate() {
        let d = squared_distance(p, m);
        if d < best_d {
            best_d = d;
            best = t;
        }
    }
    best
}
