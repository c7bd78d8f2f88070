//! The normalized Wasserstein measure
//!
//! ```text
//! NW(x, y) = min over G, π¹, π² of  W(x, P_{G,π¹}) + W(y, P_{G,π²})
//! ```
//!
//! where `P_{G,π}` mixes the shared components `G` with proportions `π`.
//! For fixed components both terms are exact linear programs in
//! `(plan, π)`; [`nw_measure`] alternates those programs with a support
//! update and keeps the best of several seeded restarts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alternate::{self, derive_seed, Alternator, Component, Outcome};
use crate::cost::Exponent;
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::mixture::MixtureComponent;
use crate::ot::TransportPlan;
use crate::simplex::SimplexVector;

pub use crate::alternate::ComponentModel;

/// Maximum per-step increase tolerated in a trace.
pub const TRACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NwConfig {
    pub k: usize,
    pub exponent: Exponent,
    pub max_outer_iters: usize,
    /// Relative objective change below which iteration stops.
    pub tol: f64,
    /// Lower bound imposed on every proportion.
    pub proportion_floor: f64,
    pub seed: u64,
    pub restarts: usize,
    pub points_per_component: usize,
    pub component_model: ComponentModel,
}

impl Default for NwConfig {
    fn default() -> Self {
        Self {
            k: 1,
            exponent: Exponent::One,
            max_outer_iters: 100,
            tol: 1e-6,
            proportion_floor: 0.0,
            seed: 0,
            restarts: 5,
            points_per_component: 32,
            component_model: ComponentModel::Affine,
        }
    }
}

impl NwConfig {
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
pub struct NwResult {
    pub value: f64,
    pub pi1: SimplexVector,
    pub pi2: SimplexVector,
    pub components: Vec<MixtureComponent>,
    /// Coupling of `x` with the flattened mixture `P_{G,π¹}`.
    pub plan1: TransportPlan,
    /// Coupling of `y` with the flattened mixture `P_{G,π²}`.
    pub plan2: TransportPlan,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl NwResult {
    /// Largest increase between consecutive trace entries.
    pub fn max_trace_increase(&self) -> f64 {
        max_increase(&self.trace)
    }

    /// Checks the invariants a stored result must satisfy.
    pub fn validate(&self) -> Result<()> {
        let k = self.components.len();
        if self.pi1.len() != k || self.pi2.len() != k {
            return Err(Error::LengthMismatch(self.pi1.len(), k));
        }
        if (self.plan1.objective() + self.plan2.objective() - self.value).abs() > 1e-6 {
            return Err(Error::Format("value differs from the sum of plan objectives".into()));
        }
        if self.max_trace_increase() > TRACE_TOL {
            return Err(Error::Format("trace is not non-increasing".into()));
        }
        self.plan1.check_marginals()?;
        self.plan2.check_marginals()
    }
}

pub(crate) fn max_increase(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Exact NW terms for fixed components: one LP per side in `(plan, π)`.
pub fn nw_fixed_components(
    x: &DiscreteDistribution,
    y: &DiscreteDistribution,
    components: &[MixtureComponent],
    exponent: Exponent,
) -> Result<NwResult> {
    if components.is_empty() {
        return Err(Error::InvalidConfig("empty component list".into()));
    }
    x.check_dim(y)?;
    for c in components {
        if c.dim() != x.dim() {
            return Err(Error::DimensionMismatch { expected: x.dim(), got: c.dim() });
        }
    }
    let mut alt = Alternator::new(vec![x, y], exponent, 0.0)?;
    let state = alternate::from_mixture_components(components);
    let transports = alt.solve(&state)?;
    let trace = vec![alternate::objective(&transports)];
    let outcome = Outcome { components: state, transports, trace, converged: true };
    finish(outcome, Some(components.to_vec()), x.dim())
}

/// NW measure by alternating minimization with seeded restarts; the
/// restart with the smallest value wins, ties going to the lower index.
pub fn nw_measure(x: &DiscreteDistribution, y: &DiscreteDistribution, cfg: &NwConfig) -> Result<NwResult> {
    let best = run_restarts(x, y, cfg, None)?;
    finish(best, None, x.dim())
}

/// Best outcome over the seeded restarts plus, when given, one extra
/// candidate started from `init`.
pub(crate) fn run_restarts(
    x: &DiscreteDistribution,
    y: &DiscreteDistribution,
    cfg: &NwConfig,
    init: Option<Vec<Component>>,
) -> Result<Outcome> {
    cfg.validate()?;
    x.check_dim(y)?;
    let available = alternate::pooled_count(&[x, y]);
    if available < cfg.k {
        return Err(Error::InvalidConfig(format!(
            "k = {} exceeds the {available} support points available",
            cfg.k
        )));
    }
    let mut starts: Vec<Option<Vec<Component>>> = (0..cfg.restarts).map(|_| None).collect();
    if let Some(init) = init {
        starts.push(Some(init));
    }
    let outcomes: Vec<Result<Outcome>> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, start)| {
            let components = match start {
                Some(c) => c,
                None => alternate::seed_components(
                    &[x, y],
                    cfg.k,
                    cfg.points_per_component,
                    cfg.component_model,
                    derive_seed(cfg.seed, r as u64),
                )?,
            };
            let mut alt = Alternator::new(vec![x, y], cfg.exponent, cfg.proportion_floor)?;
            alternate::alternate(&mut alt, components, cfg.max_outer_iters, cfg.tol)
        })
        .collect();
    pick_best(outcomes)
}

pub(crate) fn pick_best(outcomes: Vec<Result<Outcome>>) -> Result<Outcome> {
    let mut best: Option<Outcome> = None;
    for o in outcomes {
        let o = o?;
        let better = best
            .as_ref()
            .is_none_or(|b| alternate::objective(&o.transports) < alternate::objective(&b.transports));
        if better {
            best = Some(o);
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("no restarts".into()))
}

pub(crate) fn finish(outcome: Outcome, given: Option<Vec<MixtureComponent>>, dim: usize) -> Result<NwResult> {
    let Outcome { components, mut transports, trace, converged } = outcome;
    let t2 = transports.pop().expect("two sides");
    let t1 = transports.pop().expect("two sides");
    let components = given.unwrap_or_else(|| components.iter().map(|c| c.to_mixture_component(dim)).collect());
    Ok(NwResult {
        value: t1.objective + t2.objective,
        pi1: SimplexVector::from_solver(t1.proportions)?,
        pi2: SimplexVector::from_solver(t2.proportions)?,
        components,
        plan1: t1.plan,
        plan2: t2.plan,
        trace,
        converged,
    })
}
