//! Exact discrete optimal transport.
//!
//! [`wasserstein`] solves the transportation linear program between two
//! empirical measures exactly and returns the optimal plan. The value for
//! exponent 2 is the optimal squared-distance cost itself; take the square
//! root to obtain `W_2`.

pub mod bruteforce;
pub(crate) mod simplex;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cost::{cost_between, cost_matrix, CostMatrix, Exponent};
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::mixture::MixtureComponent;

pub use bruteforce::wasserstein_bruteforce;

/// Tolerance for marginal and objective consistency of a plan.
pub const PLAN_TOL: f64 = 1e-7;

/// Sparse coupling between a source and a target measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    /// Nonzero entries `(source, target, mass)`, sorted by `(source, target)`.
    entries: Vec<(usize, usize, f64)>,
    source_marginal: Vec<f64>,
    target_marginal: Vec<f64>,
    objective: f64,
}

impl TransportPlan {
    pub(crate) fn new(
        entries: Vec<(usize, usize, f64)>,
        source_marginal: Vec<f64>,
        target_marginal: Vec<f64>,
        objective: f64,
    ) -> Self {
        Self {
            rows: source_marginal.len(),
            cols: target_marginal.len(),
            entries,
            source_marginal,
            target_marginal,
            objective,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn source_marginal(&self) -> &[f64] {
        &self.source_marginal
    }

    pub fn target_marginal(&self) -> &[f64] {
        &self.target_marginal
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j), |&(a, b, _)| (a, b))
            .map(|idx| self.entries[idx].2)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.cols]; self.rows];
        for &(i, j, f) in &self.entries {
            dense[i][j] += f;
        }
        dense
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.rows];
        for &(i, _, f) in &self.entries {
            sums[i] += f;
        }
        sums
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for &(_, j, f) in &self.entries {
            sums[j] += f;
        }
        sums
    }

    /// Checks nonnegativity and both marginals within [`PLAN_TOL`].
    pub fn check_marginals(&self) -> Result<()> {
        if self.entries.iter().any(|&(i, j, f)| i >= self.rows || j >= self.cols || !(f >= 0.0)) {
            return Err(Error::Solver("plan entry out of range or negative".into()));
        }
        let check = |got: Vec<f64>, want: &[f64], what: &str| {
            match got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max) {
                dev if dev <= PLAN_TOL => Ok(()),
                dev => Err(Error::Solver(format!("{what} marginal off by {dev}"))),
            }
        };
        check(self.row_sums(), &self.source_marginal, "source")?;
        check(self.col_sums(), &self.target_marginal, "target")
    }

    /// Re-verifies marginals and that the stored objective equals
    /// `Σ plan · cost` for the given cost matrix.
    pub fn verify(&self, cost: &CostMatrix) -> Result<()> {
        if cost.rows() != self.rows || cost.cols() != self.cols {
            return Err(Error::LengthMismatch(cost.rows() * cost.cols(), self.rows * self.cols));
        }
        self.check_marginals()?;
        let recomputed = self.cost_under(cost);
        if (recomputed - self.objective).abs() > PLAN_TOL {
            return Err(Error::Solver(format!(
                "objective {} does not match recomputed cost {recomputed}",
                self.objective
            )));
        }
        Ok(())
    }

    pub fn cost_under(&self, cost: &CostMatrix) -> f64 {
        self.entries.iter().map(|&(i, j, f)| f * cost.get(i, j)).sum()
    }
}

/// Dual potentials `(u, v)` with `u_i + v_j ≤ c_ij`; their objective
/// `Σ u_i a_i + Σ v_j b_j` lower-bounds every feasible plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

impl DualCertificate {
    /// Largest violation `max(u_i + v_j − c_ij, 0)`.
    pub fn max_violation(&self, cost: &CostMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, u) in self.source.iter().enumerate() {
            for (j, v) in self.target.iter().enumerate() {
                worst = worst.max(u + v - cost.get(i, j));
            }
        }
        worst
    }

    pub fn objective(&self, a: &[f64], b: &[f64]) -> f64 {
        let su: f64 = self.source.iter().zip(a).map(|(u, w)| u * w).sum();
        let sv: f64 = self.target.iter().zip(b).map(|(v, w)| v * w).sum();
        su + sv
    }
}

#[derive(Debug, Clone)]
pub struct OtSolution {
    pub value: f64,
    pub plan: TransportPlan,
    pub certificate: DualCertificate,
}

/// Exact Wasserstein cost (`p = 1`) or squared cost (`p = 2`) with its
/// optimal plan.
pub fn wasserstein(a: &DiscreteDistribution, b: &DiscreteDistribution, exponent: Exponent) -> Result<(f64, TransportPlan)> {
    let sol = solve_ot(a, b, exponent)?;
    Ok((sol.value, sol.plan))
}

/// Like [`wasserstein`], additionally returning an optimality certificate.
pub fn solve_ot(a: &DiscreteDistribution, b: &DiscreteDistribution, exponent: Exponent) -> Result<OtSolution> {
    a.check_dim(b)?;
    let (ra, wa) = positive(a.weights());
    let (rb, wb) = positive(b.weights());
    let dim = a.dim();
    let ca = gather(a, &ra);
    let cb = gather(b, &rb);
    let cost = cost_between(&ca, &cb, dim, exponent);
    let (ka, kb) = axis_keys(dim, &ca, &cb);
    let group_of = vec![0; rb.len()];
    let problem = simplex::Problem {
        supply: &wa,
        cost: cost.as_slice(),
        group_of: &group_of,
        weights: &wb,
        groups: 1,
        floor: 0.0,
        source_key: Some(&ka),
        support_key: Some(&kb),
    };
    let sol = simplex::solve(&problem, None)?;
    let entries = sol.flows.iter().map(|&(s, j, f)| (ra[s], rb[j], f)).collect();
    let plan = TransportPlan::new(entries, a.weights().to_vec(), b.weights().to_vec(), sol.objective);

    // Potentials of dropped zero-weight points come from the c-transform so
    // the certificate stays feasible on the full support.
    let full = cost_matrix(a, b, exponent)?;
    let mut u = vec![f64::NAN; a.len()];
    let mut v = vec![f64::NAN; b.len()];
    for (s, &i) in ra.iter().enumerate() {
        u[i] = sol.source_potential[s];
    }
    for (j, &i) in rb.iter().enumerate() {
        v[i] = sol.support_potential[j];
    }
    for j in 0..b.len() {
        if v[j].is_nan() {
            v[j] = ra.iter().map(|&i| full.get(i, j) - u[i]).fold(f64::INFINITY, f64::min);
        }
    }
    for i in 0..a.len() {
        if u[i].is_nan() {
            u[i] = (0..b.len()).map(|j| full.get(i, j) - v[j]).fold(f64::INFINITY, f64::min);
        }
    }
    Ok(OtSolution { value: sol.objective, plan, certificate: DualCertificate { source: u, target: v } })
}

fn positive(weights: &[f64]) -> (Vec<usize>, Vec<f64>) {
    weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| (i, w)).unzip()
}

fn gather(d: &DiscreteDistribution, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| d.point(i).iter().copied()).collect()
}

/// Projections of both point sets on the principal axis of their union;
/// used only to order the starting basis.
pub(crate) fn axis_keys(dim: usize, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let count = (a.len() + b.len()) / dim;
    let mut mean = vec![0.0; dim];
    for p in a.chunks_exact(dim).chain(b.chunks_exact(dim)) {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / count as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for p in a.chunks_exact(dim).chain(b.chunks_exact(dim)) {
        for r in 0..dim {
            for c in 0..dim {
                cov[(r, c)] += (p[r] - mean[r]) * (p[c] - mean[c]);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let axis: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let project = |pts: &[f64]| pts.chunks_exact(dim).map(|p| p.iter().zip(&axis).map(|(x, w)| x * w).sum()).collect();
    (project(a), project(b))
}

/// Support points of several components laid out for the mixture solver.
#[derive(Debug, Clone)]
pub(crate) struct MixtureSupport {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    pub group_of: Vec<usize>,
    pub groups: usize,
}

impl MixtureSupport {
    pub fn from_components(components: &[MixtureComponent]) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::InvalidConfig("empty component list".into()))?;
        let dim = first.dim();
        let mut s = Self { dim, coords: Vec::new(), weights: Vec::new(), group_of: Vec::new(), groups: components.len() };
        for (g, c) in components.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
            }
            s.coords.extend_from_slice(c.support().coords());
            s.weights.extend_from_slice(c.support().weights());
            s.group_of.extend(std::iter::repeat_n(g, c.len()));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }
}

/// Optimal `(plan, π)` for `min W(data, Σ_g π_g · component_g)`.
#[derive(Debug, Clone)]
pub(crate) struct MixtureTransport {
    /// Rows index data points, columns index flattened support points.
    pub plan: TransportPlan,
    pub proportions: Vec<f64>,
    pub objective: f64,
    pub basis: simplex::Basis,
}

/// Solves the transport LP with free proportions. Zero-weight data and
/// support points are dropped from the LP and reappear as zero rows and
/// columns of the plan.
pub(crate) fn mixture_transport(
    data: &DiscreteDistribution,
    support: &MixtureSupport,
    exponent: Exponent,
    floor: f64,
    warm: Option<&simplex::Basis>,
) -> Result<MixtureTransport> {
    if data.dim() != support.dim {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: support.dim });
    }
    let (rd, wd) = positive(data.weights());
    let (rs, ws) = positive(&support.weights);
    let cd = gather(data, &rd);
    let cs: Vec<f64> = rs.iter().flat_map(|&j| support.point(j).iter().copied()).collect();
    let group_of: Vec<usize> = rs.iter().map(|&j| support.group_of[j]).collect();
    let cost = cost_between(&cd, &cs, data.dim(), exponent);
    let (kd, ks) = axis_keys(data.dim(), &cd, &cs);
    let problem = simplex::Problem {
        supply: &wd,
        cost: cost.as_slice(),
        group_of: &group_of,
        weights: &ws,
        groups: support.groups,
        floor,
        source_key: Some(&kd),
        support_key: Some(&ks),
    };
    let sol = simplex::solve(&problem, warm)?;
    let entries = sol.flows.iter().map(|&(s, j, f)| (rd[s], rs[j], f)).collect();
    let target: Vec<f64> = (0..support.len())
        .map(|j| sol.proportions[support.group_of[j]] * support.weights[j])
        .collect();
    let plan = TransportPlan::new(entries, data.weights().to_vec(), target, sol.objective);
    Ok(MixtureTransport { plan, proportions: sol.proportions, objective: sol.objective, basis: sol.basis })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> DiscreteDistribution {
        DiscreteDistribution::from_flat(dim, coords, weights).unwrap()
    }

    #[test]
    fn identical_distributions_cost_nothing() {
        let a = dist(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 2.0], vec![0.2, 0.3, 0.5]);
        let (value, plan) = wasserstein(&a, &a, Exponent::One).unwrap();
        assert!(value.abs() < 1e-12);
        for i in 0..3 {
            assert!((plan.get(i, i) - a.weights()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn point_masses() {
        let a = dist(2, vec![0.0, 0.0], vec![1.0]);
        let b = dist(2, vec![3.0, 4.0], vec![1.0]);
        assert_eq!(wasserstein(&a, &b, Exponent::One).unwrap().0, 5.0);
        assert_eq!(wasserstein(&a, &b, Exponent::Two).unwrap().0, 25.0);
    }

    #[test]
    fn unit_square_edges() {
        // brute force over the two permutation couplings: min(1 + 1, √2 + √2) / 2
        let a = dist(2, vec![0.0, 0.0, 1.0, 0.0], vec![0.5, 0.5]);
        let b = dist(2, vec![0.0, 1.0, 1.0, 1.0], vec![0.5, 0.5]);
        let (value, plan) = wasserstein(&a, &b, Exponent::One).unwrap();
        assert!((value - 1.0).abs() < 1e-12);
        plan.verify(&cost_matrix(&a, &b, Exponent::One).unwrap()).unwrap();
    }

    #[test]
    fn zero_weights_are_reinserted() {
        let a = dist(1, vec![0.0, 5.0, 1.0], vec![0.5, 0.0, 0.5]);
        let b = dist(1, vec![0.0, 1.0, 9.0], vec![0.5, 0.5, 0.0]);
        let sol = solve_ot(&a, &b, Exponent::One).unwrap();
        assert!(sol.value.abs() < 1e-12);
        assert_eq!(sol.plan.rows(), 3);
        assert_eq!(sol.plan.cols(), 3);
        assert_eq!(sol.plan.row_sums()[1], 0.0);
        assert_eq!(sol.plan.col_sums()[2], 0.0);
        let cost = cost_matrix(&a, &b, Exponent::One).unwrap();
        assert!(sol.certificate.max_violation(&cost) < 1e-9);
        assert!((sol.certificate.objective(a.weights(), b.weights()) - sol.value).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let a = dist(1, vec![0.0], vec![1.0]);
        let b = dist(2, vec![0.0, 0.0], vec![1.0]);
        assert!(matches!(wasserstein(&a, &b, Exponent::One), Err(Error::DimensionMismatch { .. })));
    }
}
