//! Shared machinery for the alternating minimization behind the NW measure
//! and mixture fitting: seeding, the exact `(plan, π)` step, and the
//! support update.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cost::Exponent;
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::mixture::MixtureComponent;
use crate::ot::simplex::Basis;
use crate::ot::{mixture_transport, MixtureSupport, MixtureTransport};

const LLOYD_STEPS: usize = 10;
const EMPTY_MASS: f64 = 1e-12;

/// How component supports may move between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentModel {
    /// Support `μ + L z_j` over a fixed whitened normal reference cloud `z`;
    /// only `μ` and `L` are fitted.
    #[default]
    Affine,
    /// Every support point moves independently.
    FreeSupport,
}

/// Deterministic stream splitting for per-restart generators.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub(crate) struct Affine {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub lin: Vec<f64>,
    /// Row-major `m × d`.
    pub reference: Vec<f64>,
}

impl Affine {
    fn support(&self, dim: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.reference.len());
        for z in self.reference.chunks_exact(dim) {
            for r in 0..dim {
                let lz: f64 = (0..dim).map(|c| self.lin[r * dim + c] * z[c]).sum();
                out.push(self.mean[r] + lz);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Component {
    /// Row-major `m × d`, uniform weights.
    pub support: Vec<f64>,
    pub affine: Option<Affine>,
    /// `None` means uniform.
    pub weights: Option<Vec<f64>>,
}

impl Component {
    fn from_affine(affine: Affine, dim: usize, model: ComponentModel) -> Self {
        let support = affine.support(dim);
        let affine = (model == ComponentModel::Affine).then_some(affine);
        Self { support, affine, weights: None }
    }

    fn weight_vec(&self, dim: usize) -> Vec<f64> {
        let m = self.len(dim);
        self.weights.clone().unwrap_or_else(|| vec![1.0 / m as f64; m])
    }

    pub fn len(&self, dim: usize) -> usize {
        self.support.len() / dim
    }

    pub fn to_mixture_component(&self, dim: usize) -> MixtureComponent {
        DiscreteDistribution::from_flat(dim, self.support.clone(), self.weight_vec(dim))
            .expect("fitted support is finite")
            .into()
    }

    pub fn mean(&self, dim: usize) -> Vec<f64> {
        let m = self.len(dim) as f64;
        let mut mean = vec![0.0; dim];
        for p in self.support.chunks_exact(dim) {
            for (a, x) in mean.iter_mut().zip(p) {
                *a += x / m;
            }
        }
        mean
    }
}

pub(crate) fn layout(components: &[Component], dim: usize) -> MixtureSupport {
    let mut s = MixtureSupport {
        dim,
        coords: Vec::new(),
        weights: Vec::new(),
        group_of: Vec::new(),
        groups: components.len(),
    };
    for (g, c) in components.iter().enumerate() {
        s.coords.extend_from_slice(&c.support);
        s.weights.extend(c.weight_vec(dim));
        s.group_of.extend(std::iter::repeat_n(g, c.len(dim)));
    }
    s
}

/// Whitened standard-normal cloud: exact zero mean and, when `m > d`,
/// identity sample covariance.
fn reference_cloud(m: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut z: Vec<f64> = (0..m * dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut mean = vec![0.0; dim];
    for p in z.chunks_exact(dim) {
        for (a, x) in mean.iter_mut().zip(p) {
            *a += x / m as f64;
        }
    }
    for p in z.chunks_exact_mut(dim) {
        for (x, a) in p.iter_mut().zip(&mean) {
            *x -= a;
        }
    }
    if m > dim {
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for p in z.chunks_exact(dim) {
            let v = DVector::from_column_slice(p);
            cov += &v * v.transpose() / m as f64;
        }
        if let Some(chol) = cov.cholesky() {
            let l = chol.l();
            for p in z.chunks_exact_mut(dim) {
                let v = DVector::from_column_slice(p);
                if let Some(w) = l.solve_lower_triangular(&v) {
                    p.copy_from_slice(w.as_slice());
                }
            }
        }
    }
    z
}

/// Lower Cholesky factor of `cov + ridge·I`, row-major.
fn cholesky_factor(cov: &[f64], dim: usize) -> Vec<f64> {
    let base = DMatrix::from_row_slice(dim, dim, cov);
    let scale = (0..dim).map(|a| base[(a, a)]).sum::<f64>().abs() / dim as f64;
    let mut ridge = 1e-12 * (1.0 + scale);
    loop {
        let m = &base + DMatrix::<f64>::identity(dim, dim) * ridge;
        if let Some(chol) = m.cholesky() {
            let l = chol.l();
            return (0..dim * dim).map(|i| l[(i / dim, i % dim)]).collect();
        }
        ridge *= 10.0;
    }
}

/// Pooled, lexicographically sorted support of the datasets with each
/// dataset's weights scaled by `1 / count`; the order makes seeding
/// independent of the argument order.
fn pooled(datasets: &[&DiscreteDistribution]) -> (Vec<f64>, Vec<f64>) {
    let dim = datasets[0].dim();
    let scale = 1.0 / datasets.len() as f64;
    let mut items: Vec<(&[f64], f64)> = datasets
        .iter()
        .flat_map(|d| d.points().zip(d.weights()).filter(|(_, &w)| w > 0.0).map(|(p, &w)| (p, w * scale)))
        .collect();
    items.sort_by(|a, b| {
        a.0.iter()
            .zip(b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.total_cmp(&b.1))
    });
    let mut coords = Vec::with_capacity(items.len() * dim);
    let mut weights = Vec::with_capacity(items.len());
    for (p, w) in items {
        coords.extend_from_slice(p);
        weights.push(w);
    }
    (coords, weights)
}

pub(crate) fn pooled_count(datasets: &[&DiscreteDistribution]) -> usize {
    pooled(datasets).1.len()
}

fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Weighted k-means++ seeding plus a few Lloyd steps on the pooled support;
/// every cell becomes a component matching the cell's mean and covariance.
pub(crate) fn seed_components(
    datasets: &[&DiscreteDistribution],
    k: usize,
    points_per_component: usize,
    model: ComponentModel,
    seed: u64,
) -> Result<Vec<Component>> {
    let dim = datasets[0].dim();
    let (coords, weights) = pooled(datasets);
    let n = weights.len();
    if n < k {
        return Err(Error::InvalidConfig(format!("{k} components requested but only {n} support points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |i: usize| &coords[i * dim..(i + 1) * dim];
    let sq = |a: &[f64], b: &[f64]| crate::cost::squared_distance(a, b);

    let mut centers: Vec<Vec<f64>> = vec![point(sample_index(&weights, &mut rng)).to_vec()];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(point(i), &centers[0])).collect();
    while centers.len() < k {
        let scores: Vec<f64> = nearest.iter().zip(&weights).map(|(d, w)| d * w).collect();
        let next = if scores.iter().sum::<f64>() > 0.0 {
            sample_index(&scores, &mut rng)
        } else {
            sample_index(&weights, &mut rng)
        };
        let c = point(next).to_vec();
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq(point(i), &c));
        }
        centers.push(c);
    }

    let mut label = vec![0usize; n];
    for _ in 0..LLOYD_STEPS {
        for (i, l) in label.iter_mut().enumerate() {
            *l = (0..k)
                .min_by(|&a, &b| sq(point(i), &centers[a]).total_cmp(&sq(point(i), &centers[b])))
                .unwrap();
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut mass = vec![0.0; k];
        for i in 0..n {
            mass[label[i]] += weights[i];
            for (s, x) in sums[label[i]].iter_mut().zip(point(i)) {
                *s += weights[i] * x;
            }
        }
        for g in 0..k {
            if mass[g] > 0.0 {
                centers[g] = sums[g].iter().map(|s| s / mass[g]).collect();
            }
        }
    }

    let mut components = Vec::with_capacity(k);
    for g in 0..k {
        let mut mass = 0.0;
        let mut cov = vec![0.0; dim * dim];
        for i in (0..n).filter(|&i| label[i] == g) {
            mass += weights[i];
            let p = point(i);
            for a in 0..dim {
                for b in 0..dim {
                    cov[a * dim + b] += weights[i] * (p[a] - centers[g][a]) * (p[b] - centers[g][b]);
                }
            }
        }
        if mass > 0.0 {
            cov.iter_mut().for_each(|c| *c /= mass);
        }
        let affine = Affine {
            mean: centers[g].clone(),
            lin: cholesky_factor(&cov, dim),
            reference: reference_cloud(points_per_component, dim, &mut rng),
        };
        components.push(Component::from_affine(affine, dim, model));
    }
    Ok(components)
}

/// Wraps externally supplied components so they can be optimized.
pub(crate) fn from_mixture_components(components: &[MixtureComponent]) -> Vec<Component> {
    components
        .iter()
        .map(|c| Component {
            support: c.support().coords().to_vec(),
            affine: None,
            weights: Some(c.support().weights().to_vec()),
        })
        .collect()
}

/// Exact `(plan, π)` step over one or two datasets with warm-started bases.
pub(crate) struct Alternator<'a> {
    pub datasets: Vec<&'a DiscreteDistribution>,
    pub exponent: Exponent,
    pub floor: f64,
    pub dim: usize,
    /// Second dataset equals the first, so its LP is solved only once.
    duplicate: bool,
    bases: Vec<Option<Basis>>,
}

impl<'a> Alternator<'a> {
    pub fn new(datasets: Vec<&'a DiscreteDistribution>, exponent: Exponent, floor: f64) -> Result<Self> {
        let first = datasets.first().ok_or(Error::EmptyDataset)?;
        let dim = first.dim();
        for d in &datasets {
            if d.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: d.dim() });
            }
        }
        let duplicate = datasets.len() == 2 && (std::ptr::eq(datasets[0], datasets[1]) || datasets[0] == datasets[1]);
        let bases = vec![None; datasets.len()];
        Ok(Self { datasets, exponent, floor, dim, duplicate, bases })
    }

    pub fn solve(&mut self, components: &[Component]) -> Result<Vec<MixtureTransport>> {
        let support = layout(components, self.dim);
        let mut out: Vec<MixtureTransport> = Vec::with_capacity(self.datasets.len());
        for t in 0..self.datasets.len() {
            if t == 1 && self.duplicate {
                out.push(out[0].clone());
                continue;
            }
            let sol = mixture_transport(self.datasets[t], &support, self.exponent, self.floor, self.bases[t].as_ref())?;
            self.bases[t] = Some(sol.basis.clone());
            out.push(sol);
        }
        Ok(out)
    }

    /// Per-component owner and offset of every flattened support point.
    fn owners(components: &[Component], dim: usize) -> Vec<(usize, usize)> {
        components
            .iter()
            .enumerate()
            .flat_map(|(g, c)| (0..c.len(dim)).map(move |l| (g, l)))
            .collect()
    }

    /// Cost of each component's columns under the given plans.
    pub fn component_costs(&self, components: &[Component], transports: &[MixtureTransport]) -> Vec<f64> {
        let owners = Self::owners(components, self.dim);
        let mut costs = vec![0.0; components.len()];
        for (d, t) in self.datasets.iter().zip(transports) {
            for &(i, j, f) in t.plan.entries() {
                let (g, l) = owners[j];
                let s = &components[g].support[l * self.dim..(l + 1) * self.dim];
                costs[g] += f * self.exponent.cost(d.point(i), s);
            }
        }
        costs
    }

    /// Aggregated regression data per support point: weight `c_j` and target
    /// `b_j`. For `p = 2` this is the barycentric projection; for `p = 1` it
    /// is one reweighted (Weiszfeld) step.
    pub fn targets(&self, components: &[Component], transports: &[MixtureTransport]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let dim = self.dim;
        let owners = Self::owners(components, dim);
        let empty: Vec<(Vec<f64>, Vec<f64>)> = components
            .iter()
            .map(|c| (vec![0.0; c.len(dim)], vec![0.0; c.support.len()]))
            .collect();
        let mut per_dataset = Vec::with_capacity(transports.len());
        for (d, t) in self.datasets.iter().zip(transports) {
            let mut local = empty.clone();
            for &(i, j, f) in t.plan.entries() {
                let (g, l) = owners[j];
                let x = d.point(i);
                let w = match self.exponent {
                    Exponent::Two => f,
                    Exponent::One => {
                        let s = &components[g].support[l * dim..(l + 1) * dim];
                        f / self.exponent.cost(x, s).max(1e-12)
                    }
                };
                local[g].0[l] += w;
                for (a, xv) in local[g].1[l * dim..(l + 1) * dim].iter_mut().zip(x) {
                    *a += w * xv;
                }
            }
            per_dataset.push(local);
        }
        // Per-dataset sums are combined last; with two datasets the single
        // addition is commutative, so argument order does not change rounding.
        let mut acc = per_dataset.pop().unwrap_or(empty);
        for local in &per_dataset {
            for (a, l) in acc.iter_mut().zip(local) {
                a.0.iter_mut().zip(&l.0).for_each(|(x, y)| *x += y);
                a.1.iter_mut().zip(&l.1).for_each(|(x, y)| *x += y);
            }
        }
        for (c, b) in acc.iter_mut() {
            for (l, &w) in c.iter().enumerate() {
                if w > 0.0 {
                    b[l * dim..(l + 1) * dim].iter_mut().for_each(|v| *v /= w);
                }
            }
        }
        acc
    }

    /// Proposed new supports from regression targets, without the guard.
    pub fn propose(&self, components: &[Component], targets: &[(Vec<f64>, Vec<f64>)]) -> Vec<Component> {
        components
            .iter()
            .zip(targets)
            .map(|(c, (w, b))| update_component(c, w, b, self.dim))
            .collect()
    }

    /// Guarded support update: a component keeps its new support only if its
    /// fixed-plan cost does not increase, so the next LP value cannot exceed
    /// the current one.
    pub fn update(&self, components: &mut [Component], transports: &[MixtureTransport]) {
        let before = self.component_costs(components, transports);
        let targets = self.targets(components, transports);
        let proposal = self.propose(components, &targets);
        let after = self.component_costs(&proposal, transports);
        for (g, c) in proposal.into_iter().enumerate() {
            if after[g] <= before[g] {
                components[g] = c;
            }
        }
    }

    /// Re-seeds components that receive no mass at the data point with the
    /// largest transport cost, each at most once per run. Returns whether
    /// anything moved.
    pub fn reseed_empty(
        &self,
        components: &mut [Component],
        transports: &[MixtureTransport],
        done: &mut [bool],
    ) -> bool {
        let dim = self.dim;
        let owners = Self::owners(components, dim);
        let mass: Vec<f64> = (0..components.len())
            .map(|g| transports.iter().map(|t| t.proportions[g]).sum())
            .collect();
        let mut moved = false;
        let mut taken: Vec<(usize, usize)> = Vec::new();
        for g in 0..components.len() {
            if mass[g] > EMPTY_MASS || done[g] {
                continue;
            }
            done[g] = true;
            // (dataset, point) with the largest cost contribution, and the
            // component that serves it most.
            let mut best: Option<(f64, usize, usize)> = None;
            for (t, (d, tr)) in self.datasets.iter().zip(transports).enumerate() {
                let mut contribution = vec![0.0; d.len()];
                for &(i, j, f) in tr.plan.entries() {
                    let (h, l) = owners[j];
                    let s = &components[h].support[l * dim..(l + 1) * dim];
                    contribution[i] += f * self.exponent.cost(d.point(i), s);
                }
                for (i, &c) in contribution.iter().enumerate() {
                    if taken.contains(&(t, i)) {
                        continue;
                    }
                    if best.is_none_or(|(bc, _, _)| c > bc) {
                        best = Some((c, t, i));
                    }
                }
            }
            let Some((cost, t, i)) = best else { continue };
            if cost <= 0.0 {
                continue;
            }
            taken.push((t, i));
            let mut served = vec![0.0; components.len()];
            for &(r, j, f) in transports[t].plan.entries() {
                if r == i {
                    served[owners[j].0] += f;
                }
            }
            let host = (0..components.len()).max_by(|&a, &b| served[a].total_cmp(&served[b])).unwrap();
            let x = self.datasets[t].point(i).to_vec();
            components[g] = relocate(&components[host], &components[g], &x, dim);
            moved = true;
        }
        moved
    }
}

/// Appends one component at the data point with the largest transport
/// cost, shaped like the component serving that point.
pub(crate) fn grow(alt: &Alternator<'_>, components: &[Component], transports: &[MixtureTransport]) -> Vec<Component> {
    let mut grown = components.to_vec();
    let template = components.last().expect("at least one component").clone();
    grown.push(template);
    let mut extended = Vec::with_capacity(transports.len());
    for t in transports {
        let mut t = t.clone();
        t.proportions.push(0.0);
        extended.push(t);
    }
    let g = grown.len() - 1;
    let mut done = vec![true; grown.len()];
    done[g] = false;
    // The appended copy has zero mass under the extended plans, so the
    // empty-component rule relocates it.
    alt.reseed_empty(&mut grown, &extended, &mut done);
    grown
}

/// Redraws the reference clouds of affine components with `m` points each,
/// keeping their mean and linear map.
pub(crate) fn resample(components: &[Component], m: usize, dim: usize, seed: u64) -> Vec<Component> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    components
        .iter()
        .map(|c| match &c.affine {
            Some(a) if a.reference.len() != m * dim => {
                let affine = Affine { reference: reference_cloud(m, dim, &mut rng), ..a.clone() };
                Component::from_affine(affine, dim, ComponentModel::Affine)
            }
            _ => c.clone(),
        })
        .collect()
}

/// Places a copy of `host`, shrunk by half, at `at`, keeping the reference
/// cloud of `old`.
fn relocate(host: &Component, old: &Component, at: &[f64], dim: usize) -> Component {
    match (&host.affine, &old.affine) {
        (Some(h), Some(o)) => {
            let affine = Affine {
                mean: at.to_vec(),
                lin: h.lin.iter().map(|v| 0.5 * v).collect(),
                reference: o.reference.clone(),
            };
            Component::from_affine(affine, dim, ComponentModel::Affine)
        }
        _ => {
            let center = host.mean(dim);
            let m_old = old.len(dim);
            let m_host = host.len(dim);
            let mut support = Vec::with_capacity(old.support.len());
            for l in 0..m_old {
                let p = &host.support[(l % m_host) * dim..(l % m_host + 1) * dim];
                support.extend((0..dim).map(|a| at[a] + 0.5 * (p[a] - center[a])));
            }
            Component { support, affine: None, weights: None }
        }
    }
}

fn update_component(c: &Component, w: &[f64], b: &[f64], dim: usize) -> Component {
    match &c.affine {
        None => {
            let mut support = c.support.clone();
            for (l, &wl) in w.iter().enumerate() {
                if wl > 0.0 {
                    support[l * dim..(l + 1) * dim].copy_from_slice(&b[l * dim..(l + 1) * dim]);
                }
            }
            Component { support, affine: None, weights: None }
        }
        Some(a) => {
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return c.clone();
            }
            let affine = fit_affine(a, w, b, dim, total);
            Component::from_affine(affine, dim, ComponentModel::Affine)
        }
    }
}

/// Weighted least squares for `b_j ≈ μ + L z_j` with a tiny ridge towards
/// the current parameters.
fn fit_affine(a: &Affine, w: &[f64], b: &[f64], dim: usize, total: f64) -> Affine {
    let q = dim + 1;
    let ridge = 1e-10 * total;
    let mut normal = DMatrix::<f64>::identity(q, q) * ridge;
    let mut rhs = DMatrix::<f64>::zeros(q, dim);
    for r in 0..dim {
        rhs[(0, r)] = ridge * a.mean[r];
        for c in 0..dim {
            rhs[(1 + c, r)] = ridge * a.lin[r * dim + c];
        }
    }
    for (l, &wl) in w.iter().enumerate() {
        if wl <= 0.0 {
            continue;
        }
        let z = &a.reference[l * dim..(l + 1) * dim];
        let feat: Vec<f64> = std::iter::once(1.0).chain(z.iter().copied()).collect();
        for u in 0..q {
            for v in 0..q {
                normal[(u, v)] += wl * feat[u] * feat[v];
            }
            for r in 0..dim {
                rhs[(u, r)] += wl * feat[u] * b[l * dim + r];
            }
        }
    }
    let Some(theta) = normal.cholesky().map(|ch| ch.solve(&rhs)) else {
        return a.clone();
    };
    let mut mean = vec![0.0; dim];
    let mut lin = vec![0.0; dim * dim];
    for r in 0..dim {
        mean[r] = theta[(0, r)];
        for c in 0..dim {
            lin[r * dim + c] = theta[(1 + c, r)];
        }
    }
    if mean.iter().chain(&lin).any(|v| !v.is_finite()) {
        return a.clone();
    }
    Affine { mean, lin, reference: a.reference.clone() }
}

/// Linear interpolation of two states of the same component.
pub(crate) fn blend(from: &Component, to: &Component, alpha: f64, dim: usize) -> Component {
    match (&from.affine, &to.affine) {
        (Some(f), Some(t)) => {
            let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a + alpha * (b - a)).collect();
            let affine = Affine { mean: mix(&f.mean, &t.mean), lin: mix(&f.lin, &t.lin), reference: f.reference.clone() };
            Component::from_affine(affine, dim, ComponentModel::Affine)
        }
        _ => Component {
            support: from.support.iter().zip(&to.support).map(|(a, b)| a + alpha * (b - a)).collect(),
            affine: None,
            weights: None,
        },
    }
}

/// Result of one alternating run.
pub(crate) struct Outcome {
    pub components: Vec<Component>,
    pub transports: Vec<MixtureTransport>,
    pub trace: Vec<f64>,
    pub converged: bool,
}

pub(crate) fn objective(transports: &[MixtureTransport]) -> f64 {
    transports.iter().map(|t| t.objective).sum()
}

/// Plain alternation: exact LP, convergence check, guarded support update.
pub(crate) fn alternate(
    alt: &mut Alternator<'_>,
    mut components: Vec<Component>,
    max_iters: usize,
    tol: f64,
) -> Result<Outcome> {
    let mut done = vec![false; components.len()];
    let mut transports = alt.solve(&components)?;
    let mut trace = vec![objective(&transports)];
    let mut converged = false;
    for _ in 1..max_iters {
        let current = *trace.last().unwrap();
        let mut moved = alt.reseed_empty(&mut components, &transports, &mut done);
        if !moved {
            let before = components.iter().map(|c| c.support.clone()).collect::<Vec<_>>();
            alt.update(&mut components, &transports);
            moved = components.iter().zip(&before).any(|(c, b)| &c.support != b);
        }
        if !moved || current == 0.0 {
            converged = true;
            break;
        }
        let next = alt.solve(&components)?;
        let value = objective(&next);
        transports = next;
        trace.push(value);
        if (current - value) <= tol * current.abs() {
            converged = true;
            break;
        }
    }
    Ok(Outcome { components, transports, trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cloud_is_whitened() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = reference_cloud(40, 2, &mut rng);
        let mut mean = [0.0; 2];
        let mut cov = [0.0; 4];
        for p in z.chunks_exact(2) {
            mean[0] += p[0] / 40.0;
            mean[1] += p[1] / 40.0;
        }
        for p in z.chunks_exact(2) {
            for a in 0..2 {
                for b in 0..2 {
                    cov[a * 2 + b] += p[a] * p[b] / 40.0;
                }
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 1e-12));
        assert!((cov[0] - 1.0).abs() < 1e-9 && (cov[3] - 1.0).abs() < 1e-9 && cov[1].abs() < 1e-9);
    }

    #[test]
    fn seeding_is_order_independent() {
        let a = DiscreteDistribution::from_flat_uniform(1, vec![0.0, 0.1, 5.0]).unwrap();
        let b = DiscreteDistribution::from_flat_uniform(1, vec![5.2, 9.0]).unwrap();
        let s1 = seed_components(&[&a, &b], 2, 4, ComponentModel::Affine, 11).unwrap();
        let s2 = seed_components(&[&b, &a], 2, 4, ComponentModel::Affine, 11).unwrap();
        for (x, y) in s1.iter().zip(&s2) {
            assert_eq!(x.support, y.support);
        }
    }

    #[test]
    fn affine_fit_recovers_exact_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reference = reference_cloud(10, 2, &mut rng);
        let a = Affine { mean: vec![0.0, 0.0], lin: vec![1.0, 0.0, 0.0, 1.0], reference };
        let truth = Affine { mean: vec![1.0, -2.0], lin: vec![0.5, 0.1, -0.2, 0.3], reference: a.reference.clone() };
        let b = truth.support(2);
        let fitted = fit_affine(&a, &[0.1; 10], &b, 2, 1.0);
        for (x, y) in fitted.mean.iter().chain(&fitted.lin).zip(truth.mean.iter().chain(&truth.lin)) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_points() {
        let a = DiscreteDistribution::from_flat_uniform(1, vec![0.0]).unwrap();
        assert!(seed_components(&[&a], 2, 4, ComponentModel::Affine, 0).is_err());
    }
}
