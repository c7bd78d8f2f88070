//! Exact primal simplex for transportation problems whose target marginal is
//! a mixture with free proportions.
//!
//! Variables are the plan entries `T[s][j]` (source `s`, support point `j`)
//! and one proportion `π_g` per group. Constraints:
//!
//! ```text
//!   Σ_j T[s][j]                        = a_s            (every source s)
//!  −Σ_s T[s][j] + w_j · π'_{g(j)}      = −floor · w_j   (every support j)
//! ```
//!
//! with `π_g = floor + π'_g` and each group's weights `w_j` summing to one.
//! `Σ π = 1` is implied by the source supplies. A single group reproduces
//! the ordinary transportation problem.
//!
//! A basis is a spanning forest of plan entries together with exactly one
//! basic proportion column per tree. Primal and dual values are obtained by
//! tree sweeps plus a `c × c` dense solve, where `c` is the number of trees
//! (at most the number of groups). Degeneracy is handled by a tiny
//! perturbation of the supplies with a Bland fallback when stalling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;
const PIVOT_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-14;
const PERTURBATION: f64 = 1e-12;
const STALL_LIMIT: usize = 50;

/// Input of one solve. `group_of` gives the owning group of every support
/// point; supports of one group need not be contiguous.
pub(crate) struct Problem<'a> {
    pub supply: &'a [f64],
    /// Row-major `n × m`.
    pub cost: &'a [f64],
    pub group_of: &'a [usize],
    pub weights: &'a [f64],
    pub groups: usize,
    pub floor: f64,
    /// Optional 1-D ordering keys used to build the starting basis.
    pub source_key: Option<&'a [f64]>,
    pub support_key: Option<&'a [f64]>,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.supply.len()
    }

    fn m(&self) -> usize {
        self.weights.len()
    }
}

/// Reusable basis; valid for any problem with the same supplies, weights,
/// groups and floor (costs may differ).
#[derive(Debug, Clone)]
pub(crate) struct Basis {
    n: usize,
    m: usize,
    arcs: Vec<(u32, u32)>,
    groups: Vec<u32>,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    /// Nonzero plan entries `(source, support, mass)`.
    pub flows: Vec<(usize, usize, f64)>,
    pub proportions: Vec<f64>,
    pub objective: f64,
    /// Dual potentials with `u_s + v_j ≤ c_sj`.
    pub source_potential: Vec<f64>,
    pub support_potential: Vec<f64>,
    pub basis: Basis,
    #[allow(dead_code)]
    pub pivots: usize,
}

pub(crate) fn solve(problem: &Problem<'_>, warm: Option<&Basis>) -> Result<Solution> {
    validate(problem)?;
    let mut engine = Engine::new(problem);
    let warm_ok = match warm {
        Some(b) if b.n == engine.n && b.m == engine.m => engine.try_install(b),
        _ => false,
    };
    if !warm_ok {
        engine.cold_start()?;
    }
    engine.run()?;
    engine.finish()
}

fn validate(p: &Problem<'_>) -> Result<()> {
    let (n, m) = (p.n(), p.m());
    if n == 0 || m == 0 {
        return Err(Error::EmptyDataset);
    }
    if p.cost.len() != n * m || p.group_of.len() != m {
        return Err(Error::Solver("inconsistent problem dimensions".into()));
    }
    if n + m >= NONE as usize {
        return Err(Error::Solver("problem too large".into()));
    }
    if p.groups == 0 || p.group_of.iter().any(|&g| g >= p.groups) {
        return Err(Error::Solver("invalid group index".into()));
    }
    if p.supply.iter().chain(p.weights).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Solver("supplies and weights must be positive".into()));
    }
    if !(p.floor >= 0.0 && p.floor * p.groups as f64 <= 1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!("proportion floor {} is infeasible", p.floor)));
    }
    Ok(())
}

/// Deterministic pseudo-random value in `[1, 2)`.
fn jitter(i: usize) -> f64 {
    let mut z = (i as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    1.0 + (z >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Clone, Copy)]
enum Entering {
    Arc(u32, u32),
    Group(u32),
}

struct Engine<'a> {
    p: &'a Problem<'a>,
    n: usize,
    m: usize,
    nodes: usize,
    rhs: Vec<f64>,
    rhs_exact: Vec<f64>,
    cost_scale: f64,

    arcs: Vec<(u32, u32)>,
    bgroups: Vec<u32>,
    group_col: Vec<u32>,

    // forest
    offsets: Vec<u32>,
    adj: Vec<(u32, u32)>,
    tree_of: Vec<u32>,
    parent: Vec<u32>,
    parent_arc: Vec<u32>,
    depth: Vec<u32>,
    first_child: Vec<u32>,
    next_sibling: Vec<u32>,
    prev_sibling: Vec<u32>,
    /// Breadth-first order; stale after in-tree pivots until the next refactor.
    order: Vec<u32>,
    order_stale: bool,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    lu_t: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,

    // values
    flows: Vec<f64>,
    pvals: Vec<f64>,
    /// Node potentials relative to their tree; the full dual is `y + kappa[tree]`.
    y: Vec<f64>,
    kappa: Vec<f64>,
    /// Right-hand side of `Aᵀ kappa = g`.
    g: Vec<f64>,
    dflows: Vec<f64>,
    dp: Vec<f64>,
    excess: Vec<f64>,
    col: Vec<f64>,
    side_s: Vec<u32>,
    side_j: Vec<u32>,
    stack: Vec<u32>,

    cursor: usize,
    block: usize,
    pivots: usize,
}

/// Full recomputation interval bounding round-off drift of in-tree updates.
const REFRESH: usize = 5000;

impl<'a> Engine<'a> {
    fn new(p: &'a Problem<'a>) -> Self {
        let (n, m) = (p.n(), p.m());
        let nodes = n + m;
        let mut rhs = vec![0.0; nodes];
        let mut rhs_exact = vec![0.0; nodes];
        for s in 0..n {
            rhs_exact[s] = p.supply[s];
            rhs[s] = p.supply[s] + PERTURBATION * jitter(s);
        }
        for j in 0..m {
            rhs_exact[n + j] = -p.floor * p.weights[j];
            rhs[n + j] = rhs_exact[n + j];
        }
        let cost_scale = p.cost.iter().copied().fold(0.0, f64::max).max(1e-300);
        let block = ((n * m) as f64).sqrt().ceil().max(64.0) as usize;
        Self {
            p,
            n,
            m,
            nodes,
            rhs,
            rhs_exact,
            cost_scale,
            arcs: Vec::new(),
            bgroups: Vec::new(),
            group_col: vec![NONE; p.groups],
            offsets: vec![0; nodes + 1],
            adj: Vec::new(),
            tree_of: vec![NONE; nodes],
            parent: vec![NONE; nodes],
            parent_arc: vec![NONE; nodes],
            depth: vec![0; nodes],
            first_child: vec![NONE; nodes],
            next_sibling: vec![NONE; nodes],
            prev_sibling: vec![NONE; nodes],
            order: Vec::with_capacity(nodes),
            order_stale: false,
            lu: None,
            lu_t: None,
            flows: Vec::new(),
            pvals: Vec::new(),
            y: vec![0.0; nodes],
            kappa: Vec::new(),
            g: Vec::new(),
            dflows: Vec::new(),
            dp: Vec::new(),
            excess: vec![0.0; nodes],
            col: vec![0.0; nodes],
            side_s: Vec::new(),
            side_j: Vec::new(),
            stack: Vec::new(),
            cursor: 0,
            block: block.min(n * m),
            pivots: 0,
        }
    }

    #[inline]
    fn cost(&self, s: u32, j: u32) -> f64 {
        self.p.cost[s as usize * self.m + j as usize]
    }

    fn try_install(&mut self, basis: &Basis) -> bool {
        if basis.arcs.len() + basis.groups.len() != self.nodes {
            return false;
        }
        if basis.groups.iter().any(|&g| g as usize >= self.p.groups) {
            return false;
        }
        self.arcs.clone_from(&basis.arcs);
        self.bgroups.clone_from(&basis.groups);
        if self.refactor().is_err() {
            return false;
        }
        self.primal_values().is_ok()
            && self.flows.iter().chain(&self.pvals).all(|&x| x >= -HARRIS_TOL)
    }

    /// Starting basis: every source joins the group of its cheapest support
    /// point; each group with sources forms one north-west-corner tree.
    fn cold_start(&mut self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let k = self.p.groups;
        let mut nearest_group = vec![0usize; n];
        for (s, ng) in nearest_group.iter_mut().enumerate() {
            let row = &self.p.cost[s * m..(s + 1) * m];
            let j = argmin(row);
            *ng = self.p.group_of[j];
        }
        let mut block_of_group = vec![NONE; k];
        let mut blocks: Vec<(Vec<u32>, Vec<u32>, usize)> = Vec::new();
        for s in 0..n {
            let g = nearest_group[s];
            if block_of_group[g] == NONE {
                block_of_group[g] = blocks.len() as u32;
                blocks.push((Vec::new(), Vec::new(), g));
            }
            blocks[block_of_group[g] as usize].0.push(s as u32);
        }
        for j in 0..m {
            let g = self.p.group_of[j];
            let b = if block_of_group[g] != NONE {
                block_of_group[g]
            } else {
                // attach to the block of the cheapest source
                let s = (0..n)
                    .min_by(|&a, &b| self.cost(a as u32, j as u32).total_cmp(&self.cost(b as u32, j as u32)))
                    .unwrap();
                block_of_group[nearest_group[s]]
            };
            blocks[b as usize].1.push(j as u32);
        }

        let feasible = blocks.iter().all(|(srcs, sups, _)| self.block_mass(srcs, sups) >= 0.0);
        if !feasible {
            blocks = vec![((0..n as u32).collect(), (0..m as u32).collect(), 0)];
        }

        self.arcs.clear();
        self.bgroups.clear();
        for (srcs, sups, g) in blocks.iter_mut() {
            let pi = self.block_mass(srcs, sups).max(0.0);
            if let Some(key) = self.p.source_key {
                srcs.sort_by(|&a, &b| key[a as usize].total_cmp(&key[b as usize]));
            }
            if let Some(key) = self.p.support_key {
                sups.sort_by(|&a, &b| key[a as usize].total_cmp(&key[b as usize]));
            }
            let demand = |j: u32| {
                let j = j as usize;
                let own = if self.p.group_of[j] == *g { pi * self.p.weights[j] } else { 0.0 };
                -self.rhs[n + j] + own
            };
            let (mut i, mut jj) = (0usize, 0usize);
            let mut rem_s = self.rhs[srcs[0] as usize];
            let mut rem_d = demand(sups[0]);
            loop {
                self.arcs.push((srcs[i], sups[jj]));
                let last_i = i + 1 == srcs.len();
                let last_j = jj + 1 == sups.len();
                if last_i && last_j {
                    break;
                }
                if last_j || (!last_i && rem_s < rem_d) {
                    rem_d -= rem_s;
                    i += 1;
                    rem_s = self.rhs[srcs[i] as usize];
                } else {
                    rem_s -= rem_d;
                    jj += 1;
                    rem_d = demand(sups[jj]);
                }
            }
            self.bgroups.push(*g as u32);
        }
        self.refactor()?;
        self.primal_values()
    }

    fn block_mass(&self, srcs: &[u32], sups: &[u32]) -> f64 {
        let supply: f64 = srcs.iter().map(|&s| self.rhs[s as usize]).sum();
        let fixed: f64 = sups.iter().map(|&j| -self.rhs[self.n + j as usize]).sum();
        supply - fixed
    }

    /// Rebuilds the forest structure and factors the tree/group matrix.
    fn refactor(&mut self) -> Result<()> {
        let nodes = self.nodes;
        let n = self.n as u32;
        self.offsets.iter_mut().for_each(|o| *o = 0);
        for &(s, j) in &self.arcs {
            self.offsets[s as usize + 1] += 1;
            self.offsets[(n + j) as usize + 1] += 1;
        }
        for v in 0..nodes {
            self.offsets[v + 1] += self.offsets[v];
        }
        self.adj.resize(2 * self.arcs.len(), (0, 0));
        let mut fill: Vec<u32> = self.offsets[..nodes].to_vec();
        for (e, &(s, j)) in self.arcs.iter().enumerate() {
            let (a, b) = (s as usize, (n + j) as usize);
            self.adj[fill[a] as usize] = (n + j, e as u32);
            fill[a] += 1;
            self.adj[fill[b] as usize] = (s, e as u32);
            fill[b] += 1;
        }

        self.tree_of.iter_mut().for_each(|t| *t = NONE);
        self.first_child.iter_mut().for_each(|c| *c = NONE);
        self.order.clear();
        let mut trees = 0u32;
        for root in 0..nodes {
            if self.tree_of[root] != NONE {
                continue;
            }
            self.tree_of[root] = trees;
            self.parent[root] = NONE;
            self.parent_arc[root] = NONE;
            self.depth[root] = 0;
            let start = self.order.len();
            self.order.push(root as u32);
            let mut head = start;
            while head < self.order.len() {
                let v = self.order[head] as usize;
                head += 1;
                for idx in self.offsets[v]..self.offsets[v + 1] {
                    let (w, e) = self.adj[idx as usize];
                    if e == self.parent_arc[v] {
                        continue;
                    }
                    if self.tree_of[w as usize] != NONE {
                        return Err(Error::Solver("basis contains a cycle".into()));
                    }
                    self.tree_of[w as usize] = trees;
                    self.parent[w as usize] = v as u32;
                    self.parent_arc[w as usize] = e;
                    self.depth[w as usize] = self.depth[v] + 1;
                    self.attach(w, v as u32);
                    self.order.push(w);
                }
            }
            trees += 1;
        }
        self.order_stale = false;
        let c = self.bgroups.len();
        if trees as usize != c {
            return Err(Error::Solver(format!("basis has {trees} trees but {c} proportion columns")));
        }

        self.group_col.iter_mut().for_each(|g| *g = NONE);
        for (q, &g) in self.bgroups.iter().enumerate() {
            self.group_col[g as usize] = q as u32;
        }
        let mut a = DMatrix::<f64>::zeros(c, c);
        for j in 0..self.m {
            let q = self.group_col[self.p.group_of[j]];
            if q != NONE {
                a[(self.tree_of[self.n + j] as usize, q as usize)] += self.p.weights[j];
            }
        }
        let lu = a.clone().lu();
        if !lu.is_invertible() || lu.determinant().abs() < 1e-300 {
            return Err(Error::Solver("singular proportion block".into()));
        }
        self.lu = Some(lu);
        self.lu_t = Some(a.transpose().lu());
        Ok(())
    }

    #[inline]
    fn attach(&mut self, v: u32, p: u32) {
        let head = self.first_child[p as usize];
        self.next_sibling[v as usize] = head;
        self.prev_sibling[v as usize] = NONE;
        if head != NONE {
            self.prev_sibling[head as usize] = v;
        }
        self.first_child[p as usize] = v;
    }

    #[inline]
    fn detach(&mut self, v: u32) {
        let (prev, next) = (self.prev_sibling[v as usize], self.next_sibling[v as usize]);
        if prev != NONE {
            self.next_sibling[prev as usize] = next;
        } else {
            self.first_child[self.parent[v as usize] as usize] = next;
        }
        if next != NONE {
            self.prev_sibling[next as usize] = prev;
        }
    }

    fn ensure_order(&mut self) -> Result<()> {
        if self.order_stale {
            self.refactor()?;
        }
        Ok(())
    }

    /// Solves `B x = rhs`; returns per-arc values in `flows` and per-group
    /// values in `p`.
    fn solve_columns(&mut self, rhs_kind: Rhs, flows: &mut Vec<f64>, p: &mut Vec<f64>) -> Result<()> {
        debug_assert!(!self.order_stale);
        let (n, c) = (self.n, self.bgroups.len());
        match rhs_kind {
            Rhs::Perturbed => self.excess.copy_from_slice(&self.rhs),
            Rhs::Exact => self.excess.copy_from_slice(&self.rhs_exact),
            Rhs::Column => self.excess.copy_from_slice(&self.col),
        }
        let mut sums = DVector::<f64>::zeros(c);
        for v in 0..self.nodes {
            sums[self.tree_of[v] as usize] += self.excess[v];
        }
        let sol = self
            .lu
            .as_ref()
            .unwrap()
            .solve(&sums)
            .ok_or_else(|| Error::Solver("singular proportion block".into()))?;
        p.clear();
        p.extend(sol.iter());
        for j in 0..self.m {
            let q = self.group_col[self.p.group_of[j]];
            if q != NONE {
                self.excess[n + j] -= self.p.weights[j] * p[q as usize];
            }
        }
        flows.clear();
        flows.resize(self.arcs.len(), 0.0);
        for idx in (0..self.order.len()).rev() {
            let v = self.order[idx] as usize;
            let par = self.parent[v];
            if par == NONE {
                continue;
            }
            let ex = self.excess[v];
            flows[self.parent_arc[v] as usize] = if v < n { ex } else { -ex };
            self.excess[par as usize] += ex;
        }
        Ok(())
    }

    fn primal_values(&mut self) -> Result<()> {
        let (mut f, mut p) = (std::mem::take(&mut self.flows), std::mem::take(&mut self.pvals));
        let r = self.solve_columns(Rhs::Perturbed, &mut f, &mut p);
        self.flows = f;
        self.pvals = p;
        r
    }

    /// Tree potentials from scratch, then the per-tree constants.
    fn dual_values(&mut self) -> Result<()> {
        debug_assert!(!self.order_stale);
        let n = self.n;
        for idx in 0..self.order.len() {
            let v = self.order[idx] as usize;
            let par = self.parent[v];
            if par == NONE {
                self.y[v] = 0.0;
                continue;
            }
            let (s, j) = self.arcs[self.parent_arc[v] as usize];
            let c = self.cost(s, j);
            self.y[v] = if v < n { self.y[par as usize] + c } else { self.y[par as usize] - c };
        }
        self.g.clear();
        self.g.resize(self.bgroups.len(), 0.0);
        for j in 0..self.m {
            let q = self.group_col[self.p.group_of[j]];
            if q != NONE {
                self.g[q as usize] -= self.p.weights[j] * self.y[n + j];
            }
        }
        self.solve_kappa()
    }

    fn solve_kappa(&mut self) -> Result<()> {
        let g = DVector::from_column_slice(&self.g);
        let kappa = self
            .lu_t
            .as_ref()
            .unwrap()
            .solve(&g)
            .ok_or_else(|| Error::Solver("singular proportion block".into()))?;
        self.kappa.clear();
        self.kappa.extend(kappa.iter());
        Ok(())
    }

    #[inline]
    fn full_dual(&self, v: usize) -> f64 {
        self.y[v] + self.kappa[self.tree_of[v] as usize]
    }

    #[inline]
    fn arc_reduced_cost(&self, s: usize, j: usize) -> f64 {
        self.p.cost[s * self.m + j] - self.full_dual(s) + self.full_dual(self.n + j)
    }

    fn group_reduced_costs(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.p.groups];
        for j in 0..self.m {
            d[self.p.group_of[j]] -= self.p.weights[j] * self.full_dual(self.n + j);
        }
        d
    }

    fn price(&mut self, bland: bool) -> Option<Entering> {
        let tol = 1e-12 * self.cost_scale.max(1.0);
        let gd = self.group_reduced_costs();
        let (n, m) = (self.n, self.m);
        let total = n * m;
        if bland {
            for a in 0..total {
                if self.arc_reduced_cost(a / m, a % m) < -tol {
                    return Some(Entering::Arc((a / m) as u32, (a % m) as u32));
                }
            }
            return gd.iter().position(|&d| d < -tol).map(|g| Entering::Group(g as u32));
        }
        let mut best_group: Option<(u32, f64)> = None;
        for (g, &d) in gd.iter().enumerate() {
            if d < -tol && best_group.is_none_or(|(_, bd)| d < bd) {
                best_group = Some((g as u32, d));
            }
        }
        let mut scanned = 0;
        let mut a = self.cursor;
        let (mut s, mut j) = (a / m, a % m);
        let mut ys = self.full_dual(s);
        while scanned < total {
            let end = (scanned + self.block).min(total);
            let mut best: Option<(u32, u32, f64)> = None;
            while scanned < end {
                let d = self.p.cost[a] - ys + self.full_dual(n + j);
                if d < -tol && best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((s as u32, j as u32, d));
                }
                scanned += 1;
                a += 1;
                j += 1;
                if j == m {
                    j = 0;
                    s += 1;
                    if s == n {
                        s = 0;
                        a = 0;
                    }
                    ys = self.full_dual(s);
                }
            }
            if best.is_some() || best_group.is_some() {
                self.cursor = a;
                return match (best, best_group) {
                    (Some((_, _, da)), Some((g, dg))) if dg < da => Some(Entering::Group(g)),
                    (Some((s, j, _)), _) => Some(Entering::Arc(s, j)),
                    (None, Some((g, _))) => Some(Entering::Group(g)),
                    (None, None) => unreachable!(),
                };
            }
        }
        None
    }

    fn run(&mut self) -> Result<()> {
        let max_pivots = 100 * self.nodes + 10_000;
        let mut stalled = 0usize;
        let mut bland = false;
        self.dual_values()?;
        loop {
            let Some(entering) = self.price(bland) else {
                return Ok(());
            };
            self.pivots += 1;
            if self.pivots > max_pivots {
                return Err(Error::Solver("simplex iteration limit reached".into()));
            }
            let theta = match entering {
                Entering::Arc(s, j) if self.tree_of[s as usize] == self.tree_of[self.n + j as usize] => {
                    self.pivot_in_tree(s, j, bland)?
                }
                _ => self.pivot_general(entering, bland)?,
            };
            if theta <= 1e-16 {
                stalled += 1;
                if stalled > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stalled = 0;
                bland = false;
            }
            if self.pivots % REFRESH == 0 {
                self.refactor()?;
                self.primal_values()?;
                self.dual_values()?;
            }
        }
    }

    /// Pivot on an arc whose endpoints share a tree: only the cycle through
    /// the tree changes, proportions and tree memberships stay fixed.
    fn pivot_in_tree(&mut self, s: u32, j: u32, bland: bool) -> Result<f64> {
        let n = self.n as u32;
        let (mut u, mut v) = (s, n + j);
        self.side_s.clear();
        self.side_j.clear();
        while self.depth[u as usize] > self.depth[v as usize] {
            self.side_s.push(u);
            u = self.parent[u as usize];
        }
        while self.depth[v as usize] > self.depth[u as usize] {
            self.side_j.push(v);
            v = self.parent[v as usize];
        }
        while u != v {
            self.side_s.push(u);
            self.side_j.push(v);
            u = self.parent[u as usize];
            v = self.parent[v as usize];
        }

        // Arcs above a source on the s side and above a support on the j side
        // decrease as the entering arc grows.
        let mut leave: Option<(u32, bool, f64)> = None;
        let mut best_index = usize::MAX;
        let candidates = self
            .side_s
            .iter()
            .filter(|&&c| c < n)
            .map(|&c| (c, true))
            .chain(self.side_j.iter().filter(|&&c| c >= n).map(|&c| (c, false)));
        for (c, on_s) in candidates {
            let e = self.parent_arc[c as usize] as usize;
            let ratio = self.flows[e].max(0.0);
            let better = match leave {
                None => true,
                Some((_, _, r)) if bland => {
                    let (a, b) = self.arcs[e];
                    let index = a as usize * self.m + b as usize;
                    ratio < r || (ratio == r && index < best_index)
                }
                Some((_, _, r)) => ratio < r,
            };
            if better {
                let (a, b) = self.arcs[e];
                best_index = a as usize * self.m + b as usize;
                leave = Some((c, on_s, ratio));
            }
        }
        let (w, on_s, theta) = leave.ok_or_else(|| Error::Solver("cycle without blocking arc".into()))?;

        for &c in &self.side_s {
            let e = self.parent_arc[c as usize] as usize;
            self.flows[e] -= if c < n { theta } else { -theta };
        }
        for &c in &self.side_j {
            let e = self.parent_arc[c as usize] as usize;
            self.flows[e] -= if c < n { -theta } else { theta };
        }

        let d = self.arc_reduced_cost(s as usize, j as usize);
        let slot = self.parent_arc[w as usize];
        self.arcs[slot as usize] = (s, j);
        self.flows[slot as usize] = theta;
        let (q, p) = if on_s { (s, n + j) } else { (n + j, s) };
        let shift = if on_s { d } else { -d };

        // Re-hang the cut subtree below the entering arc by reversing the
        // path from q up to w.
        let (mut child, mut new_parent, mut new_arc) = (q, p, slot);
        loop {
            let old_parent = self.parent[child as usize];
            let old_arc = self.parent_arc[child as usize];
            self.detach(child);
            self.parent[child as usize] = new_parent;
            self.parent_arc[child as usize] = new_arc;
            self.attach(child, new_parent);
            if child == w {
                break;
            }
            new_parent = child;
            new_arc = old_arc;
            child = old_parent;
        }

        self.stack.clear();
        self.stack.push(q);
        while let Some(v) = self.stack.pop() {
            let vi = v as usize;
            self.depth[vi] = self.depth[self.parent[vi] as usize] + 1;
            self.y[vi] += shift;
            if v >= n {
                let col = self.group_col[self.p.group_of[vi - self.n]];
                if col != NONE {
                    self.g[col as usize] -= self.p.weights[vi - self.n] * shift;
                }
            }
            let mut c = self.first_child[vi];
            while c != NONE {
                self.stack.push(c);
                c = self.next_sibling[c as usize];
            }
        }
        self.order_stale = true;
        self.solve_kappa()?;
        Ok(theta)
    }

    /// Pivot that may change proportions or merge and split trees; solved
    /// with a full direction computation and refactorization.
    fn pivot_general(&mut self, entering: Entering, bland: bool) -> Result<f64> {
        self.ensure_order()?;
        // Direction: B Δ = column of the entering variable.
        self.col.iter_mut().for_each(|v| *v = 0.0);
        match entering {
            Entering::Arc(s, j) => {
                self.col[s as usize] = 1.0;
                self.col[self.n + j as usize] = -1.0;
            }
            Entering::Group(g) => {
                for j in 0..self.m {
                    if self.p.group_of[j] == g as usize {
                        self.col[self.n + j] = self.p.weights[j];
                    }
                }
            }
        }
        let (mut df, mut dp) = (std::mem::take(&mut self.dflows), std::mem::take(&mut self.dp));
        self.solve_columns(Rhs::Column, &mut df, &mut dp)?;

        // Harris two-pass ratio test over basic arcs then basic groups.
        let na = self.arcs.len();
        let value = |r: usize| if r < na { self.flows[r] } else { self.pvals[r - na] };
        let delta = |r: usize| if r < na { df[r] } else { dp[r - na] };
        let count = na + self.bgroups.len();
        let mut bound = f64::INFINITY;
        for r in 0..count {
            let d = delta(r);
            if d > PIVOT_TOL {
                bound = bound.min((value(r).max(0.0) + HARRIS_TOL) / d);
            }
        }
        if !bound.is_finite() {
            return Err(Error::Solver("unbounded direction in a bounded problem".into()));
        }
        let mut leave: Option<(usize, f64)> = None;
        if bland {
            let exact = (0..count)
                .filter(|&r| delta(r) > PIVOT_TOL)
                .map(|r| value(r).max(0.0) / delta(r))
                .fold(f64::INFINITY, f64::min);
            let mut best_index = usize::MAX;
            for r in 0..count {
                let d = delta(r);
                if d > PIVOT_TOL && value(r).max(0.0) / d <= exact * (1.0 + 1e-12) + 1e-300 {
                    let index = if r < na {
                        let (s, j) = self.arcs[r];
                        s as usize * self.m + j as usize
                    } else {
                        self.n * self.m + self.bgroups[r - na] as usize
                    };
                    if index < best_index {
                        best_index = index;
                        leave = Some((r, value(r).max(0.0) / d));
                    }
                }
            }
        } else {
            for r in 0..count {
                let d = delta(r);
                if d > PIVOT_TOL && value(r).max(0.0) / d <= bound && leave.is_none_or(|(lr, _)| d > delta(lr)) {
                    leave = Some((r, value(r).max(0.0) / d));
                }
            }
        }
        let (r, theta) = leave.expect("bound is finite so a candidate exists");
        self.dflows = df;
        self.dp = dp;

        match (entering, r < na) {
            (Entering::Arc(s, j), true) => self.arcs[r] = (s, j),
            (Entering::Arc(s, j), false) => {
                self.bgroups.swap_remove(r - na);
                self.arcs.push((s, j));
            }
            (Entering::Group(g), true) => {
                self.arcs.swap_remove(r);
                self.bgroups.push(g);
            }
            (Entering::Group(g), false) => self.bgroups[r - na] = g,
        }
        self.refactor()?;
        self.primal_values()?;
        self.dual_values()?;
        Ok(theta)
    }

    fn finish(mut self) -> Result<Solution> {
        self.refactor()?;
        self.dual_values()?;
        let (mut flows, mut p) = (Vec::new(), Vec::new());
        self.solve_columns(Rhs::Exact, &mut flows, &mut p)?;
        let worst = flows.iter().chain(&p).copied().fold(0.0, f64::min);
        if worst < -1e-7 {
            return Err(Error::Solver(format!("final basis infeasible by {worst}")));
        }
        let mut proportions = vec![self.p.floor; self.p.groups];
        for (q, &g) in self.bgroups.iter().enumerate() {
            proportions[g as usize] += p[q].max(0.0);
        }
        let mut plan = Vec::with_capacity(flows.len());
        let mut objective = 0.0;
        for (e, &(s, j)) in self.arcs.iter().enumerate() {
            let f = flows[e].max(0.0);
            if f > 0.0 {
                objective += f * self.cost(s, j);
                plan.push((s as usize, j as usize, f));
            }
        }
        plan.sort_unstable_by_key(|&(s, j, _)| (s, j));
        let source_potential = (0..self.n).map(|v| self.full_dual(v)).collect();
        let support_potential = (0..self.m).map(|j| -self.full_dual(self.n + j)).collect();
        log::trace!("simplex finished after {} pivots", self.pivots);
        Ok(Solution {
            flows: plan,
            proportions,
            objective,
            source_potential,
            support_potential,
            basis: Basis { n: self.n, m: self.m, arcs: self.arcs, groups: self.bgroups },
            pivots: self.pivots,
        })
    }
}

#[derive(Clone, Copy)]
enum Rhs {
    Perturbed,
    Exact,
    Column,
}

fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = j;
        }
    }
    best
}
