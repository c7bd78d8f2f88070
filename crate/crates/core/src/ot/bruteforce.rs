//! Exhaustive reference solver for tiny instances.
//!
//! Weights must be rationals with a common denominator `D`. Each point of
//! weight `c/D` is split into `c` unit copies, so the transport problem
//! becomes an assignment problem between `D` source and `D` target copies,
//! solved by dynamic programming over the remaining target counts. Any
//! optimal plan of the rational instance has an optimal assignment
//! counterpart, so the value is exact.

use crate::cost::{cost_matrix, Exponent};
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};

use super::TransportPlan;

pub const MAX_POINTS: usize = 8;
pub const MAX_DENOMINATOR: usize = 64;
const MAX_STATES: usize = 4_000_000;

/// Exact Wasserstein cost by enumeration. Fails with [`Error::TooLarge`]
/// beyond [`MAX_POINTS`] points per side, when the weights share no
/// denominator up to [`MAX_DENOMINATOR`], or when the state space is too big.
pub fn wasserstein_bruteforce(
    a: &DiscreteDistribution,
    b: &DiscreteDistribution,
    exponent: Exponent,
) -> Result<(f64, TransportPlan)> {
    a.check_dim(b)?;
    if a.len() > MAX_POINTS || b.len() > MAX_POINTS {
        return Err(Error::TooLarge(format!(
            "brute force handles at most {MAX_POINTS} points per side, got {}x{}",
            a.len(),
            b.len()
        )));
    }
    let (den, ca, cb) = common_counts(a.weights(), b.weights())?;
    let cost = cost_matrix(a, b, exponent)?;

    // Mixed-radix encoding of remaining target counts.
    let mut radix = Vec::with_capacity(cb.len());
    let mut states = 1usize;
    for &c in &cb {
        radix.push(states);
        states = states
            .checked_mul(c + 1)
            .filter(|&s| s <= MAX_STATES)
            .ok_or_else(|| Error::TooLarge("brute force state space too large".into()))?;
    }
    let full: usize = cb.iter().zip(&radix).map(|(c, r)| c * r).sum();
    let owner: Vec<usize> = ca.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();

    let remaining = |state: usize, j: usize| (state / radix[j]) % (cb[j] + 1);
    let used = |state: usize| den - (0..cb.len()).map(|j| remaining(state, j)).sum::<usize>();

    // best[state]: cheapest way to assign the first `used(state)` source copies.
    let mut best = vec![f64::INFINITY; states];
    let mut choice = vec![u8::MAX; states];
    best[full] = 0.0;
    let mut order: Vec<usize> = (0..states).collect();
    order.sort_by_key(|&s| used(s));
    for &s in &order {
        let here = best[s];
        if !here.is_finite() {
            continue;
        }
        let k = used(s);
        if k == den {
            continue;
        }
        let i = owner[k];
        for j in 0..cb.len() {
            if remaining(s, j) > 0 {
                let next = s - radix[j];
                let value = here + cost.get(i, j) / den as f64;
                if value < best[next] {
                    best[next] = value;
                    choice[next] = j as u8;
                }
            }
        }
    }

    let mut dense = vec![vec![0usize; b.len()]; a.len()];
    let mut s = 0usize;
    while s != full {
        let j = choice[s] as usize;
        let prev = s + radix[j];
        dense[owner[used(prev)]][j] += 1;
        s = prev;
    }
    let entries = dense
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(move |(j, &c)| (i, j, c as f64 / den as f64))
        })
        .collect();
    let value = best[0];
    Ok((value, TransportPlan::new(entries, a.weights().to_vec(), b.weights().to_vec(), value)))
}

fn common_counts(a: &[f64], b: &[f64]) -> Result<(usize, Vec<usize>, Vec<usize>)> {
    'den: for den in 1..=MAX_DENOMINATOR {
        let mut counts = [Vec::new(), Vec::new()];
        for (side, weights) in [a, b].into_iter().enumerate() {
            for &w in weights {
                let scaled = w * den as f64;
                let rounded = scaled.round();
                if (scaled - rounded).abs() > 1e-9 * den as f64 {
                    continue 'den;
                }
                counts[side].push(rounded as usize);
            }
            if counts[side].iter().sum::<usize>() != den {
                continue 'den;
            }
        }
        let [ca, cb] = counts;
        return Ok((den, ca, cb));
    }
    Err(Error::TooLarge(format!("weights share no denominator up to {MAX_DENOMINATOR}")))
}
