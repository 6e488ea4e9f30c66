//! High-dimensional fixed-effect absorption by group demeaning.
//!
//! One factor is absorbed exactly in a single within-transformation pass.
//! Two factors use alternating projections (iterative demeaning by each
//! factor) until the largest column change falls below tolerance. The
//! Frisch-Waugh-Lovell theorem guarantees the slope coefficients match a
//! regression on the full dummy expansion, which the tests check against
//! a dense oracle. Fixed effects are never materialized as dummies here:
//! with thousands of time spans that would be infeasible at data scale.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::family::DisjointSet;
use crate::{Error, Result};

/// Convergence tolerance on the maximum absolute column change per cycle.
pub const ABSORB_TOL: f64 = 1e-8;
/// Iteration cap for alternating projections.
pub const ABSORB_MAX_ITER: u32 = 10_000;

/// Absorption outcome: convergence trace plus the degrees of freedom the
/// absorbed effects consume.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbOutcome {
    pub iterations: u32,
    pub max_delta: f64,
    /// Model degrees of freedom absorbed (levels, adjusted for connected
    /// components in the two-factor case).
    pub df_absorbed: usize,
    /// Distinct level count per absorbed factor.
    pub factor_levels: Vec<usize>,
    /// True when some factor has one level per row, which zeroes every
    /// column: nothing identifiable remains.
    pub saturated: bool,
}

fn level_count(factor: &[u32]) -> usize {
    let mut seen: BTreeMap<u32, ()> = BTreeMap::new();
    for &l in factor {
        seen.insert(l, ());
    }
    seen.len()
}

/// Degrees of freedom consumed by the absorbed effects: G for a single
/// factor; G1 + G2 − (connected components of the level co-occurrence
/// graph) for two factors.
fn absorbed_df(factors: &[&[u32]], n: usize) -> usize {
    match factors.len() {
        0 => 0,
        1 => level_count(factors[0]),
        2 => {
            let mut dsu = DisjointSet::new();
            let mut index_a: BTreeMap<u32, u32> = BTreeMap::new();
            let mut index_b: BTreeMap<u32, u32> = BTreeMap::new();
            for i in 0..n {
                let a = *index_a.entry(factors[0][i]).or_insert_with(|| dsu.push());
                let b = *index_b.entry(factors[1][i]).or_insert_with(|| dsu.push());
                dsu.union(a, b);
            }
            let total = dsu.len();
            let mut roots: BTreeMap<u32, ()> = BTreeMap::new();
            for i in 0..total as u32 {
                roots.insert(dsu.find(i), ());
            }
            index_a.len() + index_b.len() - roots.len()
        }
        _ => unreachable!(),
    }
}

/// Demean every column within the groups of one factor. Returns the
/// largest absolute adjustment applied.
fn demean_pass(columns: &mut [Vec<f64>], factor: &[u32], n_levels: usize) -> f64 {
    let n = factor.len();
    let mut sums = vec![0.0f64; n_levels];
    let mut counts = vec![0u32; n_levels];
    let mut max_adjust = 0.0f64;
    for col in columns.iter_mut() {
        for s in sums.iter_mut() {
            *s = 0.0;
        }
        for c in counts.iter_mut() {
            *c = 0;
        }
        for i in 0..n {
            sums[factor[i] as usize] += col[i];
            counts[factor[i] as usize] += 1;
        }
        for l in 0..n_levels {
            if counts[l] > 0 {
                sums[l] /= f64::from(counts[l]);
                let a = if sums[l] < 0.0 { -sums[l] } else { sums[l] };
                if a > max_adjust {
                    max_adjust = a;
                }
            }
        }
        for i in 0..n {
            col[i] -= sums[factor[i] as usize];
        }
    }
    max_adjust
}

/// Absorb up to two fixed-effect factors from the given columns in place,
/// with explicit tolerance and iteration cap.
///
/// Factors must be dense integer vectors aligned to rows (level ids in
/// 0..G). Columns are transformed in place.
pub fn absorb_with(
    columns: &mut [Vec<f64>],
    factors: &[&[u32]],
    tol: f64,
    max_iter: u32,
) -> Result<AbsorbOutcome> {
    if factors.len() > 2 {
        return Err(Error::config("at most two absorbed factors are supported"));
    }
    let n = columns.first().map_or(0, Vec::len);
    for f in factors {
        if f.len() != n {
            return Err(Error::data("factor length does not match rows"));
        }
    }
    if factors.is_empty() || n == 0 {
        return Ok(AbsorbOutcome {
            iterations: 0,
            max_delta: 0.0,
            df_absorbed: 0,
            factor_levels: alloc::vec::Vec::new(),
            saturated: false,
        });
    }

    let n_levels: Vec<usize> = factors
        .iter()
        .map(|f| f.iter().map(|&l| l as usize + 1).max().unwrap_or(0))
        .collect();
    let factor_levels: Vec<usize> = factors.iter().map(|f| level_count(f)).collect();
    let df_absorbed = absorbed_df(factors, n);
    let saturated = factor_levels.iter().any(|&c| c == n);

    if factors.len() == 1 {
        demean_pass(columns, factors[0], n_levels[0]);
        return Ok(AbsorbOutcome {
            iterations: 1,
            max_delta: 0.0,
            df_absorbed,
            factor_levels,
            saturated,
        });
    }

    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        delta = 0.0;
        for (f, &levels) in factors.iter().zip(&n_levels) {
            let d = demean_pass(columns, f, levels);
            if d > delta {
                delta = d;
            }
        }
        if delta < tol {
            return Ok(AbsorbOutcome {
                iterations,
                max_delta: delta,
                df_absorbed,
                factor_levels,
                saturated,
            });
        }
    }
    Err(Error::numerical(format!(
        "fixed-effect absorption did not converge: {iterations} iterations, last max change {delta:e}"
    )))
}

/// Absorb with the standard tolerance (1e-8) and iteration cap (10,000).
pub fn absorb_fixed_effects(columns: &mut [Vec<f64>], factors: &[&[u32]]) -> Result<AbsorbOutcome> {
    absorb_with(columns, factors, ABSORB_TOL, ABSORB_MAX_ITER)
}
