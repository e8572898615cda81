use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::data::Bounds;
use crate::error::{Error, Result};
use crate::graph::ItemGraph;

/// Refuse searches that would enumerate more source sets than this.
pub const MAX_ORACLE_CANDIDATES: u128 = 1_000_000;

/// Slack on the bound check for least-squares solutions.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct L0Solution {
    /// Items allowed a nonzero second derivative, ascending.
    pub sources: Vec<usize>,
    pub ratings: Vec<f64>,
    pub residual: f64,
    /// Whether the constraint system pins every rating uniquely. When it does
    /// not, `ratings` is the minimum-norm least-squares solution.
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L0Outcome {
    /// Smallest feasible source count, `None` when nothing up to the limit fits.
    pub min_source_count: Option<usize>,
    /// Every feasible solution at the minimal count, in lexicographic order of
    /// source sets.
    pub solutions: Vec<L0Solution>,
    pub candidates_checked: usize,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exhaustive search for the fewest items with nonzero second derivative.
///
/// For each cardinality `k = 0..=max_sources` every `k`-subset `S` is tried:
/// the system `{lap R(i) = 0, i not in S} + {R(i) = observed(i)}` is solved
/// in the least-squares sense and accepted when its residual norm is below
/// `residual_tol` and all ratings lie within `bounds`.
pub fn l0_oracle(
    graph: &ItemGraph,
    observed: &BTreeMap<usize, f64>,
    bounds: Bounds,
    max_sources: usize,
    residual_tol: f64,
) -> Result<L0Outcome> {
    let n = graph.len();
    let max_sources = max_sources.min(n);
    let candidates: u128 = (0..=max_sources).map(|k| binomial(n, k)).sum();
    if candidates > MAX_ORACLE_CANDIDATES {
        return Err(Error::SearchTooLarge {
            candidates,
            limit: MAX_ORACLE_CANDIDATES,
        });
    }
    for (&i, &r) in observed {
        if i >= n || !bounds.contains(r) {
            return Err(Error::InvalidArgument(format!("observation ({i}, {r}) invalid")));
        }
    }

    let laplacian_rows: Vec<Option<Vec<(usize, f64)>>> = (0..n)
        .map(|i| {
            let nbrs = graph.neighbors(i);
            if nbrs.is_empty() {
                return None;
            }
            let d = graph.degree(i);
            let mut row: Vec<(usize, f64)> = nbrs.iter().map(|&(j, w)| (j, w / d)).collect();
            row.push((i, -1.0));
            Some(row)
        })
        .collect();

    let mut checked = 0;
    for k in 0..=max_sources {
        let mut solutions = Vec::new();
        let mut subset: Vec<usize> = (0..k).collect();
        loop {
            checked += 1;
            if let Some(sol) = try_sources(&laplacian_rows, observed, &subset, n, bounds, residual_tol) {
                solutions.push(sol);
            }
            if !next_combination(&mut subset, n) {
                break;
            }
        }
        if !solutions.is_empty() {
            return Ok(L0Outcome {
                min_source_count: Some(k),
                solutions,
                candidates_checked: checked,
            });
        }
    }
    Ok(L0Outcome {
        min_source_count: None,
        solutions: Vec::new(),
        candidates_checked: checked,
    })
}

fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    for pos in (0..k).rev() {
        if subset[pos] < n - k + pos {
            subset[pos] += 1;
            for later in pos + 1..k {
                subset[later] = subset[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn try_sources(
    laplacian_rows: &[Option<Vec<(usize, f64)>>],
    observed: &BTreeMap<usize, f64>,
    sources: &[usize],
    n: usize,
    bounds: Bounds,
    residual_tol: f64,
) -> Option<L0Solution> {
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for (i, row) in laplacian_rows.iter().enumerate() {
        if let Some(row) = row {
            if sources.binary_search(&i).is_err() {
                rows.push((row.clone(), 0.0));
            }
        }
    }
    for (&i, &r) in observed {
        rows.push((vec![(i, 1.0)], r));
    }
    let mut a = DMatrix::<f64>::zeros(rows.len(), n);
    let mut b = DVector::<f64>::zeros(rows.len());
    for (row_idx, (row, rhs)) in rows.iter().enumerate() {
        for &(j, v) in row {
            a[(row_idx, j)] += v;
        }
        b[row_idx] = *rhs;
    }
    let svd = a.clone().svd(true, true);
    let scale = svd.singular_values.max().max(1.0);
    let rank_tol = 1e-10 * scale;
    let rank = svd.rank(rank_tol);
    let x = svd.solve(&b, rank_tol).ok()?;
    let residual = (&a * &x - &b).norm();
    if !(residual < residual_tol) {
        return None;
    }
    if x.iter()
        .any(|&v| v < bounds.low - BOUND_SLACK || v > bounds.high + BOUND_SLACK)
    {
        return None;
    }
    Some(L0Solution {
        sources: sources.to_vec(),
        ratings: x.iter().copied().collect(),
        residual,
        unique: rank == n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::square_toy;

    #[test]
    fn combinations_enumerate_in_order() {
        let mut s = vec![0, 1];
        let mut seen = vec![s.clone()];
        while next_combination(&mut s, 4) {
            seen.push(s.clone());
        }
        assert_eq!(
            seen,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        let mut empty: Vec<usize> = vec![];
        assert!(!next_combination(&mut empty, 4));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(26, 2), 325);
        assert_eq!(binomial(26, 0), 1);
        assert_eq!(binomial(4, 4), 1);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn square_tie_set() {
        // frozen from exact rational elimination over all 2-subsets:
        // {A,B} forces B = -1, the other five are feasible.
        let toy = square_toy();
        let out = l0_oracle(&toy.graph, &toy.observed, toy.bounds, 3, 1e-8).unwrap();
        assert_eq!(out.min_source_count, Some(2));
        let sets: Vec<Vec<usize>> = out.solutions.iter().map(|s| s.sources.clone()).collect();
        assert_eq!(sets, vec![vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let ac = &out.solutions[0];
        assert!((ac.ratings[1] - 13.0 / 3.0).abs() < 1e-9 && (ac.ratings[3] - 11.0 / 3.0).abs() < 1e-9);
        let ad = &out.solutions[1];
        assert!((ad.ratings[1] - 3.0).abs() < 1e-9 && (ad.ratings[3] - 1.0).abs() < 1e-9);
        assert!(out.solutions.iter().all(|s| s.unique));
    }

    #[test]
    fn consistent_full_observation_needs_no_source() {
        let toy = square_toy();
        let observed: BTreeMap<usize, f64> = (0..4).map(|i| (i, 2.5)).collect();
        let out = l0_oracle(&toy.graph, &observed, toy.bounds, 2, 1e-8).unwrap();
        assert_eq!(out.min_source_count, Some(0));
        assert_eq!(out.candidates_checked, 1);
    }

    #[test]
    fn infeasible_within_limit() {
        let toy = square_toy();
        let out = l0_oracle(&toy.graph, &toy.observed, toy.bounds, 1, 1e-8).unwrap();
        assert_eq!(out.min_source_count, None);
        assert!(out.solutions.is_empty());
        assert_eq!(out.candidates_checked, 5);
    }

    #[test]
    fn refuses_huge_search() {
        let labels: Vec<String> = (0..200).map(|i| i.to_string()).collect();
        let edges: Vec<(usize, usize, f64)> = (0..199).map(|i| (i, i + 1, 1.0)).collect();
        let g = ItemGraph::from_edges(labels, &edges).unwrap();
        let err = l0_oracle(&g, &BTreeMap::new(), Bounds { low: 1.0, high: 5.0 }, 3, 1e-8).unwrap_err();
        assert!(matches!(err, Error::SearchTooLarge { .. }));
    }
}
