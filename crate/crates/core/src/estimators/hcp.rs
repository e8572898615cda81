use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use super::{check_observed, solvable_components, Component, Method, UserRecovery};
use crate::data::Bounds;
use crate::error::{Error, Result};
use crate::graph::ItemGraph;

/// Components with at most this many unknowns are solved by dense LU.
const DIRECT_MAX: usize = 256;
/// Dense LU is the fallback for iterative non-convergence up to this size.
const FALLBACK_MAX: usize = 2_000;
/// Largest tolerated |second derivative| on an unobserved item.
const RESIDUAL_TOL: f64 = 1e-10;

/// Harmonic interpolation: every unobserved item equals the weighted average
/// of its neighbors, with observed ratings as boundary values.
pub fn predict_hcp(
    graph: &ItemGraph,
    observed: &BTreeMap<usize, f64>,
    targets: &BTreeSet<usize>,
    bounds: Bounds,
) -> Result<UserRecovery> {
    check_observed(graph, observed, bounds)?;
    let mut out = UserRecovery::new(Method::Hcp, observed);
    let (components, abstain) = solvable_components(graph, observed, targets);
    out.abstentions = abstain;
    for comp in &components {
        let (values, iterations) = harmonic_extension(comp)?;
        out.diagnostics.iterations_used = out.diagnostics.iterations_used.max(iterations);
        let (lo, hi) = comp.observed_range();
        for (k, &i) in comp.nodes.iter().enumerate() {
            if targets.contains(&i) && comp.fixed[k].is_none() {
                debug_assert!(values[k] >= lo - 1e-6 && values[k] <= hi + 1e-6);
                out.estimates.insert(i, bounds.clamp(values[k]));
            }
        }
    }
    Ok(out)
}

/// Solves `(D - W)_UU x_U = W_UO r_O` on one component; returns the full
/// local rating vector and the number of iterations spent (0 for LU).
pub(crate) fn harmonic_extension(comp: &Component) -> Result<(Vec<f64>, usize)> {
    harmonic_extension_with(comp, &comp.fixed)
}

/// As [`harmonic_extension`] with `fixed` replacing the component's pins.
pub(crate) fn harmonic_extension_with(comp: &Component, fixed: &[Option<f64>]) -> Result<(Vec<f64>, usize)> {
    let free: Vec<usize> = (0..comp.len()).filter(|&k| fixed[k].is_none()).collect();
    let mut slot = vec![usize::MAX; comp.len()];
    for (s, &k) in free.iter().enumerate() {
        slot[k] = s;
    }
    let rhs: Vec<f64> = free
        .iter()
        .map(|&k| {
            comp.adjacent(k)
                .iter()
                .filter_map(|&(j, w)| fixed[j].map(|r| w * r))
                .sum()
        })
        .collect();

    let (solution, iterations) = if free.len() <= DIRECT_MAX {
        (dense_solve(comp, &free, &slot, &rhs)?, 0)
    } else {
        match conjugate_gradient(comp, fixed, &free, &slot, &rhs) {
            Ok(found) => found,
            Err(_) if free.len() <= FALLBACK_MAX => (dense_solve(comp, &free, &slot, &rhs)?, 0),
            Err(err) => return Err(err),
        }
    };

    let mut values: Vec<f64> = fixed.iter().map(|r| r.unwrap_or(0.0)).collect();
    for (s, &k) in free.iter().enumerate() {
        values[k] = solution[s];
    }
    Ok((values, iterations))
}

fn dense_solve(comp: &Component, free: &[usize], slot: &[usize], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = free.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (s, &k) in free.iter().enumerate() {
        a[(s, s)] = comp.degree[k];
        for &(j, w) in comp.adjacent(k) {
            if slot[j] != usize::MAX {
                a[(s, slot[j])] -= w;
            }
        }
    }
    let b = DVector::from_column_slice(rhs);
    let x = a.lu().solve(&b).ok_or(Error::NoConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    Ok(x.iter().copied().collect())
}

/// Jacobi-preconditioned CG on the symmetric positive definite system.
fn conjugate_gradient(
    comp: &Component,
    fixed: &[Option<f64>],
    free: &[usize],
    slot: &[usize],
    rhs: &[f64],
) -> Result<(Vec<f64>, usize)> {
    let m = free.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        for (s, &k) in free.iter().enumerate() {
            let mut acc = comp.degree[k] * x[s];
            for &(j, w) in comp.adjacent(k) {
                if slot[j] != usize::MAX {
                    acc -= w * x[slot[j]];
                }
            }
            out[s] = acc;
        }
    };
    let diag: Vec<f64> = free.iter().map(|&k| comp.degree[k]).collect();
    let (lo, hi) = fixed
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(r), hi.max(r))
        });
    let mut x = vec![0.5 * (lo + hi); m];
    let mut ax = vec![0.0; m];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let scaled_residual = |r: &[f64]| r.iter().zip(&diag).fold(0.0f64, |acc, (ri, d)| acc.max((ri / d).abs()));

    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; m];
    let cap = 100 * m;
    let mut residual = scaled_residual(&r);
    for it in 0..cap {
        if residual <= RESIDUAL_TOL {
            return Ok((x, it));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for s in 0..m {
            x[s] += alpha * p[s];
            r[s] -= alpha * ap[s];
        }
        residual = scaled_residual(&r);
        for s in 0..m {
            z[s] = r[s] / diag[s];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for s in 0..m {
            p[s] = z[s] + beta * p[s];
        }
    }
    if residual <= RESIDUAL_TOL {
        return Ok((x, cap));
    }
    Err(Error::NoConvergence {
        iterations: cap,
        residual,
    })
}
