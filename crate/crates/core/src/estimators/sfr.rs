//! Scalar function recovery: fill in a user's ratings so that the discrete
//! second derivative is sparse.
//!
//! The sparsity measure is `sum_k phi(lap_k)` with
//! `phi(x) = (x^2 + eps^2)^(p/2) - eps^p`, a smooth surrogate of `|x|^p`
//! that vanishes at zero together with its derivative. The reported
//! objective is `(sum_k phi)^(1/p)`, which is monotone in the sum.
//!
//! Minimization is projected gradient descent over unobserved items with a
//! halving line search and per-coordinate clamping to the rating bounds.
//! The first trial step is `initial_step`; later ones are Barzilai-Borwein
//! steps, and every accepted step strictly decreases the objective.
//!
//! The objective is nonconvex and the harmonic completion is a strict local
//! minimum of it, so besides descending directly from there the solver also
//! runs a continuation pass that starts with a large smoothing scale and
//! shrinks it geometrically to `smoothing_eps`. Each end point is also
//! polished by pinning its unobserved sources and re-solving the rest
//! harmonically. The candidate with the lowest objective wins.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hcp::{harmonic_extension, harmonic_extension_with};
use super::{check_observed, solvable_components, Component, Method, SolverConfig, UserRecovery};
use crate::data::Bounds;
use crate::error::Result;
use crate::graph::ItemGraph;

/// Smallest step tried before a line search gives up.
const MIN_STEP: f64 = 1e-18;

pub(crate) trait Operator {
    fn size(&self) -> usize;
    fn adjacent(&self, i: usize) -> &[(usize, f64)];
    fn weight_sum(&self, i: usize) -> f64;
}

impl Operator for ItemGraph {
    fn size(&self) -> usize {
        self.len()
    }
    fn adjacent(&self, i: usize) -> &[(usize, f64)] {
        self.neighbors(i)
    }
    fn weight_sum(&self, i: usize) -> f64 {
        self.degree(i)
    }
}

impl Operator for Component {
    fn size(&self) -> usize {
        self.len()
    }
    fn adjacent(&self, i: usize) -> &[(usize, f64)] {
        Component::adjacent(self, i)
    }
    fn weight_sum(&self, i: usize) -> f64 {
        self.degree[i]
    }
}

/// Smoothed `|x|^p`, evaluated as `eps^p * ((1 + (x/eps)^2)^(p/2) - 1)` so
/// that it is exactly zero at the origin.
pub fn penalty(x: f64, p: f64, eps: f64) -> f64 {
    let t = x / eps;
    eps.powf(p) * (0.5 * p * (t * t).ln_1p()).exp_m1()
}

pub fn penalty_derivative(x: f64, p: f64, eps: f64) -> f64 {
    p * x * (x * x + eps * eps).powf(0.5 * p - 1.0)
}

/// Second derivative per item; isolated items get 0 and are skipped by callers.
fn field_into<O: Operator>(op: &O, r: &[f64], out: &mut [f64]) {
    for (i, slot) in out.iter_mut().enumerate() {
        let nbrs = op.adjacent(i);
        *slot = if nbrs.is_empty() {
            0.0
        } else {
            nbrs.iter().map(|&(j, w)| w * r[j]).sum::<f64>() / op.weight_sum(i) - r[i]
        };
    }
}

fn sum_penalty<O: Operator>(op: &O, field: &[f64], p: f64, eps: f64) -> f64 {
    field
        .iter()
        .enumerate()
        .filter(|&(i, _)| !op.adjacent(i).is_empty())
        .map(|(_, &x)| penalty(x, p, eps))
        .sum()
}

/// Gradient of the smoothed sum with respect to the free coordinates:
/// `g_i = sum_{k in N(i)} w(i,k) phi'(lap_k) / d(k) - phi'(lap_i)`.
fn gradient_into<O: Operator>(
    op: &O,
    field: &[f64],
    free: &[usize],
    p: f64,
    eps: f64,
    scaled: &mut [f64],
    out: &mut [f64],
) {
    for (k, s) in scaled.iter_mut().enumerate() {
        *s = if op.adjacent(k).is_empty() {
            0.0
        } else {
            penalty_derivative(field[k], p, eps) / op.weight_sum(k)
        };
    }
    for (slot, &i) in out.iter_mut().zip(free) {
        let nbrs = op.adjacent(i);
        *slot = if nbrs.is_empty() {
            0.0
        } else {
            nbrs.iter().map(|&(k, w)| w * scaled[k]).sum::<f64>() - penalty_derivative(field[i], p, eps)
        };
    }
}

/// Sum of the smoothed penalty over all non-isolated items.
pub fn smoothed_sum(graph: &ItemGraph, ratings: &[f64], config: &SolverConfig) -> f64 {
    assert_eq!(ratings.len(), graph.len(), "one rating per item");
    let mut field = vec![0.0; graph.len()];
    field_into(graph, ratings, &mut field);
    sum_penalty(graph, &field, config.p, config.smoothing_eps)
}

/// Penalty norm `(sum_k phi(lap_k))^(1/p)`.
pub fn sfr_objective(graph: &ItemGraph, ratings: &[f64], config: &SolverConfig) -> f64 {
    smoothed_sum(graph, ratings, config).powf(1.0 / config.p)
}

/// Analytic gradient of [`smoothed_sum`] with respect to `ratings[i]` for
/// each `i` in `free`, in the order given.
pub fn sfr_gradient(graph: &ItemGraph, ratings: &[f64], free: &[usize], config: &SolverConfig) -> Vec<f64> {
    assert_eq!(ratings.len(), graph.len(), "one rating per item");
    let mut field = vec![0.0; graph.len()];
    field_into(graph, ratings, &mut field);
    let mut scaled = vec![0.0; graph.len()];
    let mut out = vec![0.0; free.len()];
    gradient_into(
        graph,
        &field,
        free,
        config.p,
        config.smoothing_eps,
        &mut scaled,
        &mut out,
    );
    out
}

#[derive(Debug, Clone)]
pub(crate) struct Descent {
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    /// Only filled when requested.
    #[allow(dead_code)]
    pub history: Vec<f64>,
}

/// Projected descent at a fixed smoothing scale, updating `x` in place.
///
/// The field is linear in the ratings, so each line-search trial updates it
/// from `L g` in O(n), plus a local correction around clamped coordinates.
pub(crate) fn descend<O: Operator>(
    op: &O,
    x: &mut [f64],
    free: &[usize],
    eps: f64,
    config: &SolverConfig,
    budget: usize,
    record: bool,
) -> Descent {
    let n = op.size();
    let bounds = config.bounds;
    let mut field = vec![0.0; n];
    let mut trial_field = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let mut grad = vec![0.0; free.len()];
    let mut dir = vec![0.0; n];
    let mut change = vec![0.0; n];
    let mut trial = x.to_vec();

    field_into(op, x, &mut field);
    let mut f = sum_penalty(op, &field, config.p, eps);
    let mut history = if record { vec![f] } else { Vec::new() };
    let mut iterations = 0;
    let mut converged = false;
    let mut last_step = config.initial_step;
    // previous iterate and gradient on the free coordinates, for the spectral step
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;

    while iterations < budget {
        if f == 0.0 {
            converged = true;
            break;
        }
        gradient_into(op, &field, free, config.p, eps, &mut scaled, &mut grad);
        // a coordinate on a bound that the step pushes outward cannot move
        for (&i, g) in free.iter().zip(grad.iter_mut()) {
            if (x[i] <= bounds.low && *g > 0.0) || (x[i] >= bounds.high && *g < 0.0) {
                *g = 0.0;
            }
            dir[i] = *g;
        }
        if grad.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }
        field_into(op, &dir, &mut change);

        let mut step = match &prev {
            Some((px, pg)) => {
                let (mut ss, mut sy) = (0.0, 0.0);
                for (s_i, (&i, &g)) in free.iter().zip(&grad).enumerate() {
                    let ds = x[i] - px[s_i];
                    ss += ds * ds;
                    sy += ds * (g - pg[s_i]);
                }
                if sy > 0.0 && ss > 0.0 {
                    ss / sy
                } else {
                    last_step / (config.backtrack_factor * config.backtrack_factor)
                }
            }
            None => config.initial_step,
        };
        let mut accepted = None;
        while step >= MIN_STEP {
            for ((t, &fv), &c) in trial_field.iter_mut().zip(&field).zip(&change) {
                *t = fv - step * c;
            }
            for (&i, &g) in free.iter().zip(&grad) {
                if g == 0.0 {
                    trial[i] = x[i];
                    continue;
                }
                let moved = x[i] - step * g;
                let kept = bounds.clamp(moved);
                trial[i] = kept;
                let delta = kept - moved;
                if delta != 0.0 && !op.adjacent(i).is_empty() {
                    trial_field[i] -= delta;
                    for &(k, w) in op.adjacent(i) {
                        trial_field[k] += w * delta / op.weight_sum(k);
                    }
                }
            }
            let ft = sum_penalty(op, &trial_field, config.p, eps);
            if ft < f {
                accepted = Some(ft);
                break;
            }
            step *= config.backtrack_factor;
        }
        let Some(f_next) = accepted else {
            // no descent direction survives projection: stationary point
            converged = true;
            break;
        };
        last_step = step;
        iterations += 1;
        let (px, pg) = prev.get_or_insert_with(|| (vec![0.0; free.len()], vec![0.0; free.len()]));
        for (s_i, &i) in free.iter().enumerate() {
            px[s_i] = x[i];
            pg[s_i] = grad[s_i];
            x[i] = trial[i];
            debug_assert!(bounds.contains(x[i]));
        }
        std::mem::swap(&mut field, &mut trial_field);
        let decrease = (f - f_next) / f;
        f = f_next;
        if record {
            history.push(f);
        }
        if decrease < config.objective_rel_tol {
            converged = true;
            break;
        }
    }
    if iterations > 0 {
        field_into(op, x, &mut field);
        f = sum_penalty(op, &field, config.p, eps);
    }
    Descent {
        iterations,
        objective: f,
        converged,
        history,
    }
}

/// Smoothing scales visited by the continuation pass, ending at `smoothing_eps`.
fn continuation_schedule(config: &SolverConfig) -> Vec<f64> {
    let mut stages = Vec::new();
    let mut eps = config.continuation_start_eps;
    while eps > config.smoothing_eps * (1.0 + 1e-12) {
        stages.push(eps);
        eps /= config.continuation_factor;
    }
    stages.push(config.smoothing_eps);
    stages
}

struct Candidate {
    values: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
}

fn run_start<O: Operator>(op: &O, start: Vec<f64>, free: &[usize], stages: &[f64], config: &SolverConfig) -> Candidate {
    let mut values = start;
    let mut used = 0;
    let mut last = None;
    for &eps in stages {
        let outcome = descend(op, &mut values, free, eps, config, config.max_iterations - used, false);
        used += outcome.iterations;
        last = Some(outcome);
    }
    let last = last.expect("at least one stage");
    Candidate {
        values,
        objective: last.objective,
        iterations: used,
        converged: last.converged,
    }
}

/// Recovers the user's rating function by minimizing the smoothed sparsity
/// penalty of its second derivative, warm-started at the harmonic completion.
pub fn predict_sfr(
    graph: &ItemGraph,
    observed: &BTreeMap<usize, f64>,
    targets: &BTreeSet<usize>,
    config: &SolverConfig,
) -> Result<UserRecovery> {
    config.validate()?;
    check_observed(graph, observed, config.bounds)?;
    let mut out = UserRecovery::new(Method::Sfr, observed);
    let (components, abstain) = solvable_components(graph, observed, targets);
    out.abstentions = abstain;

    let mut rng = ChaCha8Rng::seed_from_u64(config.restart_seed);
    let target_only = [config.smoothing_eps];
    let schedule = continuation_schedule(config);
    let mut total = 0.0;
    for comp in &components {
        let (warm, _) = harmonic_extension(comp)?;
        let warm: Vec<f64> = warm.into_iter().map(|v| config.bounds.clamp(v)).collect();
        let free = comp.free();

        let mut candidates = vec![run_start(comp, warm.clone(), &free, &target_only, config)];
        if config.continuation {
            candidates.push(run_start(comp, warm.clone(), &free, &schedule, config));
        }
        for _ in 0..config.restarts {
            let start = perturb(&warm, &free, config.restart_noise, config.bounds, &mut rng);
            let stages = if config.continuation {
                &schedule[..]
            } else {
                &target_only[..]
            };
            candidates.push(run_start(comp, start, &free, stages, config));
        }
        let mut polished = Vec::new();
        for cand in &candidates {
            if let Some(p) = polish(comp, cand, &free, config)? {
                polished.push(p);
            }
        }
        candidates.extend(polished);
        // earliest candidate wins ties, so the direct descent is preferred
        let best = candidates
            .into_iter()
            .reduce(|best, cand| if cand.objective < best.objective { cand } else { best })
            .expect("at least one candidate");

        let mut field = vec![0.0; comp.len()];
        field_into(comp, &best.values, &mut field);
        let sources = field
            .iter()
            .enumerate()
            .filter(|&(k, x)| !comp.adjacent(k).is_empty() && x.abs() > config.source_tolerance)
            .count();

        let diag = &mut out.diagnostics;
        diag.iterations_used = diag.iterations_used.max(best.iterations);
        diag.source_count += sources;
        diag.converged &= best.converged;
        total += best.objective;

        for (k, &i) in comp.nodes.iter().enumerate() {
            if targets.contains(&i) && comp.fixed[k].is_none() {
                out.estimates.insert(i, best.values[k]);
            }
        }
    }
    out.diagnostics.final_objective = total.powf(1.0 / config.p);
    Ok(out)
}

/// Pins the unobserved items the candidate treats as sources, re-solves the
/// remaining unobserved items harmonically, and descends from there. Leftover
/// small second derivatives off the support become exact zeros.
fn polish(comp: &Component, cand: &Candidate, free: &[usize], config: &SolverConfig) -> Result<Option<Candidate>> {
    let mut field = vec![0.0; comp.len()];
    field_into(comp, &cand.values, &mut field);
    let mut fixed = comp.fixed.clone();
    let mut pinned = 0;
    for &k in free {
        if field[k].abs() > config.source_tolerance {
            fixed[k] = Some(cand.values[k]);
            pinned += 1;
        }
    }
    if pinned == 0 || pinned == free.len() {
        return Ok(None);
    }
    let (start, _) = harmonic_extension_with(comp, &fixed)?;
    let start = start.into_iter().map(|v| config.bounds.clamp(v)).collect();
    let mut out = run_start(comp, start, free, &[config.smoothing_eps], config);
    out.iterations = out.iterations.max(cand.iterations);
    out.converged &= cand.converged;
    Ok(Some(out))
}

fn perturb(warm: &[f64], free: &[usize], noise: f64, bounds: Bounds, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut start = warm.to_vec();
    for &i in free {
        let delta = if noise > 0.0 {
            rng.random_range(-noise..=noise)
        } else {
            0.0
        };
        start[i] = bounds.clamp(start[i] + delta);
    }
    start
}
