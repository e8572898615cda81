//! Per-user rating estimators on an item graph.
//!
//! All estimators are pure functions of `(graph, observed, targets, config)`.
//! Observed ratings are hard constraints and are reported back unchanged.
//! Items that are isolated, or whose connected component holds no observed
//! item, are abstentions; the evaluation layer decides how to fill them.

mod hcp;
mod knn;
mod oracle;
mod sfr;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Bounds;
use crate::error::{Error, Result};
use crate::graph::ItemGraph;

pub use hcp::predict_hcp;
pub use knn::predict_knn;
pub use oracle::{l0_oracle, L0Outcome, L0Solution, MAX_ORACLE_CANDIDATES};
pub use sfr::{penalty, penalty_derivative, predict_sfr, sfr_gradient, sfr_objective, smoothed_sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Knn,
    Hcp,
    Sfr,
    L0Oracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Knn => "knn",
            Method::Hcp => "hcp",
            Method::Sfr => "sfr",
            Method::L0Oracle => "l0_oracle",
        }
    }

    /// Runs one of the per-user predictors. The l0 oracle is not a per-user
    /// predictor and is rejected here.
    pub fn predict(
        &self,
        graph: &ItemGraph,
        observed: &BTreeMap<usize, f64>,
        targets: &BTreeSet<usize>,
        config: &SolverConfig,
    ) -> Result<UserRecovery> {
        match self {
            Method::Knn => predict_knn(graph, observed, targets, config.bounds),
            Method::Hcp => predict_hcp(graph, observed, targets, config.bounds),
            Method::Sfr => predict_sfr(graph, observed, targets, config),
            Method::L0Oracle => Err(Error::InvalidArgument(
                "the l0 oracle is an exhaustive search, not a per-user predictor".into(),
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "knn" => Ok(Method::Knn),
            "hcp" => Ok(Method::Hcp),
            "sfr" => Ok(Method::Sfr),
            "l0" | "l0_oracle" => Ok(Method::L0Oracle),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Knobs of the scalar-function-recovery solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Exponent of the sparsity penalty, in (0, 1).
    pub p: f64,
    /// Smoothing scale of the penalty at the final stage.
    pub smoothing_eps: f64,
    /// Iteration budget of each descent run (one start, all of its stages).
    pub max_iterations: usize,
    pub objective_rel_tol: f64,
    /// Trial step of the first iteration; later iterations start from a
    /// spectral estimate.
    pub initial_step: f64,
    pub backtrack_factor: f64,
    /// Magnitude above which an unsmoothed second derivative marks a source.
    pub source_tolerance: f64,
    pub bounds: Bounds,
    /// Also run a descent that shrinks the smoothing scale geometrically from
    /// `continuation_start_eps` down to `smoothing_eps`.
    pub continuation: bool,
    pub continuation_start_eps: f64,
    pub continuation_factor: f64,
    /// Extra starts from the warm start perturbed by uniform noise.
    pub restarts: usize,
    pub restart_noise: f64,
    pub restart_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            smoothing_eps: 1e-6,
            max_iterations: 10_000,
            objective_rel_tol: 1e-8,
            initial_step: 0.1,
            backtrack_factor: 0.5,
            source_tolerance: 1e-3,
            bounds: Bounds { low: 1.0, high: 5.0 },
            continuation: true,
            continuation_start_eps: 1.0,
            continuation_factor: 10.0,
            restarts: 0,
            restart_noise: 0.5,
            restart_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_bounds(bounds: Bounds) -> Self {
        Self {
            bounds,
            ..Self::default()
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("solver config: {what}")));
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad("p must lie in (0, 1)");
        }
        if !(self.smoothing_eps > 0.0) {
            return bad("smoothing_eps must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.objective_rel_tol >= 0.0) {
            return bad("objective_rel_tol must be non-negative");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.source_tolerance >= 0.0) {
            return bad("source_tolerance must be non-negative");
        }
        if !(self.bounds.low < self.bounds.high) {
            return bad("bounds must satisfy low < high");
        }
        if self.continuation && !(self.continuation_start_eps > 0.0 && self.continuation_factor > 1.0) {
            return bad("continuation needs start_eps > 0 and factor > 1");
        }
        if !(self.restart_noise >= 0.0) {
            return bad("restart_noise must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations_used: usize,
    /// Penalty norm `(sum phi)^(1/p)` for SFR, zero for the linear methods.
    pub final_objective: f64,
    pub source_count: usize,
    pub converged: bool,
}

/// One user's constraints and the recovered ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecovery {
    pub method: Method,
    pub observed: BTreeMap<usize, f64>,
    /// Estimates for every predicted target, plus every observed item.
    pub estimates: BTreeMap<usize, f64>,
    pub abstentions: BTreeSet<usize>,
    pub diagnostics: SolverDiagnostics,
}

impl UserRecovery {
    fn new(method: Method, observed: &BTreeMap<usize, f64>) -> Self {
        Self {
            method,
            observed: observed.clone(),
            estimates: observed.clone(),
            abstentions: BTreeSet::new(),
            diagnostics: SolverDiagnostics {
                converged: true,
                ..Default::default()
            },
        }
    }

    pub fn estimate(&self, item: usize) -> Option<f64> {
        self.estimates.get(&item).copied()
    }

    /// Dense vector over `n` items, `None` where nothing is known.
    pub fn rating_vector(&self, n: usize) -> Vec<Option<f64>> {
        (0..n).map(|i| self.estimate(i)).collect()
    }
}

fn check_observed(graph: &ItemGraph, observed: &BTreeMap<usize, f64>, bounds: Bounds) -> Result<()> {
    for (&i, &r) in observed {
        if i >= graph.len() {
            return Err(Error::InvalidArgument(format!("observed item {i} not in graph")));
        }
        if !bounds.contains(r) {
            return Err(Error::InvalidArgument(format!(
                "observed rating {r} on item {i} outside [{}, {}]",
                bounds.low, bounds.high
            )));
        }
    }
    Ok(())
}

/// A connected component restricted to local indices, with observed
/// ratings pinned.
#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub nodes: Vec<usize>,
    /// Row `k` of the local adjacency is `neighbors[offsets[k]..offsets[k + 1]]`.
    pub offsets: Vec<usize>,
    pub neighbors: Vec<(usize, f64)>,
    pub degree: Vec<f64>,
    pub fixed: Vec<Option<f64>>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn adjacent(&self, k: usize) -> &[(usize, f64)] {
        &self.neighbors[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn free(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.fixed[k].is_none()).collect()
    }

    pub fn observed_range(&self) -> (f64, f64) {
        self.fixed
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            })
    }
}

/// Splits the work of one user into the components that need a solve.
///
/// Returns components containing at least one observed item and at least one
/// unobserved target, plus the unobserved targets that must abstain.
pub(crate) fn solvable_components(
    graph: &ItemGraph,
    observed: &BTreeMap<usize, f64>,
    targets: &BTreeSet<usize>,
) -> (Vec<Component>, BTreeSet<usize>) {
    let comp = graph.components();
    let mut has_observed = BTreeSet::new();
    for &i in observed.keys() {
        if !graph.neighbors(i).is_empty() {
            has_observed.insert(comp[i]);
        }
    }
    let mut wanted = BTreeSet::new();
    let mut abstain = BTreeSet::new();
    for &t in targets {
        if observed.contains_key(&t) {
            continue;
        }
        if graph.neighbors(t).is_empty() || !has_observed.contains(&comp[t]) {
            abstain.insert(t);
        } else {
            wanted.insert(comp[t]);
        }
    }

    let mut members: BTreeMap<usize, Vec<usize>> = wanted.iter().map(|&c| (c, Vec::new())).collect();
    for (i, &c) in comp.iter().enumerate() {
        if let Some(list) = members.get_mut(&c) {
            list.push(i);
        }
    }
    let mut local = vec![usize::MAX; graph.len()];
    let components = members
        .into_values()
        .map(|nodes| {
            for (k, &i) in nodes.iter().enumerate() {
                local[i] = k;
            }
            let mut offsets = Vec::with_capacity(nodes.len() + 1);
            let mut neighbors = Vec::new();
            offsets.push(0);
            for &i in &nodes {
                neighbors.extend(graph.neighbors(i).iter().map(|&(j, w)| (local[j], w)));
                offsets.push(neighbors.len());
            }
            let degree = nodes.iter().map(|&i| graph.degree(i)).collect();
            let fixed = nodes.iter().map(|i| observed.get(i).copied()).collect();
            Component {
                nodes,
                offsets,
                neighbors,
                degree,
                fixed,
            }
        })
        .collect();
    (components, abstain)
}
