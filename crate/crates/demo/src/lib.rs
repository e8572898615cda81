//! Browser bindings for exploring rating recovery on the toy graphs.
//!
//! Every entry point takes and returns JSON strings. The `*_json` functions
//! are plain Rust so they can be tested natively; the exported wrappers only
//! convert errors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sfr_core::data::{ladder_toy_26, square_toy, ToyFixture};
use sfr_core::estimators::{l0_oracle, sfr_objective, Method, SolverConfig};
use sfr_core::graph::second_derivative;
use wasm_bindgen::prelude::*;

const ORACLE_MAX_SOURCES: usize = 3;

#[derive(Serialize)]
struct Node {
    label: String,
    x: f64,
    y: f64,
    truth: Option<f64>,
}

#[derive(Serialize)]
struct Layout {
    name: &'static str,
    notes: &'static str,
    low: f64,
    high: f64,
    nodes: Vec<Node>,
    edges: Vec<(usize, usize, f64)>,
    observed: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Recovery {
    method: Method,
    estimates: Vec<Option<f64>>,
    second_derivative: Vec<Option<f64>>,
    sources: Vec<usize>,
    objective: Option<f64>,
    iterations: usize,
    abstentions: Vec<usize>,
}

#[derive(Serialize)]
struct OracleSolution {
    sources: Vec<usize>,
    ratings: Vec<f64>,
    unique: bool,
}

#[derive(Serialize)]
struct Oracle {
    min_source_count: Option<usize>,
    max_sources: usize,
    candidates_checked: usize,
    solutions: Vec<OracleSolution>,
}

#[derive(Deserialize)]
struct Knobs {
    p: f64,
    eps: f64,
}

fn fixture(name: &str) -> Result<ToyFixture, String> {
    match name {
        "square" => Ok(square_toy()),
        "ladder26" => Ok(ladder_toy_26()),
        other => Err(format!("unknown fixture {other:?}")),
    }
}

/// Drawing coordinates, y growing upwards.
fn position(name: &str, i: usize) -> (f64, f64) {
    match name {
        "square" => [(0.0, 1.0), (1.0, 1.0), (0.0, 0.0), (1.0, 0.0)][i],
        _ => match i {
            0 => (1.5, 0.0),
            25 => (1.5, 7.0),
            k => (((k - 1) % 4) as f64, ((k - 1) / 4 + 1) as f64),
        },
    }
}

/// Observations keyed by node label.
fn observations(toy: &ToyFixture, observed_json: &str) -> Result<BTreeMap<usize, f64>, String> {
    let by_label: BTreeMap<String, f64> = serde_json::from_str(observed_json).map_err(|e| e.to_string())?;
    by_label
        .into_iter()
        .map(|(label, r)| {
            let i = toy.graph.index_of(&label).ok_or_else(|| format!("no node {label:?}"))?;
            if !toy.bounds.contains(r) {
                return Err(format!(
                    "{label}: {r} outside [{}, {}]",
                    toy.bounds.low, toy.bounds.high
                ));
            }
            Ok((i, r))
        })
        .collect()
}

pub fn layout_json(name: &str) -> Result<String, String> {
    let toy = fixture(name)?;
    let nodes = (0..toy.graph.len())
        .map(|i| {
            let (x, y) = position(toy.name, i);
            Node {
                label: toy.graph.label(i).to_string(),
                x,
                y,
                truth: toy.ground_truth.as_ref().map(|t| t[i]),
            }
        })
        .collect();
    let layout = Layout {
        name: toy.name,
        notes: toy.notes,
        low: toy.bounds.low,
        high: toy.bounds.high,
        nodes,
        edges: toy.graph.edges().collect(),
        observed: toy
            .observed
            .iter()
            .map(|(&i, &r)| (toy.graph.label(i).to_string(), r))
            .collect(),
    };
    Ok(serde_json::to_string(&layout).unwrap())
}

pub fn recover_json(name: &str, method: &str, observed_json: &str, knobs_json: &str) -> Result<String, String> {
    let toy = fixture(name)?;
    let observed = observations(&toy, observed_json)?;
    let method: Method = method.parse().map_err(|e: sfr_core::Error| e.to_string())?;
    let knobs: Knobs = serde_json::from_str(knobs_json).map_err(|e| e.to_string())?;
    let config = SolverConfig {
        p: knobs.p,
        smoothing_eps: knobs.eps,
        ..SolverConfig::with_bounds(toy.bounds)
    };
    config.validate().map_err(|e| e.to_string())?;
    let n = toy.graph.len();
    let targets: BTreeSet<usize> = (0..n).collect();
    let rec = method
        .predict(&toy.graph, &observed, &targets, &config)
        .map_err(|e| e.to_string())?;
    let estimates = rec.rating_vector(n);
    let complete: Option<Vec<f64>> = estimates.iter().copied().collect();
    let (second, sources, objective) = match &complete {
        Some(r) => {
            let field = second_derivative(&toy.graph, r, config.source_tolerance);
            (
                field.values.clone(),
                field.sources(),
                Some(sfr_objective(&toy.graph, r, &config)),
            )
        }
        None => (vec![None; n], Vec::new(), None),
    };
    let out = Recovery {
        method,
        estimates,
        second_derivative: second,
        sources,
        objective,
        iterations: rec.diagnostics.iterations_used,
        abstentions: rec.abstentions.into_iter().collect(),
    };
    Ok(serde_json::to_string(&out).unwrap())
}

pub fn min_sources_json(name: &str, observed_json: &str) -> Result<String, String> {
    let toy = fixture(name)?;
    let observed = observations(&toy, observed_json)?;
    let outcome = l0_oracle(&toy.graph, &observed, toy.bounds, ORACLE_MAX_SOURCES, 1e-8).map_err(|e| e.to_string())?;
    let out = Oracle {
        min_source_count: outcome.min_source_count,
        max_sources: ORACLE_MAX_SOURCES,
        candidates_checked: outcome.candidates_checked,
        solutions: outcome
            .solutions
            .into_iter()
            .map(|s| OracleSolution {
                sources: s.sources,
                ratings: s.ratings,
                unique: s.unique,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&out).unwrap())
}

/// Nodes, edges, coordinates and default observations of a fixture.
#[wasm_bindgen]
pub fn layout(name: &str) -> Result<String, JsError> {
    layout_json(name).map_err(|e| JsError::new(&e))
}

/// Runs `method` (knn, hcp or sfr) on a fixture. `observed` maps node labels
/// to ratings; `knobs` is `{"p": .., "eps": ..}`.
#[wasm_bindgen]
pub fn recover(name: &str, method: &str, observed: &str, knobs: &str) -> Result<String, JsError> {
    recover_json(name, method, observed, knobs).map_err(|e| JsError::new(&e))
}

/// Every smallest source set that reproduces `observed` exactly.
#[wasm_bindgen]
pub fn min_sources(name: &str, observed: &str) -> Result<String, JsError> {
    min_sources_json(name, observed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const KNOBS: &str = r#"{"p": 0.5, "eps": 1e-6}"#;

    fn default_observed(name: &str) -> String {
        let layout: Value = serde_json::from_str(&layout_json(name).unwrap()).unwrap();
        layout["observed"].to_string()
    }

    #[test]
    fn layouts() {
        let square: Value = serde_json::from_str(&layout_json("square").unwrap()).unwrap();
        assert_eq!(square["nodes"].as_array().unwrap().len(), 4);
        assert_eq!(square["observed"]["A"], 5.0);
        let ladder: Value = serde_json::from_str(&layout_json("ladder26").unwrap()).unwrap();
        let nodes = ladder["nodes"].as_array().unwrap();
        assert_eq!(nodes.len(), 26);
        assert_eq!(ladder["edges"].as_array().unwrap().len(), 34);
        // rows of the ladder carry one rating each
        for node in &nodes[1..25] {
            assert_eq!(node["truth"].as_f64().unwrap(), 2.0 + node["y"].as_f64().unwrap());
        }
        assert!(layout_json("cube").is_err());
    }

    #[test]
    fn ladder_recovery() {
        let out: Value =
            serde_json::from_str(&recover_json("ladder26", "sfr", &default_observed("ladder26"), KNOBS).unwrap())
                .unwrap();
        assert!((out["estimates"][0].as_f64().unwrap() - 2.0).abs() < 1e-2);
        assert!((out["estimates"][25].as_f64().unwrap() - 9.0).abs() < 1e-2);
        assert_eq!(out["sources"], serde_json::json!([0, 25]));

        let hcp: Value =
            serde_json::from_str(&recover_json("ladder26", "hcp", &default_observed("ladder26"), KNOBS).unwrap())
                .unwrap();
        assert!((hcp["estimates"][0].as_f64().unwrap() - 4.4).abs() < 1e-9);
    }

    #[test]
    fn knn_abstains_without_observed_neighbors() {
        let out: Value =
            serde_json::from_str(&recover_json("ladder26", "knn", r#"{"v13": 5}"#, KNOBS).unwrap()).unwrap();
        assert!(!out["abstentions"].as_array().unwrap().is_empty());
        assert!(out["objective"].is_null());
    }

    #[test]
    fn square_oracle_ties() {
        let out: Value =
            serde_json::from_str(&min_sources_json("square", &default_observed("square")).unwrap()).unwrap();
        assert_eq!(out["min_source_count"], 2);
        assert_eq!(out["solutions"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(recover_json("square", "sfr", r#"{"Z": 3}"#, KNOBS).is_err());
        assert!(recover_json("square", "sfr", r#"{"A": 12}"#, KNOBS).is_err());
        assert!(recover_json("square", "magic", r#"{"A": 3}"#, KNOBS).is_err());
        assert!(recover_json("square", "sfr", r#"{"A": 3}"#, r#"{"p": 2, "eps": 1e-6}"#).is_err());
        assert!(recover_json("square", "l0", r#"{"A": 3}"#, KNOBS).is_err());
        assert!(recover_json("square", "sfr", "not json", KNOBS).is_err());
    }
}
