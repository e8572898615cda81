use std::collections::BTreeMap;

use super::Bounds;
use crate::graph::ItemGraph;

/// A small hand-built network with one user's observations.
#[derive(Debug, Clone)]
pub struct ToyFixture {
    pub name: &'static str,
    pub graph: ItemGraph,
    /// Observed ratings keyed by item index.
    pub observed: BTreeMap<usize, f64>,
    /// Full rating vector, when the fixture defines one.
    pub ground_truth: Option<Vec<f64>>,
    pub bounds: Bounds,
    pub notes: &'static str,
}

/// Four items on a 4-cycle A-B-D-C-A with A=5 and C=3 observed.
pub fn square_toy() -> ToyFixture {
    let labels = ["A", "B", "C", "D"].map(String::from).to_vec();
    let edges = [(0, 1, 1.0), (2, 3, 1.0), (0, 2, 1.0), (1, 3, 1.0)];
    let graph = ItemGraph::from_edges(labels, &edges).expect("square toy is a valid graph");
    ToyFixture {
        name: "square",
        graph,
        observed: BTreeMap::from([(0, 5.0), (2, 3.0)]),
        ground_truth: None,
        bounds: Bounds { low: 1.0, high: 9.0 },
        notes: "no unique ground truth: several two-source completions fit A=5, C=3",
    }
}

/// Observed items of [`ladder_toy_26`] as `(node number, rating)`; node
/// numbers are 1-based (`v1`..`v26`).
pub const LADDER_OBSERVED: [(usize, f64); 8] = [
    (6, 4.0),
    (9, 4.0),
    (11, 5.0),
    (12, 5.0),
    (15, 6.0),
    (16, 6.0),
    (18, 7.0),
    (21, 7.0),
];

/// The 26-item ladder: a bottom node rated 2, four columns of six nodes
/// rated 3..8 row by row, rungs between the two middle columns, and a top
/// node rated 9. Only the bottom and top nodes have nonzero second
/// derivative.
pub fn ladder_toy_26() -> ToyFixture {
    let labels: Vec<String> = (1..=26).map(|k| format!("v{k}")).collect();
    let columns: [[usize; 6]; 4] = [
        [2, 6, 10, 14, 18, 22],
        [3, 7, 11, 15, 19, 23],
        [4, 8, 12, 16, 20, 24],
        [5, 9, 13, 17, 21, 25],
    ];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for col in &columns {
        edges.push((1, col[0]));
        edges.extend(col.windows(2).map(|w| (w[0], w[1])));
        edges.push((col[5], 26));
    }
    edges.extend([(3, 4), (7, 8), (11, 12), (15, 16), (19, 20), (23, 24)]);
    let weighted: Vec<(usize, usize, f64)> = edges.iter().map(|&(a, b)| (a - 1, b - 1, 1.0)).collect();
    let graph = ItemGraph::from_edges(labels, &weighted).expect("ladder toy is a valid graph");

    let mut truth = vec![0.0; 26];
    truth[0] = 2.0;
    truth[25] = 9.0;
    for col in &columns {
        for (row, &node) in col.iter().enumerate() {
            truth[node - 1] = 3.0 + row as f64;
        }
    }

    ToyFixture {
        name: "ladder26",
        graph,
        observed: LADDER_OBSERVED.iter().map(|&(v, r)| (v - 1, r)).collect(),
        ground_truth: Some(truth),
        bounds: Bounds { low: 1.0, high: 9.0 },
        notes: "sources at v1 (+1) and v26 (-1); observed ratings span only [4, 7]",
    }
}
