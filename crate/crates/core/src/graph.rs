//! Item-item similarity network and the discrete second-derivative operator.
//!
//! For a rating vector `R` the second derivative at item `i` is the weighted
//! average of `R` over the neighbors of `i` minus `R[i]`, i.e. `(D^-1 W - I) R`,
//! the negative of the random-walk Laplacian.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::data::RatingMatrix;
use crate::error::{Error, Result};

/// Weighted undirected item graph with per-item adjacency sorted by neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemGraph {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    component: Vec<usize>,
}

impl ItemGraph {
    /// Builds a graph from undirected edges `(a, b, weight)`, each listed once.
    pub fn from_edges(labels: Vec<String>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for {n} items"
                )));
            }
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        Self::from_adjacency(labels, adjacency)
    }

    /// Validates and adopts per-item adjacency lists (both directions present).
    pub fn from_adjacency(labels: Vec<String>, mut adjacency: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = labels.len();
        if adjacency.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} adjacency lists for {n} items",
                adjacency.len()
            )));
        }
        for (i, row) in adjacency.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            for pair in row.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(Error::InvalidGraph(format!("duplicate edge {i}-{}", pair[0].0)));
                }
            }
            for &(j, w) in row.iter() {
                if j == i {
                    return Err(Error::InvalidGraph(format!("self-loop on item {i}")));
                }
                if j >= n {
                    return Err(Error::InvalidGraph(format!("neighbor {j} out of range")));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::InvalidGraph(format!("edge {i}-{j} has non-positive weight {w}")));
                }
            }
        }
        for (i, row) in adjacency.iter().enumerate() {
            for &(j, w) in row {
                let back = adjacency[j].binary_search_by_key(&i, |&(k, _)| k);
                match back {
                    Ok(pos) if adjacency[j][pos].1 == w => {}
                    _ => return Err(Error::InvalidGraph(format!("edge {i}-{j} is not symmetric"))),
                }
            }
        }
        let degree = adjacency.iter().map(|row| row.iter().map(|&(_, w)| w).sum()).collect();
        let mut index = HashMap::with_capacity(n);
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate item label {label:?}")));
            }
        }
        let component = label_components(&adjacency);
        Ok(Self {
            labels,
            index,
            adjacency,
            degree,
            component,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degree[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let row = &self.adjacency[i];
        row.binary_search_by_key(&j, |&(k, _)| k).ok().map(|pos| row[pos].1)
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn isolated_count(&self) -> usize {
        self.adjacency.iter().filter(|row| row.is_empty()).count()
    }

    /// Connected-component id per item, numbered in order of lowest member.
    pub fn components(&self) -> &[usize] {
        &self.component
    }

    pub fn component_count(&self) -> usize {
        self.component.iter().max().map_or(0, |&m| m + 1)
    }

    /// Undirected edges `(a, b, w)` with `a < b`, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |&&(j, _)| j > i).map(move |&(j, w)| (i, j, w)))
    }
}

fn label_components(adjacency: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for &(j, _) in &adjacency[i] {
                if comp[j] == usize::MAX {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comp
}
/// Pearson correlation over co-rating users.
///
/// Inputs are `(user, rating)` lists sorted by user. Returns `None` with fewer
/// than `min_support` co-raters or when either co-rated sub-vector is constant.
pub fn pearson_similarity(ratings_i: &[(usize, f64)], ratings_j: &[(usize, f64)], min_support: usize) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let (mut a, mut b) = (0, 0);
    while a < ratings_i.len() && b < ratings_j.len() {
        let (ua, ra) = ratings_i[a];
        let (ub, rb) = ratings_j[b];
        match ua.cmp(&ub) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                xs.push(ra);
                ys.push(rb);
                a += 1;
                b += 1;
            }
        }
    }
    let n = xs.len();
    if n < min_support.max(2) {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Connects items whose Pearson correlation on `train` is strictly above
/// `threshold`, weighting each edge by the correlation.
///
/// Pairs are evaluated independently in parallel; the result does not depend
/// on scheduling.
pub fn build_item_graph(train: &RatingMatrix, threshold: f64, min_support: usize) -> Result<ItemGraph> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if min_support < 2 {
        return Err(Error::InvalidArgument(format!(
            "min_support must be at least 2, got {min_support}"
        )));
    }
    let columns = train.item_columns();
    let n = columns.len();
    let upper: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if columns[i].len() < min_support {
                return Vec::new();
            }
            ((i + 1)..n)
                .filter_map(|j| {
                    pearson_similarity(&columns[i], &columns[j], min_support)
                        .filter(|&c| c > threshold)
                        .map(|c| (j, c))
                })
                .collect()
        })
        .collect();

    let mut adjacency = vec![Vec::new(); n];
    for (i, row) in upper.into_iter().enumerate() {
        for (j, w) in row {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }
    ItemGraph::from_adjacency(train.items().ids().to_vec(), adjacency)
}

/// Per-item second derivative of a rating vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDerivativeField {
    /// `None` for isolated items, where the operator is undefined.
    pub values: Vec<Option<f64>>,
    pub source_tolerance: f64,
}

impl SecondDerivativeField {
    /// Items whose second derivative exceeds the source tolerance in magnitude.
    pub fn sources(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.filter(|x| x.abs() > self.source_tolerance).map(|_| i))
            .collect()
    }

    pub fn is_source(&self, i: usize) -> bool {
        self.values[i].is_some_and(|x| x.abs() > self.source_tolerance)
    }
}

/// Weighted neighbor average minus own value at item `i`; `None` when isolated.
pub fn second_derivative_at(graph: &ItemGraph, ratings: &[f64], i: usize) -> Option<f64> {
    let d = graph.degree(i);
    if graph.neighbors(i).is_empty() {
        return None;
    }
    let acc: f64 = graph.neighbors(i).iter().map(|&(j, w)| w * ratings[j]).sum();
    Some(acc / d - ratings[i])
}

pub fn second_derivative(graph: &ItemGraph, ratings: &[f64], source_tolerance: f64) -> SecondDerivativeField {
    assert_eq!(ratings.len(), graph.len(), "one rating per item");
    let values = (0..graph.len())
        .map(|i| second_derivative_at(graph, ratings, i))
        .collect();
    SecondDerivativeField {
        values,
        source_tolerance,
    }
}

/// Formats a weight with 12 significant digits when that reproduces the
/// value exactly, otherwise with 17.
fn format_weight(w: f64) -> String {
    for sig in [12, 17] {
        let exp = w.abs().log10().floor() as i32;
        let decimals = (sig - 1 - exp).max(0) as usize;
        let text = format!("{w:.decimals$}");
        if sig == 17 || text.parse::<f64>() == Ok(w) {
            return text;
        }
    }
    unreachable!()
}

/// Writes the graph as a TSV edge list: `item_a<TAB>item_b<TAB>weight`, one
/// line per undirected edge. Isolated items are written as a single-field line.
pub fn serialize_graph<W: Write>(graph: &ItemGraph, mut out: W) -> Result<()> {
    for i in 0..graph.len() {
        if graph.neighbors(i).is_empty() {
            writeln!(out, "{}", graph.label(i))?;
        }
        for &(j, w) in graph.neighbors(i) {
            if j > i {
                writeln!(out, "{}\t{}\t{}", graph.label(i), graph.label(j), format_weight(w))?;
            }
        }
    }
    Ok(())
}

/// Parses the format written by [`serialize_graph`]. Items are indexed in
/// first-occurrence order. An edge listed twice must carry the same weight.
pub fn parse_graph<R: BufRead>(source: R) -> Result<ItemGraph> {
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut weights: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    let mut intern = |label: &str, labels: &mut Vec<String>| -> usize {
        *index.entry(label.to_owned()).or_insert_with(|| {
            labels.push(label.to_owned());
            labels.len() - 1
        })
    };

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [item] if !item.is_empty() => {
                intern(item, &mut labels);
            }
            [a, b, w] if !a.is_empty() && !b.is_empty() => {
                let w: f64 = w.parse().map_err(|_| Error::Malformed {
                    line: line_no,
                    message: format!("weight {w:?} is not a number"),
                })?;
                if a == b {
                    return Err(Error::Malformed {
                        line: line_no,
                        message: format!("self-loop on {a:?}"),
                    });
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::Malformed {
                        line: line_no,
                        message: format!("weight {w} must be positive"),
                    });
                }
                let (ia, ib) = (intern(a, &mut labels), intern(b, &mut labels));
                let key = (ia.min(ib), ia.max(ib));
                match weights.get(&key) {
                    Some(&(prev, first)) if prev != w => {
                        return Err(Error::Malformed {
                            line: line_no,
                            message: format!("edge {a}-{b} repeats line {first} with weight {prev} != {w}"),
                        });
                    }
                    Some(_) => {}
                    None => {
                        weights.insert(key, (w, line_no));
                    }
                }
            }
            _ => {
                return Err(Error::Malformed {
                    line: line_no,
                    message: "expected `item_a<TAB>item_b<TAB>weight` or a single item".into(),
                })
            }
        }
    }

    let mut edges: Vec<(usize, usize, f64)> = weights.into_iter().map(|((a, b), (w, _))| (a, b, w)).collect();
    edges.sort_unstable_by_key(|&(a, b, _)| (a, b));
    ItemGraph::from_edges(labels, &edges)
}
