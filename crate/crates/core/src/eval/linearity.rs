use std::io::Write;

use serde::Serialize;

use crate::data::RatingMatrix;
use crate::error::{Error, Result};
use crate::graph::ItemGraph;

pub const BIN_WIDTH: f64 = 0.25;
/// Bin centers run over `[-HISTOGRAM_HALF_RANGE, HISTOGRAM_HALF_RANGE]`.
pub const HISTOGRAM_HALF_RANGE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

/// Histogram of observed second derivatives.
///
/// Bins are centered on multiples of [`BIN_WIDTH`] so that exact zeros land
/// in one bin; the first and last entries are open-ended overflow bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityHistogram {
    pub bins: Vec<HistogramBin>,
    pub samples: u64,
}

impl LinearityHistogram {
    pub fn empty() -> Self {
        let steps = (HISTOGRAM_HALF_RANGE / BIN_WIDTH).round() as i64;
        let half = 0.5 * BIN_WIDTH;
        let mut bins = vec![HistogramBin {
            left: f64::NEG_INFINITY,
            right: -HISTOGRAM_HALF_RANGE - half,
            count: 0,
        }];
        for k in -steps..=steps {
            let center = k as f64 * BIN_WIDTH;
            bins.push(HistogramBin {
                left: center - half,
                right: center + half,
                count: 0,
            });
        }
        bins.push(HistogramBin {
            left: HISTOGRAM_HALF_RANGE + half,
            right: f64::INFINITY,
            count: 0,
        });
        Self { bins, samples: 0 }
    }

    /// Index of the bin centered on zero.
    pub fn zero_bin(&self) -> usize {
        self.bins.len() / 2
    }

    pub fn add(&mut self, x: f64) {
        let steps = (HISTOGRAM_HALF_RANGE / BIN_WIDTH).round() as i64;
        let k = (x / BIN_WIDTH).round() as i64;
        let idx = (k.clamp(-steps - 1, steps + 1) + steps + 1) as usize;
        self.bins[idx].count += 1;
        self.samples += 1;
    }

    pub fn counts(&self) -> Vec<u64> {
        self.bins.iter().map(|b| b.count).collect()
    }

    pub fn modal_bin(&self) -> Option<usize> {
        let max = self.bins.iter().map(|b| b.count).max()?;
        if max == 0 {
            return None;
        }
        self.bins.iter().position(|b| b.count == max)
    }

    /// TSV `bin_left<TAB>bin_right<TAB>count`; nothing is written when empty.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        if self.samples == 0 {
            return Ok(());
        }
        for b in &self.bins {
            writeln!(out, "{}\t{}\t{}", fmt_edge(b.left), fmt_edge(b.right), b.count)?;
        }
        Ok(())
    }
}

fn fmt_edge(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.3}")
    }
}

/// Samples the second derivative of users' observed rating functions.
///
/// A `(user, item)` pair contributes when the user rated the item, at least
/// `coverage` of the item's neighbors, and at least `min_neighbor_ratings`
/// neighbors. The sample is the weighted average over the rated neighbors
/// minus the user's own rating of the item.
pub fn examine_linearity(
    ratings: &RatingMatrix,
    graph: &ItemGraph,
    coverage: f64,
    min_neighbor_ratings: usize,
) -> Result<LinearityHistogram> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "coverage must lie in (0, 1], got {coverage}"
        )));
    }
    if graph.len() != ratings.item_count() {
        return Err(Error::InvalidArgument(
            "graph and ratings disagree on item count".into(),
        ));
    }
    let mut hist = LinearityHistogram::empty();
    for user in 0..ratings.user_count() {
        for &(item, own) in ratings.user_ratings(user) {
            let nbrs = graph.neighbors(item);
            if nbrs.is_empty() {
                continue;
            }
            let (mut rated, mut num, mut den) = (0usize, 0.0, 0.0);
            for &(j, w) in nbrs {
                if let Some(r) = ratings.get(user, j) {
                    rated += 1;
                    num += w * r;
                    den += w;
                }
            }
            if rated < min_neighbor_ratings || (rated as f64) < coverage * nbrs.len() as f64 {
                continue;
            }
            hist.add(num / den - own);
        }
    }
    Ok(hist)
}
